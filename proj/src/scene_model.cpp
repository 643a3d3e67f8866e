#include "llgs/scene_model.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "llgs/common.hpp"

namespace llgs {

Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& scale, const Eigen::Vector4d& quat) {
  Eigen::Matrix3d R = quat_to_rotation(quat);
  return R * scale.cwiseProduct(scale).asDiagonal() * R.transpose();
}

ViewGeom anchor_view_geometry(const Eigen::Vector3d& anchor_pos, const Camera& cam) {
  ViewGeom g;
  Eigen::Vector3d v = anchor_pos - cam.center();
  g.delta = v.norm();
  if (g.delta > 0.0) {
    g.dir = v / g.delta;
  } else {
    g.dir = Eigen::Vector3d(0, 0, 1);
    g.degenerate = true;
  }
  return g;
}

SceneModel::ScaleRot decode_scale_rot_slice(const double* raw7, double l_v) {
  SceneModel::ScaleRot sr;
  for (int j = 0; j < 3; ++j) sr.scale[j] = l_v * softplus(raw7[j]);
  Eigen::Vector4d q(1.0 + raw7[3], raw7[4], raw7[5], raw7[6]);
  sr.quat = q / q.norm();
  return sr;
}

SceneModel SceneModel::create(const AnchorSet& anchors, const ModelDims& dims, int n_views,
                              uint64_t seed) {
  if (anchors.positions.empty()) throw DataError("SceneModel: empty anchor set");
  if (dims.k < 1 || dims.f_dim < 1 || dims.hidden < 1 || dims.r_e < 1)
    throw DataError("SceneModel: invalid dims");

  SceneModel m;
  m.dims = dims;
  m.voxel_resolution = anchors.voxel_resolution;
  m.n_anchors = static_cast<int>(anchors.size());
  m.n_views = n_views;

  int N = m.n_anchors, K = dims.k, F = dims.f_dim;
  m.positions.resize(3, N);
  for (int a = 0; a < N; ++a) m.positions.col(a) = anchors.positions[a];
  m.anchor_scale.resize(N);
  for (int a = 0; a < N; ++a) m.anchor_scale[a] = anchors.scales[a];
  m.offsets_d = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(K) * N);
  m.offsets_r = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(K) * N);
  m.f_d = Eigen::MatrixXd::Zero(F, N);
  m.f_r = Eigen::MatrixXd::Zero(F, N);
  m.embeddings = Eigen::MatrixXd::Zero(dims.r_e, n_views);

  Rng rng(mix64(seed ^ 0x5ce9ed0de1ULL));
  int geo_in = F + 4, dist_in = F + 1, rs_in = F + 4 + dims.r_e, tone_in = 1 + F;
  m.mlp_alpha_d.p = MlpParams::xavier(geo_in, dims.hidden, K, rng);
  m.mlp_cov_d.p = MlpParams::xavier(geo_in, dims.hidden, 7 * K, rng);
  m.mlp_alpha_r.p = MlpParams::xavier(geo_in, dims.hidden, K, rng);
  m.mlp_cov_r.p = MlpParams::xavier(geo_in, dims.hidden, 7 * K, rng);
  m.mlp_refl.p = MlpParams::xavier(dist_in, dims.hidden, 3 * K, rng);
  m.mlp_illum.p = MlpParams::xavier(geo_in, dims.hidden, K, rng);
  m.mlp_resid.p = MlpParams::xavier(rs_in, dims.hidden, 3 * K, rng);
  m.mlp_tone.p = MlpParams::xavier(tone_in, dims.hidden, 3, rng);

  // Gradient mirrors.
  m.g_positions = Eigen::MatrixXd::Zero(3, N);
  m.g_anchor_scale = Eigen::VectorXd::Zero(N);
  m.g_offsets_d = m.offsets_d;
  m.g_offsets_r = m.offsets_r;
  m.g_f_d = m.f_d;
  m.g_f_r = m.f_r;
  m.g_embeddings = m.embeddings;
  for (MlpVar* v : {&m.mlp_alpha_d, &m.mlp_cov_d, &m.mlp_alpha_r, &m.mlp_cov_r, &m.mlp_refl,
                    &m.mlp_illum, &m.mlp_resid, &m.mlp_tone}) {
    v->g = v->p;
    v->g.set_zero();
  }

  m.active_d.assign(static_cast<size_t>(K) * N, 1);
  m.active_r.assign(static_cast<size_t>(K) * N, 1);
  return m;
}

namespace {

void add_mlp(ParamStore& store, const std::string& prefix, MlpVar& v, ParamGroup group) {
  store.add(prefix + ".W1", v.p.W1.data(), v.g.W1.data(), v.p.W1.size(), group);
  store.add(prefix + ".b1", v.p.b1.data(), v.g.b1.data(), v.p.b1.size(), group);
  store.add(prefix + ".W2", v.p.W2.data(), v.g.W2.data(), v.p.W2.size(), group);
  store.add(prefix + ".b2", v.p.b2.data(), v.g.b2.data(), v.p.b2.size(), group);
}

}  // namespace

void SceneModel::register_params(ParamStore& store) {
  store.add("anchor.positions", positions.data(), g_positions.data(), positions.size(),
            ParamGroup::kPositions);
  store.add("anchor.scale", anchor_scale.data(), g_anchor_scale.data(), anchor_scale.size(),
            ParamGroup::kFixed);
  store.add("anchor.offsets_d", offsets_d.data(), g_offsets_d.data(), offsets_d.size(),
            ParamGroup::kOffsetsIntrinsic);
  store.add("anchor.offsets_r", offsets_r.data(), g_offsets_r.data(), offsets_r.size(),
            ParamGroup::kOffsetsTransient);
  store.add("anchor.f_d", f_d.data(), g_f_d.data(), f_d.size(), ParamGroup::kFeatures);
  store.add("anchor.f_r", f_r.data(), g_f_r.data(), f_r.size(), ParamGroup::kFeatures);
  store.add("embeddings", embeddings.data(), g_embeddings.data(), embeddings.size(),
            ParamGroup::kEmbeddings);
  add_mlp(store, "mlp.alpha_d", mlp_alpha_d, ParamGroup::kMlpOpacity);
  add_mlp(store, "mlp.cov_d", mlp_cov_d, ParamGroup::kMlpCov);
  add_mlp(store, "mlp.alpha_r", mlp_alpha_r, ParamGroup::kMlpOpacity);
  add_mlp(store, "mlp.cov_r", mlp_cov_r, ParamGroup::kMlpCov);
  add_mlp(store, "mlp.refl", mlp_refl, ParamGroup::kMlpDecoders);
  add_mlp(store, "mlp.illum", mlp_illum, ParamGroup::kMlpDecoders);
  add_mlp(store, "mlp.resid", mlp_resid, ParamGroup::kMlpDecoders);
  add_mlp(store, "mlp.tone", mlp_tone, ParamGroup::kMlpDecoders);
}

void SceneModel::zero_grads() {
  g_positions.setZero();
  g_anchor_scale.setZero();
  g_offsets_d.setZero();
  g_offsets_r.setZero();
  g_f_d.setZero();
  g_f_r.setZero();
  g_embeddings.setZero();
  for (MlpVar* v : {&mlp_alpha_d, &mlp_cov_d, &mlp_alpha_r, &mlp_cov_r, &mlp_refl, &mlp_illum,
                    &mlp_resid, &mlp_tone})
    v->g.set_zero();
}

Eigen::VectorXd SceneModel::input_geo_d(int anchor, const ViewGeom& g) const {
  Eigen::VectorXd in(dims.f_dim + 4);
  in.head(dims.f_dim) = f_d.col(anchor);
  in[dims.f_dim] = g.delta;
  in.tail(3) = g.dir;
  return in;
}

Eigen::VectorXd SceneModel::input_dist_d(int anchor, const ViewGeom& g) const {
  Eigen::VectorXd in(dims.f_dim + 1);
  in.head(dims.f_dim) = f_d.col(anchor);
  in[dims.f_dim] = g.delta;
  return in;
}

Eigen::VectorXd SceneModel::input_geo_r(int anchor, const ViewGeom& g) const {
  Eigen::VectorXd in(dims.f_dim + 4);
  in.head(dims.f_dim) = f_r.col(anchor);
  in[dims.f_dim] = g.delta;
  in.tail(3) = g.dir;
  return in;
}

Eigen::VectorXd SceneModel::input_resid(int anchor, const ViewGeom& g, int view_index) const {
  if (view_index < 0 || view_index >= n_views)
    throw DataError("decode_residual: no embedding for view " + std::to_string(view_index));
  Eigen::VectorXd in(dims.f_dim + 4 + dims.r_e);
  in.head(dims.f_dim) = f_r.col(anchor);
  in[dims.f_dim] = g.delta;
  in.segment(dims.f_dim + 1, 3) = g.dir;
  in.tail(dims.r_e) = embeddings.col(view_index);
  return in;
}

Eigen::VectorXd SceneModel::input_tone(int anchor, double illum) const {
  Eigen::VectorXd in(1 + dims.f_dim);
  in[0] = illum;
  in.tail(dims.f_dim) = f_d.col(anchor);
  return in;
}

std::vector<Eigen::Vector3d> SceneModel::decode_positions(int anchor) const {
  std::vector<Eigen::Vector3d> mu(dims.k);
  for (int i = 0; i < dims.k; ++i)
    mu[i] = positions.col(anchor) +
            offsets_d.col(static_cast<Eigen::Index>(anchor) * dims.k + i) * anchor_scale[anchor];
  return mu;
}

std::vector<double> SceneModel::decode_opacity(int anchor, const Camera& cam) const {
  ViewGeom g = anchor_view_geometry(positions.col(anchor), cam);
  if (g.degenerate) log_debug("decode_opacity: camera at anchor center, direction set to +Z");
  Eigen::VectorXd out = mlp_forward(mlp_alpha_d.p, input_geo_d(anchor, g), Head::kSigmoid);
  return {out.data(), out.data() + out.size()};
}

std::vector<Eigen::Vector3d> SceneModel::decode_reflectance(int anchor, const Camera& cam) const {
  ViewGeom g = anchor_view_geometry(positions.col(anchor), cam);
  Eigen::VectorXd out = mlp_forward(mlp_refl.p, input_dist_d(anchor, g), Head::kSigmoid);
  std::vector<Eigen::Vector3d> r(dims.k);
  for (int i = 0; i < dims.k; ++i) r[i] = out.segment(3 * i, 3);
  return r;
}

std::vector<double> SceneModel::decode_illumination(int anchor, const Camera& cam) const {
  ViewGeom g = anchor_view_geometry(positions.col(anchor), cam);
  Eigen::VectorXd out = mlp_forward(mlp_illum.p, input_geo_d(anchor, g), Head::kSoftplus);
  return {out.data(), out.data() + out.size()};
}

std::vector<Eigen::Vector3d> SceneModel::decode_residual(int anchor, const Camera& cam,
                                                         int view_index) const {
  ViewGeom g = anchor_view_geometry(positions.col(anchor), cam);
  Eigen::VectorXd out = mlp_forward(mlp_resid.p, input_resid(anchor, g, view_index), Head::kTanh);
  std::vector<Eigen::Vector3d> r(dims.k);
  for (int i = 0; i < dims.k; ++i) r[i] = out.segment(3 * i, 3);
  return r;
}

std::vector<Eigen::Vector3d> SceneModel::decode_enhanced_illumination(
    int anchor, const std::vector<double>& illum) const {
  std::vector<Eigen::Vector3d> out(illum.size());
  for (size_t i = 0; i < illum.size(); ++i)
    out[i] = mlp_forward(mlp_tone.p, input_tone(anchor, illum[i]), Head::kSoftplus);
  return out;
}

std::vector<SceneModel::ScaleRot> SceneModel::decode_scale_rot(int anchor, const Camera& cam,
                                                               bool transient) const {
  ViewGeom g = anchor_view_geometry(positions.col(anchor), cam);
  Eigen::VectorXd out =
      transient ? mlp_forward(mlp_cov_r.p, input_geo_r(anchor, g), Head::kIdentity)
                : mlp_forward(mlp_cov_d.p, input_geo_d(anchor, g), Head::kIdentity);
  std::vector<ScaleRot> sr(dims.k);
  for (int i = 0; i < dims.k; ++i)
    sr[i] = decode_scale_rot_slice(out.data() + 7 * i, anchor_scale[anchor]);
  return sr;
}

// ---- Checkpoint I/O --------------------------------------------------------

void SceneModel::save(const std::string& path) const {
  ParamStore store;
  const_cast<SceneModel*>(this)->register_params(store);

  nlohmann::json header;
  header["format"] = "llgs-checkpoint";
  header["version"] = 1;
  header["k"] = dims.k;
  header["f_dim"] = dims.f_dim;
  header["hidden"] = dims.hidden;
  header["r_e"] = dims.r_e;
  header["n_anchors"] = n_anchors;
  header["n_views"] = n_views;
  header["voxel_resolution"] = voxel_resolution;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& e : store.entries())
    arrays.push_back({{"name", e.name}, {"size", e.size}});
  header["arrays"] = arrays;
  bool any_masked = false;
  for (uint8_t v : active_d) any_masked |= (v == 0);
  for (uint8_t v : active_r) any_masked |= (v == 0);
  if (any_masked) {
    header["mask_d"] = active_d;
    header["mask_r"] = active_r;
  }

  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<float> buf;
  for (const auto& e : store.entries()) {
    buf.resize(e.size);
    for (size_t i = 0; i < e.size; ++i) buf[i] = static_cast<float>(e.values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("checkpoint write failed: " + path);
}

SceneModel SceneModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1ull << 30)) throw DataError("checkpoint: bad header length");
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint header parse: " + std::string(e.what()));
  }
  if (header.value("format", "") != "llgs-checkpoint")
    throw DataError("not a llgs checkpoint: " + path);

  ModelDims dims;
  dims.k = header.at("k").get<int>();
  dims.f_dim = header.at("f_dim").get<int>();
  dims.hidden = header.at("hidden").get<int>();
  dims.r_e = header.at("r_e").get<int>();
  int n_anchors = header.at("n_anchors").get<int>();
  int n_views = header.at("n_views").get<int>();

  AnchorSet anchors;
  anchors.voxel_resolution = header.at("voxel_resolution").get<double>();
  anchors.positions.assign(n_anchors, Eigen::Vector3d::Zero());
  anchors.scales.assign(n_anchors, 1.0);
  SceneModel m = SceneModel::create(anchors, dims, n_views, /*seed=*/0);
  m.voxel_resolution = anchors.voxel_resolution;

  ParamStore store;
  m.register_params(store);
  for (const auto& a : header.at("arrays")) {
    const std::string name = a.at("name").get<std::string>();
    size_t size = a.at("size").get<size_t>();
    const auto& e = store.entry(name);
    if (e.size != size) throw DataError("checkpoint: size mismatch for " + name);
    std::vector<float> buf(size);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(size * sizeof(float)));
    if (!in) throw DataError("checkpoint: truncated array " + name);
    for (size_t i = 0; i < size; ++i) e.values[i] = static_cast<double>(buf[i]);
  }
  if (header.contains("mask_d")) m.active_d = header["mask_d"].get<std::vector<uint8_t>>();
  if (header.contains("mask_r")) m.active_r = header["mask_r"].get<std::vector<uint8_t>>();
  return m;
}

}  // namespace llgs
