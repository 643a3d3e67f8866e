#include "llgs/splat_render.hpp"

#include <algorithm>
#include <cmath>

#include "llgs/common.hpp"
#include "llgs/parallel.hpp"

namespace llgs {

namespace {

// Largest eigenvalue of a symmetric 2x2.
double sym2_max_eig(const Eigen::Matrix2d& m) {
  double mid = 0.5 * (m(0, 0) + m(1, 1));
  double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  double disc = std::sqrt(std::max(0.0, mid * mid - det));
  return mid + disc;
}

Eigen::Matrix<double, 2, 3> pinhole_jacobian(const Camera& cam, const Eigen::Vector3d& pc) {
  double z = pc.z();
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z),
       0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
  return J;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const Camera& cam, const Eigen::Vector3d& mu,
                                        const Eigen::Matrix3d& cov3d, int index) {
  Eigen::Vector3d pc = cam.to_camera(mu);
  if (pc.z() <= kNearPlane) return std::nullopt;

  Splat2D s;
  s.depth = pc.z();
  s.gaussian_index = index;
  s.mean2d.x() = cam.fx * pc.x() / pc.z() + cam.cx;
  s.mean2d.y() = cam.fy * pc.y() / pc.z() + cam.cy;

  Eigen::Matrix<double, 2, 3> M = pinhole_jacobian(cam, pc) * cam.R;
  s.cov2d = M * cov3d * M.transpose() + kCovDilation * Eigen::Matrix2d::Identity();

  double radius = kFrameCullSigmas * std::sqrt(sym2_max_eig(s.cov2d));
  if (s.mean2d.x() < -radius || s.mean2d.x() > cam.width - 1 + radius ||
      s.mean2d.y() < -radius || s.mean2d.y() > cam.height - 1 + radius)
    return std::nullopt;
  return s;
}

PixelComposite composite(const std::vector<Splat2D>& splats, const std::vector<double>& alphas,
                         const std::vector<std::vector<double>>& payloads,
                         const Eigen::Vector2d& pixel) {
  PixelComposite out;
  size_t nch = payloads.empty() ? 0 : payloads[0].size();
  out.value.assign(nch, 0.0);
  double T = 1.0;
  for (size_t i = 0; i < splats.size(); ++i) {
    Eigen::Vector2d d = pixel - splats[i].mean2d;
    Eigen::Vector2d Ad = splats[i].cov2d.inverse() * d;
    double q = d.dot(Ad);
    if (q > kGaussCutoff) continue;
    double G = std::exp(-0.5 * q);
    double sigma = std::min(kSigmaClamp, alphas[i] * G);
    for (size_t c = 0; c < nch; ++c) out.value[c] += T * sigma * payloads[i][c];
    T *= 1.0 - sigma;
    if (T < kTransmitStop) break;
  }
  out.alpha = 1.0 - T;
  return out;
}

// ---- Forward ----------------------------------------------------------------

namespace {

// Decode one branch of an anchor into GaussFwd records.
void decode_anchor(const SceneModel& scene, const Camera& cam, int a, bool enhanced,
                   bool transient, int view_index, AnchorViewCache& ac,
                   std::vector<GaussFwd>& gauss_d, std::vector<GaussFwd>& gauss_r) {
  const int K = scene.dims.k;
  ac.geom = anchor_view_geometry(scene.positions.col(a), cam);
  if (ac.geom.degenerate)
    log_debug("render: camera at anchor " + std::to_string(a) + ", direction set to +Z");

  ac.in_geo_d = scene.input_geo_d(a, ac.geom);
  ac.in_dist_d = scene.input_dist_d(a, ac.geom);
  Eigen::VectorXd alpha = mlp_forward(scene.mlp_alpha_d.p, ac.in_geo_d, Head::kSigmoid, &ac.alpha_d);
  Eigen::VectorXd cov = mlp_forward(scene.mlp_cov_d.p, ac.in_geo_d, Head::kIdentity, &ac.cov_d);
  Eigen::VectorXd refl = mlp_forward(scene.mlp_refl.p, ac.in_dist_d, Head::kSigmoid, &ac.refl);
  Eigen::VectorXd illum = mlp_forward(scene.mlp_illum.p, ac.in_geo_d, Head::kSoftplus, &ac.illum);

  double l_v = scene.anchor_scale[a];
  for (int i = 0; i < K; ++i) {
    int idx = a * K + i;
    GaussFwd& g = gauss_d[idx];
    g.anchor = a;
    g.slot = i;
    if (!scene.active_d[idx]) continue;
    g.mu = scene.positions.col(a) + scene.offsets_d.col(idx) * l_v;
    SceneModel::ScaleRot sr = decode_scale_rot_slice(cov.data() + 7 * i, l_v);
    g.scale = sr.scale;
    g.quat = sr.quat;
    g.quat_raw = Eigen::Vector4d(1.0 + cov[7 * i + 3], cov[7 * i + 4], cov[7 * i + 5],
                                 cov[7 * i + 6]);
    g.cov3d = build_covariance(g.scale, g.quat);
    g.alpha = alpha[i];
    g.refl = refl.segment(3 * i, 3);
    g.illum = illum[i];
    if (enhanced)
      g.senh = mlp_forward(scene.mlp_tone.p, scene.input_tone(a, g.illum), Head::kSoftplus,
                           &g.tone);
    auto splat = project_gaussian(cam, g.mu, g.cov3d, idx);
    if (splat) {
      g.projected = true;
      g.splat = *splat;
      g.conic = g.splat.cov2d.inverse();
      ac.any_d = true;
    }
  }

  if (!transient) return;
  ac.in_geo_r = scene.input_geo_r(a, ac.geom);
  ac.in_rs = scene.input_resid(a, ac.geom, view_index);
  Eigen::VectorXd alpha_r = mlp_forward(scene.mlp_alpha_r.p, ac.in_geo_r, Head::kSigmoid,
                                        &ac.alpha_r);
  Eigen::VectorXd cov_r = mlp_forward(scene.mlp_cov_r.p, ac.in_geo_r, Head::kIdentity, &ac.cov_r);
  Eigen::VectorXd resid = mlp_forward(scene.mlp_resid.p, ac.in_rs, Head::kTanh, &ac.resid);
  for (int i = 0; i < K; ++i) {
    int idx = a * K + i;
    GaussFwd& g = gauss_r[idx];
    g.anchor = a;
    g.slot = i;
    if (!scene.active_r[idx]) continue;
    g.mu = scene.positions.col(a) + scene.offsets_r.col(idx) * l_v;
    SceneModel::ScaleRot sr = decode_scale_rot_slice(cov_r.data() + 7 * i, l_v);
    g.scale = sr.scale;
    g.quat = sr.quat;
    g.quat_raw = Eigen::Vector4d(1.0 + cov_r[7 * i + 3], cov_r[7 * i + 4], cov_r[7 * i + 5],
                                 cov_r[7 * i + 6]);
    g.cov3d = build_covariance(g.scale, g.quat);
    g.alpha = alpha_r[i];
    g.resid = resid.segment(3 * i, 3);
    auto splat = project_gaussian(cam, g.mu, g.cov3d, idx);
    if (splat) {
      g.projected = true;
      g.splat = *splat;
      g.conic = g.splat.cov2d.inverse();
      ac.any_r = true;
    }
  }
}

// Candidate buckets in depth order, then per-pixel front-to-back compositing.
// `payload` fills nch channel values per Gaussian. Contribution records are
// rewritten in place so only actual contributors survive.
void rasterize_branch(const std::vector<GaussFwd>& gauss, int W, int H, int threads, int nch,
                      const std::function<void(const GaussFwd&, double*)>& payload,
                      std::vector<std::vector<PixelContrib>>& pix, std::vector<double>& acc,
                      std::vector<double>& alpha_out) {
  std::vector<int> order;
  order.reserve(gauss.size());
  for (size_t i = 0; i < gauss.size(); ++i)
    if (gauss[i].projected) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (gauss[a].splat.depth != gauss[b].splat.depth)
      return gauss[a].splat.depth < gauss[b].splat.depth;
    return gauss[a].splat.gaussian_index < gauss[b].splat.gaussian_index;
  });

  pix.assign(static_cast<size_t>(W) * H, {});
  for (int idx : order) {
    const GaussFwd& g = gauss[idx];
    double radius = std::sqrt(kGaussCutoff * sym2_max_eig(g.splat.cov2d));
    int x0 = std::max(0, static_cast<int>(std::ceil(g.splat.mean2d.x() - radius)));
    int x1 = std::min(W - 1, static_cast<int>(std::floor(g.splat.mean2d.x() + radius)));
    int y0 = std::max(0, static_cast<int>(std::ceil(g.splat.mean2d.y() - radius)));
    int y1 = std::min(H - 1, static_cast<int>(std::floor(g.splat.mean2d.y() + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        pix[static_cast<size_t>(y) * W + x].push_back({idx, 0.0, 0.0, 0});
  }

  acc.assign(static_cast<size_t>(W) * H * nch, 0.0);
  alpha_out.assign(static_cast<size_t>(W) * H, 0.0);
  parallel_for(static_cast<size_t>(H), threads, [&](size_t yb, size_t ye) {
    std::vector<double> pl(nch);
    for (size_t y = yb; y < ye; ++y) {
      for (int x = 0; x < W; ++x) {
        size_t pi = y * W + x;
        auto& bucket = pix[pi];
        double T = 1.0;
        size_t w = 0;
        for (size_t r = 0; r < bucket.size(); ++r) {
          const GaussFwd& g = gauss[bucket[r].gauss];
          Eigen::Vector2d d(static_cast<double>(x) - g.splat.mean2d.x(),
                            static_cast<double>(y) - g.splat.mean2d.y());
          Eigen::Vector2d Ad = g.conic * d;
          double q = d.dot(Ad);
          if (q > kGaussCutoff) continue;
          double G = std::exp(-0.5 * q);
          double sraw = g.alpha * G;
          bool clamped = sraw > kSigmaClamp;
          double sigma = clamped ? kSigmaClamp : sraw;
          payload(g, pl.data());
          for (int c = 0; c < nch; ++c) acc[pi * nch + c] += T * sigma * pl[c];
          bucket[w++] = {bucket[r].gauss, G, T, static_cast<uint8_t>(clamped)};
          T *= 1.0 - sigma;
          if (T < kTransmitStop) break;
        }
        bucket.resize(w);
        alpha_out[pi] = 1.0 - T;
      }
    }
  });
}

}  // namespace

ComponentMaps render_components(const SceneModel& scene, const Camera& cam,
                                std::optional<int> view_index, const RenderOptions& opts,
                                RenderCache* cache) {
  RenderCache local;
  RenderCache& cx = cache ? *cache : local;
  cx = RenderCache{};
  cx.cam = cam;
  cx.view_index = view_index.value_or(-1);
  cx.enhanced = opts.want_enhanced;
  cx.transient = opts.want_transient && view_index.has_value();
  cx.W = cam.width;
  cx.H = cam.height;
  if (cx.transient && (cx.view_index < 0 || cx.view_index >= scene.n_views))
    throw DataError("render: missing embedding for view " + std::to_string(cx.view_index));

  const int N = scene.n_anchors, K = scene.dims.k;
  cx.anchors.resize(N);
  cx.gauss_d.assign(static_cast<size_t>(N) * K, GaussFwd{});
  if (cx.transient) cx.gauss_r.assign(static_cast<size_t>(N) * K, GaussFwd{});

  parallel_for(static_cast<size_t>(N), opts.threads, [&](size_t ab, size_t ae) {
    for (size_t a = ab; a < ae; ++a)
      decode_anchor(scene, cam, static_cast<int>(a), cx.enhanced, cx.transient, cx.view_index,
                    cx.anchors[a], cx.gauss_d, cx.gauss_r);
  });

  const int W = cx.W, H = cx.H;
  ComponentMaps maps;
  maps.R_map = Image(W, H, 3);
  maps.S_map = Image(W, H, 1);
  maps.Rs_map = Image(W, H, 3);
  maps.S_enh_map = Image(W, H, 3);
  maps.depth_map = Image(W, H, 1);
  maps.alpha_map = Image(W, H, 1);

  // Intrinsic stack: [R(3), S, S_enh(3), depth] under one shared sigma/T chain.
  std::vector<double> acc, alpha;
  rasterize_branch(cx.gauss_d, W, H, opts.threads, 8,
                   [](const GaussFwd& g, double* pl) {
                     pl[0] = g.refl[0];
                     pl[1] = g.refl[1];
                     pl[2] = g.refl[2];
                     pl[3] = g.illum;
                     pl[4] = g.senh[0];
                     pl[5] = g.senh[1];
                     pl[6] = g.senh[2];
                     pl[7] = g.splat.depth;
                   },
                   cx.pix_d, acc, alpha);
  for (size_t p = 0; p < static_cast<size_t>(W) * H; ++p) {
    maps.R_map.data[p * 3 + 0] = acc[p * 8 + 0];
    maps.R_map.data[p * 3 + 1] = acc[p * 8 + 1];
    maps.R_map.data[p * 3 + 2] = acc[p * 8 + 2];
    maps.S_map.data[p] = acc[p * 8 + 3];
    maps.S_enh_map.data[p * 3 + 0] = acc[p * 8 + 4];
    maps.S_enh_map.data[p * 3 + 1] = acc[p * 8 + 5];
    maps.S_enh_map.data[p * 3 + 2] = acc[p * 8 + 6];
    maps.depth_map.data[p] = acc[p * 8 + 7];
    maps.alpha_map.data[p] = alpha[p];
  }

  if (cx.transient) {
    std::vector<double> acc_r, alpha_r;
    rasterize_branch(cx.gauss_r, W, H, opts.threads, 3,
                     [](const GaussFwd& g, double* pl) {
                       pl[0] = g.resid[0];
                       pl[1] = g.resid[1];
                       pl[2] = g.resid[2];
                     },
                     cx.pix_r, acc_r, alpha_r);
    maps.Rs_map.data = std::move(acc_r);
  }
  return maps;
}

// ---- Backward ---------------------------------------------------------------

namespace {

// <dR, dR/dq_c> for the quadratic quaternion-to-rotation map at unit q.
Eigen::Vector4d quat_rotation_backward(const Eigen::Vector4d& q, const Eigen::Matrix3d& dR) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Vector4d dq;
  dq[0] = dR(0, 1) * (-2 * z) + dR(0, 2) * (2 * y) + dR(1, 0) * (2 * z) +
          dR(1, 2) * (-2 * x) + dR(2, 0) * (-2 * y) + dR(2, 1) * (2 * x);
  dq[1] = dR(0, 1) * (2 * y) + dR(0, 2) * (2 * z) + dR(1, 0) * (2 * y) + dR(1, 1) * (-4 * x) +
          dR(1, 2) * (-2 * w) + dR(2, 0) * (2 * z) + dR(2, 1) * (2 * w) + dR(2, 2) * (-4 * x);
  dq[2] = dR(0, 0) * (-4 * y) + dR(0, 1) * (2 * x) + dR(0, 2) * (2 * w) + dR(1, 0) * (2 * x) +
          dR(1, 2) * (2 * z) + dR(2, 0) * (-2 * w) + dR(2, 1) * (2 * z) + dR(2, 2) * (-4 * y);
  dq[3] = dR(0, 0) * (-4 * z) + dR(0, 1) * (-2 * w) + dR(0, 2) * (2 * x) + dR(1, 0) * (2 * w) +
          dR(1, 1) * (-4 * z) + dR(1, 2) * (2 * y) + dR(2, 0) * (2 * x) + dR(2, 1) * (2 * y);
  return dq;
}

struct SplatGrads {
  std::vector<Eigen::Vector2d> dmean;
  std::vector<Eigen::Matrix2d> dcov2;
  std::vector<double> dalpha;
  std::vector<Eigen::Vector3d> dmu;
  std::vector<Eigen::Matrix3d> dcov3;

  explicit SplatGrads(size_t n)
      : dmean(n, Eigen::Vector2d::Zero()),
        dcov2(n, Eigen::Matrix2d::Zero()),
        dalpha(n, 0.0),
        dmu(n, Eigen::Vector3d::Zero()),
        dcov3(n, Eigen::Matrix3d::Zero()) {}
};

// Walks every pixel's contribution list back-to-front, distributing the map
// adjoints onto payload channels and sigma (then alpha / Gaussian shape).
// `payload` and `dpayload` are per-Gaussian channel access/accumulate hooks.
void composite_backward(const std::vector<GaussFwd>& gauss,
                        const std::vector<std::vector<PixelContrib>>& pix, int W, int H, int nch,
                        const std::function<void(const GaussFwd&, double*)>& payload,
                        const std::function<double*(size_t)>& adjoint_at,  // nch values or null
                        const std::function<void(int, const double*, double)>& dpayload,
                        SplatGrads& sg) {
  std::vector<double> pl(nch), S_after(nch), w_adj(nch), dc(nch);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      size_t pi = static_cast<size_t>(y) * W + x;
      const auto& bucket = pix[pi];
      if (bucket.empty()) continue;
      double* gadj = adjoint_at(pi);
      if (!gadj) continue;
      bool all_zero = true;
      for (int c = 0; c < nch; ++c) all_zero &= (gadj[c] == 0.0);
      if (all_zero) continue;

      std::fill(S_after.begin(), S_after.end(), 0.0);
      for (size_t r = bucket.size(); r-- > 0;) {
        const PixelContrib& c = bucket[r];
        const GaussFwd& g = gauss[c.gauss];
        double sigma = c.clamped ? kSigmaClamp : g.alpha * c.G;
        double w = c.T * sigma;
        payload(g, pl.data());

        double dsig = 0.0;
        for (int ch = 0; ch < nch; ++ch) {
          dc[ch] = gadj[ch] * w;
          dsig += gadj[ch] * (c.T * pl[ch] - S_after[ch] / (1.0 - sigma));
        }
        dpayload(c.gauss, dc.data(), w);

        if (!c.clamped) {
          sg.dalpha[c.gauss] += dsig * c.G;
          double dG = dsig * g.alpha;
          Eigen::Vector2d d(static_cast<double>(x) - g.splat.mean2d.x(),
                            static_cast<double>(y) - g.splat.mean2d.y());
          Eigen::Vector2d Ad = g.conic * d;
          sg.dmean[c.gauss] += dG * c.G * Ad;
          sg.dcov2[c.gauss] += (dG * 0.5 * c.G) * (Ad * Ad.transpose());
        }
        for (int ch = 0; ch < nch; ++ch) S_after[ch] += w * pl[ch];
      }
    }
  }
}

// cov2d/mean2d/depth adjoints -> world-space mean and 3D covariance adjoints.
void projection_backward(const Camera& cam, const std::vector<GaussFwd>& gauss,
                         const std::vector<double>& ddepth, SplatGrads& sg) {
  const Eigen::Matrix3d& Wr = cam.R;
  for (size_t i = 0; i < gauss.size(); ++i) {
    const GaussFwd& g = gauss[i];
    if (!g.projected) continue;
    Eigen::Vector3d pc = cam.to_camera(g.mu);
    double z = pc.z(), fx = cam.fx, fy = cam.fy;
    Eigen::Matrix<double, 2, 3> J = pinhole_jacobian(cam, pc);
    Eigen::Matrix<double, 2, 3> M = J * Wr;

    Eigen::Matrix2d G2 = 0.5 * (sg.dcov2[i] + sg.dcov2[i].transpose());
    sg.dcov3[i] += M.transpose() * G2 * M;
    Eigen::Matrix<double, 2, 3> dM = 2.0 * G2 * M * g.cov3d;
    Eigen::Matrix<double, 2, 3> dJ = dM * Wr.transpose();

    Eigen::Vector3d dpc = J.transpose() * sg.dmean[i];
    double z2 = z * z, z3 = z2 * z;
    dpc.x() += dJ(0, 2) * (-fx / z2);
    dpc.y() += dJ(1, 2) * (-fy / z2);
    dpc.z() += dJ(0, 0) * (-fx / z2) + dJ(1, 1) * (-fy / z2) +
               dJ(0, 2) * (2.0 * fx * pc.x() / z3) + dJ(1, 2) * (2.0 * fy * pc.y() / z3);
    if (!ddepth.empty()) dpc.z() += ddepth[i];
    sg.dmu[i] += Wr.transpose() * dpc;
  }
}

// Scale/rotation chain: dcov3 -> (cov head pre-activations).
void covariance_backward(const GaussFwd& g, double l_v, const Eigen::VectorXd& cov_raw, int slot,
                         const Eigen::Matrix3d& dcov3, Eigen::VectorXd& dcov_vec) {
  Eigen::Matrix3d Gs = 0.5 * (dcov3 + dcov3.transpose());
  Eigen::Matrix3d R = quat_to_rotation(g.quat);
  Eigen::Matrix3d D = g.scale.cwiseProduct(g.scale).asDiagonal();
  Eigen::Matrix3d dR = 2.0 * Gs * R * D;
  Eigen::Matrix3d RtGR = R.transpose() * Gs * R;
  Eigen::Vector4d dqhat = quat_rotation_backward(g.quat, dR);
  double n = g.quat_raw.norm();
  Eigen::Vector4d dqraw = (dqhat - g.quat * g.quat.dot(dqhat)) / n;
  for (int j = 0; j < 3; ++j) {
    double ds = 2.0 * g.scale[j] * RtGR(j, j);
    dcov_vec[7 * slot + j] += ds * l_v * softplus_deriv(cov_raw[7 * slot + j]);
  }
  for (int j = 0; j < 4; ++j) dcov_vec[7 * slot + 3 + j] += dqraw[j];
}

}  // namespace

void render_backward(SceneModel& scene, const RenderCache& cache, const MapAdjoints& adj) {
  const int W = cache.W, H = cache.H, K = scene.dims.k, F = scene.dims.f_dim;
  const Camera& cam = cache.cam;

  bool has_dR = !adj.dR.empty(), has_dS = !adj.dS.empty(), has_dSenh = !adj.dSenh.empty(),
       has_dDepth = !adj.dDepth.empty(), has_dRs = !adj.dRs.empty();

  // ---- Intrinsic stack --------------------------------------------------
  size_t n_d = cache.gauss_d.size();
  SplatGrads sg_d(n_d);
  std::vector<Eigen::Vector3d> drefl(n_d, Eigen::Vector3d::Zero());
  std::vector<Eigen::Vector3d> dsenh(n_d, Eigen::Vector3d::Zero());
  std::vector<double> dillum(n_d, 0.0), ddepth(n_d, 0.0);

  if (has_dR || has_dS || has_dSenh || has_dDepth) {
    std::vector<double> gadj(static_cast<size_t>(W) * H * 8, 0.0);
    for (size_t p = 0; p < static_cast<size_t>(W) * H; ++p) {
      if (has_dR)
        for (int c = 0; c < 3; ++c) gadj[p * 8 + c] = adj.dR.data[p * 3 + c];
      if (has_dS) gadj[p * 8 + 3] = adj.dS.data[p];
      if (has_dSenh)
        for (int c = 0; c < 3; ++c) gadj[p * 8 + 4 + c] = adj.dSenh.data[p * 3 + c];
      if (has_dDepth) gadj[p * 8 + 7] = adj.dDepth.data[p];
    }
    composite_backward(
        cache.gauss_d, cache.pix_d, W, H, 8,
        [](const GaussFwd& g, double* pl) {
          pl[0] = g.refl[0];
          pl[1] = g.refl[1];
          pl[2] = g.refl[2];
          pl[3] = g.illum;
          pl[4] = g.senh[0];
          pl[5] = g.senh[1];
          pl[6] = g.senh[2];
          pl[7] = g.splat.depth;
        },
        [&](size_t pi) -> double* { return gadj.data() + pi * 8; },
        [&](int gi, const double* dc, double) {
          drefl[gi] += Eigen::Vector3d(dc[0], dc[1], dc[2]);
          dillum[gi] += dc[3];
          dsenh[gi] += Eigen::Vector3d(dc[4], dc[5], dc[6]);
          ddepth[gi] += dc[7];
        },
        sg_d);
    projection_backward(cam, cache.gauss_d, ddepth, sg_d);
  }

  // ---- Transient stack ----------------------------------------------------
  size_t n_r = cache.gauss_r.size();
  SplatGrads sg_r(n_r);
  std::vector<Eigen::Vector3d> dresid(n_r, Eigen::Vector3d::Zero());
  if (cache.transient && has_dRs && n_r > 0) {
    composite_backward(
        cache.gauss_r, cache.pix_r, W, H, 3,
        [](const GaussFwd& g, double* pl) {
          pl[0] = g.resid[0];
          pl[1] = g.resid[1];
          pl[2] = g.resid[2];
        },
        [&](size_t pi) -> double* { return const_cast<double*>(adj.dRs.data.data()) + pi * 3; },
        [&](int gi, const double* dc, double) {
          dresid[gi] += Eigen::Vector3d(dc[0], dc[1], dc[2]);
        },
        sg_r);
    projection_backward(cam, cache.gauss_r, {}, sg_r);
  }

  // ---- Per-anchor decode backward -----------------------------------------
  for (int a = 0; a < scene.n_anchors; ++a) {
    const AnchorViewCache& ac = cache.anchors[a];
    double l_v = scene.anchor_scale[a];
    double dDelta = 0.0;
    Eigen::Vector3d dDir = Eigen::Vector3d::Zero();

    if (ac.any_d) {
      Eigen::VectorXd dAlphaVec = Eigen::VectorXd::Zero(K);
      Eigen::VectorXd dCovVec = Eigen::VectorXd::Zero(7 * K);
      Eigen::VectorXd dReflVec = Eigen::VectorXd::Zero(3 * K);
      Eigen::VectorXd dIllumVec = Eigen::VectorXd::Zero(K);
      for (int i = 0; i < K; ++i) {
        int idx = a * K + i;
        const GaussFwd& g = cache.gauss_d[idx];
        if (!g.projected) continue;
        covariance_backward(g, l_v, ac.cov_d.out, i, sg_d.dcov3[idx], dCovVec);
        dAlphaVec[i] += sg_d.dalpha[idx];
        dReflVec.segment(3 * i, 3) += drefl[idx];
        double dill = dillum[idx];
        if (cache.enhanced && dsenh[idx].cwiseAbs().sum() != 0.0) {
          Eigen::VectorXd din = mlp_backward(scene.mlp_tone.p, scene.mlp_tone.g,
                                             scene.input_tone(a, g.illum), g.tone,
                                             Head::kSoftplus, dsenh[idx]);
          dill += din[0];
          scene.g_f_d.col(a) += din.tail(F);
        }
        dIllumVec[i] += dill;
        scene.g_positions.col(a) += sg_d.dmu[idx];
        scene.g_offsets_d.col(idx) += l_v * sg_d.dmu[idx];
      }
      Eigen::VectorXd din_geo = mlp_backward(scene.mlp_alpha_d.p, scene.mlp_alpha_d.g,
                                             ac.in_geo_d, ac.alpha_d, Head::kSigmoid, dAlphaVec);
      din_geo += mlp_backward(scene.mlp_cov_d.p, scene.mlp_cov_d.g, ac.in_geo_d, ac.cov_d,
                              Head::kIdentity, dCovVec);
      din_geo += mlp_backward(scene.mlp_illum.p, scene.mlp_illum.g, ac.in_geo_d, ac.illum,
                              Head::kSoftplus, dIllumVec);
      Eigen::VectorXd din_dist = mlp_backward(scene.mlp_refl.p, scene.mlp_refl.g, ac.in_dist_d,
                                              ac.refl, Head::kSigmoid, dReflVec);
      scene.g_f_d.col(a) += din_geo.head(F) + din_dist.head(F);
      dDelta += din_geo[F] + din_dist[F];
      dDir += din_geo.segment(F + 1, 3);
    }

    if (cache.transient && ac.any_r) {
      Eigen::VectorXd dAlphaVec = Eigen::VectorXd::Zero(K);
      Eigen::VectorXd dCovVec = Eigen::VectorXd::Zero(7 * K);
      Eigen::VectorXd dResidVec = Eigen::VectorXd::Zero(3 * K);
      for (int i = 0; i < K; ++i) {
        int idx = a * K + i;
        const GaussFwd& g = cache.gauss_r[idx];
        if (!g.projected) continue;
        covariance_backward(g, l_v, ac.cov_r.out, i, sg_r.dcov3[idx], dCovVec);
        dAlphaVec[i] += sg_r.dalpha[idx];
        dResidVec.segment(3 * i, 3) += dresid[idx];
        scene.g_positions.col(a) += sg_r.dmu[idx];
        scene.g_offsets_r.col(idx) += l_v * sg_r.dmu[idx];
      }
      Eigen::VectorXd din_geo_r = mlp_backward(scene.mlp_alpha_r.p, scene.mlp_alpha_r.g,
                                               ac.in_geo_r, ac.alpha_r, Head::kSigmoid,
                                               dAlphaVec);
      din_geo_r += mlp_backward(scene.mlp_cov_r.p, scene.mlp_cov_r.g, ac.in_geo_r, ac.cov_r,
                                Head::kIdentity, dCovVec);
      Eigen::VectorXd din_rs = mlp_backward(scene.mlp_resid.p, scene.mlp_resid.g, ac.in_rs,
                                            ac.resid, Head::kTanh, dResidVec);
      scene.g_f_r.col(a) += din_geo_r.head(F) + din_rs.head(F);
      dDelta += din_geo_r[F] + din_rs[F];
      dDir += din_geo_r.segment(F + 1, 3) + din_rs.segment(F + 1, 3);
      scene.g_embeddings.col(cache.view_index) += din_rs.tail(scene.dims.r_e);
    }

    // Viewing-geometry chain back to the anchor position.
    if ((dDelta != 0.0 || dDir.cwiseAbs().sum() != 0.0) && !ac.geom.degenerate) {
      const Eigen::Vector3d& u = ac.geom.dir;
      scene.g_positions.col(a) +=
          dDelta * u + (Eigen::Matrix3d::Identity() - u * u.transpose()) * dDir / ac.geom.delta;
    }
  }
}

// ---- Composition ------------------------------------------------------------

Image compose_intrinsic(const ComponentMaps& maps) {
  Image out(maps.R_map.width, maps.R_map.height, 3);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = maps.R_map.at(x, y, c) * maps.S_map.at(x, y);
  return out;
}

Image compose_low(const ComponentMaps& maps) {
  Image out = compose_intrinsic(maps);
  if (!maps.Rs_map.empty())
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += maps.Rs_map.data[i];
  return out;
}

Image compose_enhanced(const ComponentMaps& maps) {
  Image out(maps.R_map.width, maps.R_map.height, 3);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = maps.R_map.data[i] * maps.S_enh_map.data[i];
  return out;
}

}  // namespace llgs
