#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "llgs/splat_render.hpp"
#include "reference_impl.hpp"

using namespace llgs;

namespace {

Camera axis_camera(double f, int size) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  return cam;
}

Splat2D make_splat(double x, double y, double var, double depth, int index) {
  Splat2D s;
  s.mean2d = Eigen::Vector2d(x, y);
  s.cov2d = var * Eigen::Matrix2d::Identity();
  s.depth = depth;
  s.gaussian_index = index;
  return s;
}

}  // namespace

TEST_CASE("project_gaussian: isotropic on-axis covariance follows (f sigma/z)^2 + dilation") {
  Camera cam = axis_camera(50.0, 64);
  double sigma = 0.2, z = 4.0;
  Eigen::Matrix3d cov3d = sigma * sigma * Eigen::Matrix3d::Identity();
  auto s = project_gaussian(cam, Eigen::Vector3d(0, 0, z), cov3d);
  REQUIRE(s.has_value());
  double expect = std::pow(50.0 * sigma / z, 2) + kCovDilation;
  CHECK(s->cov2d(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(s->cov2d(1, 1) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(s->cov2d(0, 1)) < 1e-12);
  CHECK(s->depth == doctest::Approx(z));
  CHECK(s->mean2d.x() == doctest::Approx(32.0));
}

TEST_CASE("project_gaussian: near-plane culling at depth 0.005") {
  Camera cam = axis_camera(50.0, 64);
  Eigen::Matrix3d cov3d = 0.01 * Eigen::Matrix3d::Identity();
  CHECK(!project_gaussian(cam, Eigen::Vector3d(0, 0, 0.005), cov3d).has_value());
  CHECK(project_gaussian(cam, Eigen::Vector3d(0, 0, 0.5), cov3d).has_value());
}

TEST_CASE("project_gaussian: doubling depth quarters the pre-dilation covariance") {
  Camera cam = axis_camera(50.0, 64);
  Eigen::Matrix3d cov3d = 0.04 * Eigen::Matrix3d::Identity();
  auto near = project_gaussian(cam, Eigen::Vector3d(0, 0, 2.0), cov3d);
  auto far = project_gaussian(cam, Eigen::Vector3d(0, 0, 4.0), cov3d);
  REQUIRE(near.has_value());
  REQUIRE(far.has_value());
  double pre_near = near->cov2d(0, 0) - kCovDilation;
  double pre_far = far->cov2d(0, 0) - kCovDilation;
  CHECK(pre_far == doctest::Approx(pre_near / 4.0).epsilon(1e-12));
}

TEST_CASE("project_gaussian: 3-sigma frame cull") {
  Camera cam = axis_camera(50.0, 64);
  Eigen::Matrix3d cov3d = 1e-4 * Eigen::Matrix3d::Identity();
  // Far outside the frame: pixel ~ 50*10/1 = 500 >> 63 + 3 sigma.
  CHECK(!project_gaussian(cam, Eigen::Vector3d(10, 0, 1.0), cov3d).has_value());
}

TEST_CASE("composite: single splat at its mean with clamped opacity") {
  std::vector<Splat2D> splats{make_splat(4, 4, 2.0, 1.0, 0)};
  std::vector<double> alphas{0.999};  // alpha*G = 0.999 > 0.99 -> clamp
  std::vector<std::vector<double>> payloads{{0.7, 0.2, 0.1}};
  auto out = composite(splats, alphas, payloads, Eigen::Vector2d(4, 4));
  CHECK(out.value[0] == doctest::Approx(0.99 * 0.7).epsilon(1e-12));
  CHECK(out.value[1] == doctest::Approx(0.99 * 0.2).epsilon(1e-12));
  CHECK(out.alpha == doctest::Approx(0.99).epsilon(1e-12));
}

TEST_CASE("composite: two coincident splats blend 0.5a + 0.25b") {
  std::vector<Splat2D> splats{make_splat(4, 4, 2.0, 1.0, 0), make_splat(4, 4, 2.0, 2.0, 1)};
  std::vector<double> alphas{0.5, 0.5};
  std::vector<std::vector<double>> payloads{{1.0}, {1.0}};
  auto out = composite(splats, alphas, payloads, Eigen::Vector2d(4, 4));
  CHECK(out.value[0] == doctest::Approx(0.75).epsilon(1e-12));  // 0.5 + 0.5*0.5
  CHECK(out.alpha == doctest::Approx(0.75).epsilon(1e-12));

  std::vector<std::vector<double>> ab{{1.0}, {0.0}};
  auto front = composite(splats, alphas, ab, Eigen::Vector2d(4, 4));
  CHECK(front.value[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("composite: empty splat list gives zero payload and alpha") {
  auto out = composite({}, {}, {}, Eigen::Vector2d(0, 0));
  CHECK(out.alpha == 0.0);
  CHECK(out.value.empty());
}

TEST_CASE("composite matches the naive reference on random stacks") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + rng.uniform_int(8);
    std::vector<Splat2D> splats;
    std::vector<double> alphas;
    std::vector<std::vector<double>> payloads;
    for (int i = 0; i < n; ++i) {
      Splat2D s = make_splat(rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0.5, 4.0),
                             static_cast<double>(i), i);
      s.cov2d(0, 1) = s.cov2d(1, 0) = rng.uniform(-0.3, 0.3);
      splats.push_back(s);
      alphas.push_back(rng.uniform(0.05, 1.0));
      payloads.push_back({rng.uniform(), rng.uniform()});
    }
    Eigen::Vector2d px(rng.uniform(0, 8), rng.uniform(0, 8));
    auto got = composite(splats, alphas, payloads, px);
    double ref_alpha = 0.0;
    auto ref = llgs_test::ref_composite(splats, alphas, payloads, px.x(), px.y(), &ref_alpha);
    for (size_t c = 0; c < ref.size(); ++c)
      CHECK(got.value[c] == doctest::Approx(ref[c]).epsilon(1e-12));
    CHECK(got.alpha == doctest::Approx(ref_alpha).epsilon(1e-12));
  }
}

TEST_CASE("compose_low / compose_enhanced arithmetic") {
  ComponentMaps maps;
  maps.R_map = Image(2, 1, 3);
  maps.S_map = Image(2, 1, 1);
  maps.Rs_map = Image(2, 1, 3);
  maps.S_enh_map = Image(2, 1, 3);

  // pixel 0: R=(0.5,0.5,0.5), S=0.2, Rs=(0.01,0,0) -> (0.11, 0.10, 0.10)
  for (int c = 0; c < 3; ++c) maps.R_map.at(0, 0, c) = 0.5;
  maps.S_map.at(0, 0) = 0.2;
  maps.Rs_map.at(0, 0, 0) = 0.01;
  // pixel 1: S=1, Rs=0 -> C_low = R
  maps.R_map.at(1, 0, 0) = 0.3;
  maps.R_map.at(1, 0, 1) = 0.6;
  maps.R_map.at(1, 0, 2) = 0.9;
  maps.S_map.at(1, 0) = 1.0;

  Image low = compose_low(maps);
  CHECK(low.at(0, 0, 0) == doctest::Approx(0.11).epsilon(1e-12));
  CHECK(low.at(0, 0, 1) == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(low.at(0, 0, 2) == doctest::Approx(0.10).epsilon(1e-12));
  CHECK(low.at(1, 0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(low.at(1, 0, 2) == doctest::Approx(0.9).epsilon(1e-12));

  // R=0 with Rs=r gives exactly r
  ComponentMaps m2 = maps;
  m2.R_map = Image(2, 1, 3, 0.0);
  Image low2 = compose_low(m2);
  CHECK(low2.at(0, 0, 0) == doctest::Approx(0.01).epsilon(1e-15));

  // enhanced: R * S_enh channel-wise; S_enh=(2,1,1) reddens
  for (int c = 0; c < 3; ++c) maps.S_enh_map.at(0, 0, c) = c == 0 ? 2.0 : 1.0;
  Image enh = compose_enhanced(maps);
  CHECK(enh.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(enh.at(0, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("render_components: zero-opacity transient branch renders zero Rs") {
  auto fb = llgs_test::make_fixture();
  fb.scene.mlp_alpha_r.p.set_zero();
  fb.scene.mlp_alpha_r.p.b2.setConstant(-40.0);  // sigmoid ~ 4e-18
  ComponentMaps maps = render_components(fb.scene, fb.cams[0], 0);
  double mx = 0.0;
  for (double v : maps.Rs_map.data) mx = std::max(mx, std::abs(v));
  CHECK(mx < 1e-12);
}

TEST_CASE("render_components: single opaque gaussian composes R*S at ~0.99^2 scale") {
  AnchorSet anchors;
  anchors.voxel_resolution = 1.0;
  anchors.positions = {Eigen::Vector3d(0, 0, 0)};
  anchors.scales = {1.0};
  ModelDims dims;
  dims.k = 1;
  dims.f_dim = 4;
  dims.hidden = 8;
  dims.r_e = 3;
  SceneModel m = SceneModel::create(anchors, dims, 1, 1);
  for (MlpVar* v : {&m.mlp_alpha_d, &m.mlp_cov_d, &m.mlp_refl, &m.mlp_illum, &m.mlp_tone,
                    &m.mlp_alpha_r, &m.mlp_cov_r, &m.mlp_resid})
    v->p.set_zero();
  m.mlp_alpha_d.p.b2.setConstant(40.0);   // alpha ~ 1 -> sigma clamps at 0.99
  m.mlp_refl.p.b2.setConstant(40.0);      // R ~ (1,1,1); use red via bias pattern
  m.mlp_refl.p.b2[1] = -40.0;
  m.mlp_refl.p.b2[2] = -40.0;             // R = (1, 0, 0)
  // S = softplus(b) = 2  ->  b = log(e^2 - 1)
  m.mlp_illum.p.b2.setConstant(std::log(std::exp(2.0) - 1.0));
  m.mlp_cov_d.p.b2.setConstant(0.0);      // scale = softplus(0) ~ 0.69

  Camera cam = axis_camera(15.0, 16);
  cam.t = Eigen::Vector3d(0, 0, 2.5);  // camera 2.5 in front (anchor at origin)
  ComponentMaps maps = render_components(m, cam, std::nullopt);
  // Center pixel: G=1 at the mean -> sigma = 0.99; C = R*S*0.99^2 on red.
  Image low = compose_low(maps);
  int cx = 8, cy = 8;
  CHECK(maps.alpha_map.at(cx, cy) == doctest::Approx(0.99).epsilon(1e-9));
  CHECK(low.at(cx, cy, 0) == doctest::Approx(2.0 * 0.99 * 0.99).epsilon(1e-6));
  CHECK(low.at(cx, cy, 1) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("render_components: missing embedding for transient render throws") {
  auto fb = llgs_test::make_fixture();
  CHECK_THROWS_AS(render_components(fb.scene, fb.cams[0], 7), DataError);
}

TEST_CASE("render_components: golden 16x16 fixture render within 1e-6") {
  auto fb = llgs_test::make_fixture();
  ComponentMaps maps = render_components(fb.scene, fb.cams[0], 0);

  std::string path = std::string(LLGS_TEST_DATA_DIR) + "/golden_render_16x16.bin";
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "golden file missing: ", path);
  auto check_map = [&](const Image& img, const char* name) {
    std::vector<double> ref(img.data.size());
    in.read(reinterpret_cast<char*>(ref.data()),
            static_cast<std::streamsize>(ref.size() * sizeof(double)));
    REQUIRE(in.good());
    double mx = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) mx = std::max(mx, std::abs(ref[i] - img.data[i]));
    INFO("map ", name);
    CHECK(mx < 1e-6);
  };
  check_map(maps.R_map, "R");
  check_map(maps.S_map, "S");
  check_map(maps.Rs_map, "Rs");
  check_map(maps.S_enh_map, "S_enh");
  check_map(maps.depth_map, "depth");
  check_map(maps.alpha_map, "alpha");
}

TEST_CASE("render twice: bit-identical maps; transmittance records well-formed") {
  auto fb = llgs_test::make_fixture();
  RenderCache cache;
  ComponentMaps a = render_components(fb.scene, fb.cams[1], 1, {}, &cache);
  ComponentMaps b = render_components(fb.scene, fb.cams[1], 1);
  CHECK(a.R_map.data == b.R_map.data);
  CHECK(a.Rs_map.data == b.Rs_map.data);
  CHECK(a.alpha_map.data == b.alpha_map.data);

  for (const auto& bucket : cache.pix_d) {
    double prev_T = 1.0;
    for (const auto& c : bucket) {
      CHECK(c.T <= prev_T + 1e-15);
      CHECK(c.T >= 0.0);
      CHECK(c.T <= 1.0);
      prev_T = c.T;
    }
  }
  for (double v : a.alpha_map.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("render threads: forward maps identical for 1 vs 4 workers") {
  auto fb = llgs_test::make_fixture();
  RenderOptions one, four;
  one.threads = 1;
  four.threads = 4;
  ComponentMaps a = render_components(fb.scene, fb.cams[2], 2, one);
  ComponentMaps b = render_components(fb.scene, fb.cams[2], 2, four);
  CHECK(a.R_map.data == b.R_map.data);
  CHECK(a.S_map.data == b.S_map.data);
  CHECK(a.Rs_map.data == b.Rs_map.data);
  CHECK(a.depth_map.data == b.depth_map.data);
}

TEST_CASE("render_backward: zero adjoints produce zero gradients") {
  auto fb = llgs_test::make_fixture();
  fb.scene.zero_grads();
  RenderCache cache;
  render_components(fb.scene, fb.cams[0], 0, {}, &cache);
  MapAdjoints adj;
  adj.dR = Image(16, 16, 3, 0.0);
  adj.dS = Image(16, 16, 1, 0.0);
  adj.dRs = Image(16, 16, 3, 0.0);
  render_backward(fb.scene, cache, adj);
  CHECK(fb.scene.g_positions.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fb.scene.g_offsets_d.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fb.scene.g_f_d.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fb.scene.mlp_refl.g.W1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fb.scene.g_embeddings.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("render_backward: single-splat payload gradient is T1*sigma1*adjoint") {
  // One anchor, one gaussian, adjoint 1 on the red reflectance channel of
  // the center pixel: dL/dR_red must equal the recorded T*sigma there.
  AnchorSet anchors;
  anchors.voxel_resolution = 1.0;
  anchors.positions = {Eigen::Vector3d(0, 0, 0)};
  anchors.scales = {1.0};
  ModelDims dims;
  dims.k = 1;
  dims.f_dim = 4;
  dims.hidden = 8;
  dims.r_e = 3;
  SceneModel m = SceneModel::create(anchors, dims, 1, 3);
  Camera cam = axis_camera(15.0, 16);
  cam.t = Eigen::Vector3d(0, 0, 2.5);

  RenderCache cache;
  render_components(m, cam, std::nullopt, {}, &cache);
  const auto& bucket = cache.pix_d[8 * 16 + 8];
  REQUIRE(bucket.size() == 1);
  double sigma = m.decode_opacity(0, cam)[0] * bucket[0].G;
  double w = bucket[0].T * sigma;

  m.zero_grads();
  MapAdjoints adj;
  adj.dR = Image(16, 16, 3, 0.0);
  adj.dR.at(8, 8, 0) = 1.0;
  render_backward(m, cache, adj);
  // Chain ends at the reflectance head bias: dL/db2[0] = w * sigmoid'(pre).
  double pre = cache.anchors[0].refl.out_pre[0];
  double expect = w * sigmoid(pre) * (1.0 - sigmoid(pre));
  CHECK(m.mlp_refl.g.b2[0] == doctest::Approx(expect).epsilon(1e-12));
}
