#pragma once

// Deterministic fixtures shared by the unit and acceptance suites.

#include <cmath>
#include <vector>

#include "llgs/camera.hpp"
#include "llgs/image.hpp"
#include "llgs/rng.hpp"
#include "llgs/scene_model.hpp"
#include "llgs/synth.hpp"

namespace llgs_test {

struct FixtureBundle {
  llgs::SceneModel scene;            // 2 anchors x k=4: the 8-Gaussian fixture
  std::vector<llgs::Camera> cams;    // 3 views, 16x16
  std::vector<llgs::Image> c_low;    // analytic targets, independent of the renderer
  std::vector<llgs::Image> c_pri;
};

inline llgs::Camera fixture_camera(double angle, double height, int size = 16) {
  double fov = 55.0 * 3.14159265358979323846 / 180.0;
  double f = 0.5 * size / std::tan(0.5 * fov);
  Eigen::Vector3d eye(2.2 * std::cos(angle), height, 2.2 * std::sin(angle));
  return llgs::make_look_at(eye, Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0, 1, 0), f, f,
                            size * 0.5, size * 0.5, size, size);
}

// Smooth low-light-ish target pattern in (0, 0.9); independent oracle data.
inline llgs::Image fixture_target(int view, int size = 16) {
  llgs::Image img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.10 + 0.04 * c + 0.08 * std::sin(0.7 * x + 1.3 * c + 0.9 * view) *
                                         std::cos(0.5 * y - 0.4 * view);
        img.at(x, y, c) = std::min(0.9, std::max(0.02, v));
      }
  return img;
}

inline FixtureBundle make_fixture(uint64_t seed = 7) {
  using namespace llgs;
  AnchorSet anchors;
  anchors.voxel_resolution = 0.5;
  anchors.positions = {Eigen::Vector3d(-0.35, 0.05, 0.10), Eigen::Vector3d(0.40, -0.10, -0.05)};
  anchors.scales = {0.5, 0.5};

  ModelDims dims;
  dims.k = 4;
  dims.f_dim = 8;
  dims.hidden = 16;
  dims.r_e = 4;

  FixtureBundle fb{SceneModel::create(anchors, dims, 3, seed), {}, {}, {}};
  SceneModel& m = fb.scene;

  Rng rng(mix64(seed ^ 0xf1f17ULL));
  for (int a = 0; a < m.n_anchors; ++a) {
    for (int f = 0; f < dims.f_dim; ++f) {
      m.f_d(f, a) = 0.5 * rng.normal();
      m.f_r(f, a) = 0.5 * rng.normal();
    }
    for (int i = 0; i < dims.k; ++i) {
      for (int c = 0; c < 3; ++c) {
        m.offsets_d(c, a * dims.k + i) = rng.uniform(-0.6, 0.6);
        m.offsets_r(c, a * dims.k + i) = rng.uniform(-0.6, 0.6);
      }
    }
  }
  for (int v = 0; v < m.n_views; ++v)
    for (int e = 0; e < dims.r_e; ++e) m.embeddings(e, v) = 0.5 * rng.normal();
  // Moderate opacities keep sigma clear of the 0.99 clamp and T of the
  // 1e-4 stop, which keeps every composite branch smooth for FD probing.
  m.mlp_alpha_d.p.b2.setConstant(-0.4);
  m.mlp_alpha_r.p.b2.setConstant(-0.6);

  fb.cams = {fixture_camera(0.3, 0.35), fixture_camera(2.4, -0.25), fixture_camera(4.3, 0.55)};
  for (int v = 0; v < 3; ++v) {
    fb.c_low.push_back(fixture_target(v));
    fb.c_pri.push_back(prior_provider(fb.c_low.back(), 4.0));
  }
  return fb;
}

}  // namespace llgs_test
