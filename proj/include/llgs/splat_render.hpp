#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "llgs/camera.hpp"
#include "llgs/image.hpp"
#include "llgs/scene_model.hpp"

namespace llgs {

// Compositing constants (3DGS conventions where the method leaves them open).
constexpr double kNearPlane = 0.01;
constexpr double kSigmaClamp = 0.99;
constexpr double kTransmitStop = 1e-4;
constexpr double kCovDilation = 0.3;       // px^2 added to the projected covariance diagonal
constexpr double kFrameCullSigmas = 3.0;   // whole-splat frustum cull margin
// Pixel-splat pairs with d^T conic d above this are dropped; the implied
// Gaussian weight (~1e-14) is far below gradient-check resolution, so the
// cutoff does not disturb finite-difference validation.
constexpr double kGaussCutoff = 64.5;

struct Splat2D {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
  double depth = 0.0;
  int gaussian_index = 0;
};

// EWA projection with local-affine Jacobian; returns nullopt when culled
// (behind the near plane or outside the frame by > 3 sigma).
std::optional<Splat2D> project_gaussian(const Camera& cam, const Eigen::Vector3d& mu,
                                        const Eigen::Matrix3d& cov3d, int index = 0);

struct ComponentMaps {
  Image R_map;      // HxWx3 reflectance
  Image S_map;      // HxWx1 illumination
  Image Rs_map;     // HxWx3 transient residual
  Image S_enh_map;  // HxWx3 enhanced illumination
  Image depth_map;  // HxWx1 expected camera-space depth
  Image alpha_map;  // HxWx1 accumulated opacity
};

// Front-to-back compositing of one pixel; splats must be depth-sorted with
// ties broken by ascending gaussian_index. Payloads may be any fixed width.
struct PixelComposite {
  std::vector<double> value;
  double alpha = 0.0;
};
PixelComposite composite(const std::vector<Splat2D>& splats, const std::vector<double>& alphas,
                         const std::vector<std::vector<double>>& payloads,
                         const Eigen::Vector2d& pixel);

struct RenderOptions {
  int threads = 1;
  bool want_enhanced = true;
  bool want_transient = true;  // effective only when a view index is given
};

// ---- Forward cache for the backward pass ----------------------------------

struct AnchorViewCache {
  ViewGeom geom;
  Eigen::VectorXd in_geo_d, in_dist_d, in_geo_r, in_rs;
  MlpCache alpha_d, cov_d, refl, illum;
  MlpCache alpha_r, cov_r, resid;
  bool any_d = false, any_r = false;  // any projected Gaussian in the branch
};

struct GaussFwd {
  int anchor = 0, slot = 0;
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  Eigen::Vector4d quat_raw = Eigen::Vector4d(1, 0, 0, 0);  // +w offset applied
  Eigen::Vector4d quat = Eigen::Vector4d(1, 0, 0, 0);      // normalized
  Eigen::Matrix3d cov3d = Eigen::Matrix3d::Identity();
  double alpha = 0.0;
  bool projected = false;
  Splat2D splat;
  Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();
  Eigen::Vector3d refl = Eigen::Vector3d::Zero();
  double illum = 0.0;
  Eigen::Vector3d senh = Eigen::Vector3d::Zero();
  Eigen::Vector3d resid = Eigen::Vector3d::Zero();
  MlpCache tone;
};

struct PixelContrib {
  int32_t gauss;  // index into gauss_d / gauss_r
  double G;       // Gaussian falloff at the pixel
  double T;       // transmittance before this splat
  uint8_t clamped;
};

struct RenderCache {
  Camera cam;
  int view_index = -1;
  bool enhanced = false, transient = false;
  int W = 0, H = 0;
  std::vector<AnchorViewCache> anchors;
  std::vector<GaussFwd> gauss_d, gauss_r;
  std::vector<std::vector<PixelContrib>> pix_d, pix_r;  // per pixel, front-to-back
};

// Renders all component maps for one camera. The transient branch requires
// view_index (training views); without it Rs_map is zero and embeddings are
// never touched. Pass `cache` to retain intermediates for render_backward.
ComponentMaps render_components(const SceneModel& scene, const Camera& cam,
                                std::optional<int> view_index, const RenderOptions& opts = {},
                                RenderCache* cache = nullptr);

// Per-map adjoints; empty images mean zero. alpha_map is a coverage mask
// downstream and carries no adjoint.
struct MapAdjoints {
  Image dR, dS, dRs, dSenh, dDepth;
};

// Exact reverse-mode pass: accumulates gradients for offsets, positions,
// features, embeddings and every decoder into the scene's gradient mirrors.
void render_backward(SceneModel& scene, const RenderCache& cache, const MapAdjoints& adj);

Image compose_intrinsic(const ComponentMaps& maps);  // R ⊙ S
Image compose_low(const ComponentMaps& maps);        // R ⊙ S + Rs
Image compose_enhanced(const ComponentMaps& maps);   // R ⊙ S̃

}  // namespace llgs
