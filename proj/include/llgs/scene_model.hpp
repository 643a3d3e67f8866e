#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "llgs/camera.hpp"
#include "llgs/llgim.hpp"
#include "llgs/mlp.hpp"
#include "llgs/param_store.hpp"

namespace llgs {

struct ModelDims {
  int k = 10;       // neural Gaussians per anchor
  int f_dim = 32;   // anchor feature width (per branch)
  int hidden = 32;  // decoder hidden width
  int r_e = 16;     // per-view embedding width
};

struct MlpVar {
  MlpParams p;  // parameters
  MlpParams g;  // gradient mirror, same shapes
};

// Σ = R diag(s)^2 R^T from positive scales and a unit quaternion (w,x,y,z).
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& scale, const Eigen::Vector4d& quat);
Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q);

// Relative viewing geometry of an anchor: distance and unit direction from
// the camera center. A camera sitting exactly on the anchor degenerates to
// the +Z direction (logged by the caller's decode path).
struct ViewGeom {
  double delta = 0.0;
  Eigen::Vector3d dir = Eigen::Vector3d(0, 0, 1);
  bool degenerate = false;
};
ViewGeom anchor_view_geometry(const Eigen::Vector3d& anchor_pos, const Camera& cam);

// Dual-branch anchor scene. The intrinsic branch decodes opacity, geometry,
// reflectance and illumination from f_d; the transient branch decodes its
// own opacity/geometry and per-view residuals from f_r and embeddings.
struct SceneModel {
  ModelDims dims;
  double voxel_resolution = 1.0;
  int n_anchors = 0;
  int n_views = 0;

  // Parameter arrays (grads in the g_* mirrors).
  Eigen::MatrixXd positions, g_positions;    // 3 x n_anchors
  Eigen::VectorXd anchor_scale;              // l_v, fixed
  Eigen::VectorXd g_anchor_scale;
  Eigen::MatrixXd offsets_d, g_offsets_d;    // 3 x (k*n_anchors)
  Eigen::MatrixXd offsets_r, g_offsets_r;
  Eigen::MatrixXd f_d, g_f_d;                // f_dim x n_anchors
  Eigen::MatrixXd f_r, g_f_r;
  Eigen::MatrixXd embeddings, g_embeddings;  // r_e x n_views

  MlpVar mlp_alpha_d;  // (f_d, delta, dir) -> k opacities, sigmoid
  MlpVar mlp_cov_d;    // (f_d, delta, dir) -> 7k scale/rotation pre-activations
  MlpVar mlp_alpha_r;  // transient twin on f_r
  MlpVar mlp_cov_r;
  MlpVar mlp_refl;     // (f_d, delta) -> 3k reflectance, sigmoid
  MlpVar mlp_illum;    // (f_d, delta, dir) -> k illumination, softplus
  MlpVar mlp_resid;    // (f_r, delta, dir, e_j) -> 3k residuals, tanh
  MlpVar mlp_tone;     // (S_i, f_d) -> 3 enhanced illumination, softplus

  // Per-Gaussian render masks (opacity-floor culling; all on by default).
  std::vector<uint8_t> active_d, active_r;

  static SceneModel create(const AnchorSet& anchors, const ModelDims& dims, int n_views,
                           uint64_t seed);

  int gaussian_count() const { return n_anchors * dims.k; }

  // Fixed declared order; also the checkpoint layout.
  void register_params(ParamStore& store);
  void zero_grads();

  // Decoder input vectors.
  Eigen::VectorXd input_geo_d(int anchor, const ViewGeom& g) const;
  Eigen::VectorXd input_dist_d(int anchor, const ViewGeom& g) const;
  Eigen::VectorXd input_geo_r(int anchor, const ViewGeom& g) const;
  Eigen::VectorXd input_resid(int anchor, const ViewGeom& g, int view_index) const;
  Eigen::VectorXd input_tone(int anchor, double illum) const;

  // Spec-level per-anchor decode operations.
  std::vector<Eigen::Vector3d> decode_positions(int anchor) const;
  std::vector<double> decode_opacity(int anchor, const Camera& cam) const;
  std::vector<Eigen::Vector3d> decode_reflectance(int anchor, const Camera& cam) const;
  std::vector<double> decode_illumination(int anchor, const Camera& cam) const;
  std::vector<Eigen::Vector3d> decode_residual(int anchor, const Camera& cam,
                                               int view_index) const;
  std::vector<Eigen::Vector3d> decode_enhanced_illumination(
      int anchor, const std::vector<double>& illum) const;

  struct ScaleRot {
    Eigen::Vector3d scale;
    Eigen::Vector4d quat;  // normalized
  };
  std::vector<ScaleRot> decode_scale_rot(int anchor, const Camera& cam, bool transient) const;

  // Checkpoint: JSON header + little-endian float32 blob.
  void save(const std::string& path) const;
  static SceneModel load(const std::string& path);
};

// Post-processing of one 7-wide cov head slice into scale + unit quaternion.
// The raw quaternion gets a +1 offset on w so a zero head decodes to identity.
SceneModel::ScaleRot decode_scale_rot_slice(const double* raw7, double l_v);

}  // namespace llgs
