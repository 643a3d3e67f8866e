#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "llgs/camera.hpp"
#include "llgs/image.hpp"
#include "llgs/point_cloud.hpp"

namespace llgs {

// Ray-traced oracle scenes: textured planes and spheres lit by a smooth
// positive illumination field, degraded into low-light views with known
// ground-truth reflectance/illumination/depth.

struct SurfaceSpec {
  enum class Type { kPlane, kSphere };
  Type type = Type::kPlane;
  // plane: rectangle origin + two edge vectors
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d edge_u = Eigen::Vector3d(1, 0, 0);
  Eigen::Vector3d edge_v = Eigen::Vector3d(0, 1, 0);
  // sphere
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
  // albedo texture: solid, or checker between albedo/albedo2
  Eigen::Vector3d albedo = Eigen::Vector3d(0.6, 0.6, 0.6);
  Eigen::Vector3d albedo2 = Eigen::Vector3d(0.3, 0.3, 0.3);
  int checker_cells = 0;  // 0 = solid
};

struct IllumBlob {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double amplitude = 1.0;
  double width = 1.0;
};

struct SynthSpec {
  int width = 64, height = 64;
  int n_views = 6;
  int test_every = 4;  // view i is held out when (i+1) % test_every == 0
  double cam_radius = 3.0;
  double cam_height = 1.2;
  Eigen::Vector3d target = Eigen::Vector3d(0, 0.5, 0);
  double fov_deg = 60.0;
  double darkness = 0.25;       // d in (0,1]
  double noise_sigma = 0.0;     // per-view zero-mean Gaussian
  double color_shift = 0.0;     // per-view uniform channel shift magnitude
  double gamma = 4.0;           // enhancement ratio used for bundled priors
  int cloud_points = 3000;
  double cloud_jitter = 0.0;
  double illum_base = 0.4;
  std::vector<IllumBlob> illum_blobs;
  std::vector<SurfaceSpec> surfaces;
};

// The scene used by tests and the acceptance suite: textured floor plus two
// spheres under a two-blob illumination field.
SynthSpec default_synth_spec();

SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct SynthView {
  Camera cam;
  Image c_low;                // degraded observation
  Image r_gt, s_gt, depth_gt; // ground truth maps (reflectance 3ch, S/depth 1ch)
  Image noise;                // realized noise (3ch)
  Eigen::Vector3d color_shift = Eigen::Vector3d::Zero();
};

struct SynthBundle {
  SynthSpec spec;
  std::vector<SynthView> views;
  std::vector<int> train_idx, test_idx;
  PointCloud cloud;
};

// Deterministic under seed; throws DataError for cameras seeing no geometry.
SynthBundle generate(const SynthSpec& spec, uint64_t seed);

// Default prior provider: gray-world white balance of gamma * C_low,
// clipped to [0,1]. Stands in for an offline restoration model.
Image prior_provider(const Image& c_low, double gamma);

// Directory layout: cloud.ply, cameras.json, views/, priors/, gt/{R,S,depth}/
// (S and depth PNGs are min-max normalized with a JSON sidecar).
void write_bundle(const SynthBundle& bundle, const std::string& dir);

}  // namespace llgs
