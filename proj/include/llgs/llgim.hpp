#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "llgs/camera.hpp"
#include "llgs/image.hpp"
#include "llgs/point_cloud.hpp"

namespace llgs {

struct SceneModel;  // scene_model.hpp

// Voxel-anchored candidate set. Positions are centers of occupied voxels,
// ordered by first point occurrence in the source cloud.
struct AnchorSet {
  std::vector<Eigen::Vector3d> positions;
  std::vector<double> scales;  // per-anchor spatial scale l_v
  double voxel_resolution = 1.0;

  size_t size() const { return positions.size(); }
};

AnchorSet build_anchor_candidates(const PointCloud& cloud, double r);

// min(1, d_min/tau + epsilon); d_min = +inf clamps to 1.
double preservation_probability(double d_min, double tau, double epsilon);

// tau * exp(beta * retained/initial)
double update_threshold(double tau, double beta, size_t retained, size_t initial);

struct PruneConfig {
  double tau0 = 1.0;
  double beta = 1.0;
  double epsilon = 1e-6;
  int rounds = 3;
  uint64_t seed = 0;
  int threads = 1;
};

struct PruneRoundStats {
  double tau_used = 0.0;      // threshold active during the round
  size_t retained = 0;        // anchors surviving the round
  double tau_after = 0.0;     // threshold after the update rule
};

struct PruneResult {
  AnchorSet anchors;
  std::vector<int> kept_indices;  // into the input set, input order preserved
  size_t initial_count = 0;
  std::vector<PruneRoundStats> rounds;
};

// Distance-adaptive stochastic pruning. Retention draws come from a
// counter-based RNG keyed by (seed, round, anchor index), so results are
// identical for any thread count.
PruneResult stochastic_prune(const AnchorSet& anchors, const PruneConfig& cfg);

// anchors.json: positions, scales, and pruning provenance.
void save_anchor_set(const std::string& path, const PruneResult& result,
                     const PruneConfig& cfg);
AnchorSet load_anchor_set(const std::string& path);

// ---- Depth-guided warm-up refinement -------------------------------------

struct WarmupView {
  Camera cam;
  Image depth_prior;  // scale-free; any positive range
};

struct WarmupStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations_run = 0;
  int skipped_view_evals = 0;  // zero-variance views dropped from the mean
};

// Gradient refinement of anchor positions and offsets against per-view
// depth priors (Pearson-correlation loss). Features and decoders stay
// frozen. Defined in warmup.cpp.
WarmupStats depth_warmup_refine(SceneModel& scene, const std::vector<WarmupView>& views,
                                int iters, double lr, int threads = 1);

}  // namespace llgs
