#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "llgs/camera.hpp"
#include "llgs/image.hpp"
#include "llgs/llgim.hpp"
#include "llgs/losses.hpp"
#include "llgs/param_store.hpp"
#include "llgs/scene_model.hpp"
#include "llgs/synth.hpp"

namespace llgs {

struct TrainConfig {
  ModelDims dims;
  int64_t iterations = 8000;
  int warmup_iters = 500;
  double warmup_lr = 1e-3;

  double lr_decoders = 4.0e-1;
  double lr_offsets_intrinsic = 1.0e-3;
  double lr_offsets_transient = 5.0e-3;
  double lr_features = 0.0075;
  double lr_embeddings = 0.05;
  double lr_mlp_opacity = 2e-3;
  double lr_mlp_cov = 4e-3;
  // Exponential decay endpoint multiplier over the run ("initial learning
  // rate" semantics); features stay constant. 1.0 disables decay.
  double lr_final_scale = 0.01;

  LossConfig loss;
  uint64_t seed = 1;
  int views_per_step = 1;
  int threads = 1;
  int64_t preview_interval = 1000;
  bool opacity_cull = false;
  int64_t cull_interval = 500;
  double cull_threshold = 0.005;
  std::string out_dir;       // empty: no checkpoint/log/preview files
  std::string config_echo;   // raw run config echoed into the log header
};

struct DatasetView {
  Camera cam;
  Image c_low;
  std::optional<Image> c_pri;
  std::optional<Image> depth_prior;
};

struct Dataset {
  std::vector<DatasetView> views;
  std::vector<int> train_idx, test_idx;
};

// Reads a bundle directory (cameras.json + views/ + optional priors/ and
// gt/depth/ as the depth-prior stand-in).
Dataset load_dataset(const std::string& dir);
Dataset dataset_from_bundle(const SynthBundle& bundle);

struct IterRecord {
  int64_t iter = 0;
  int view = 0;
  LossBundle losses;
};

struct TrainResult {
  WarmupStats warmup;
  std::vector<IterRecord> log;
  int64_t rollbacks = 0;
  int64_t culled_gaussians = 0;
};

// Per-group learning rates at an iteration (decay + rollback multipliers=1).
GroupLr lr_at_iteration(const TrainConfig& cfg, int64_t iter);

// Warm-up followed by the main optimization loop. Deterministic under
// cfg.seed. Throws NumericalError after 3 consecutive non-finite steps.
TrainResult train(SceneModel& scene, const Dataset& dataset, const TrainConfig& cfg);

}  // namespace llgs
