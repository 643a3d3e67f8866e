#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace llgs {

enum class ParamGroup : int {
  kFixed = 0,  // serialized but never optimized
  kPositions,
  kOffsetsIntrinsic,
  kOffsetsTransient,
  kFeatures,
  kEmbeddings,
  kMlpOpacity,
  kMlpCov,
  kMlpDecoders,
};
constexpr int kNumParamGroups = 9;

const char* param_group_name(ParamGroup g);

// Per-group learning rates, indexed by ParamGroup.
using GroupLr = std::array<double, kNumParamGroups>;

// Registry of externally-owned parameter/gradient buffers. Entry order is
// the declared serialization and iteration order everywhere (checkpoints,
// Adam, finite differences), which keeps runs bit-reproducible.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    double* values = nullptr;
    double* grads = nullptr;
    size_t size = 0;
    ParamGroup group = ParamGroup::kFixed;
  };

  void add(const std::string& name, double* values, double* grads, size_t size,
           ParamGroup group);

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& entry(const std::string& name) const;
  bool has(const std::string& name) const;

  size_t total_size() const;
  size_t total_size(ParamGroup g) const;

  void zero_grads();
  bool grads_finite(ParamGroup g) const;

  // Snapshot/restore of parameter values (loss-spike rollback).
  std::vector<double> snapshot_values() const;
  void restore_values(const std::vector<double>& snap);

 private:
  std::vector<Entry> entries_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(const ParamStore& store, AdamConfig cfg = {});

  int64_t step_count() const { return step_; }
  int64_t skipped_group_events() const { return skipped_; }

  friend void adam_step(ParamStore& store, AdamState& state, const GroupLr& lr);

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;  // per entry
  int64_t step_ = 0;
  int64_t skipped_ = 0;
};

// Bias-corrected Adam over all non-fixed groups with lr != 0. Groups whose
// gradients contain non-finite values are skipped for the step (and
// counted). All gradients are zeroed afterwards.
void adam_step(ParamStore& store, AdamState& state, const GroupLr& lr);

// ---- Finite-difference gradient oracle ------------------------------------

struct FdOptions {
  double step = 1e-4;
  int samples = 200;
  uint64_t seed = 0;
  // When non-empty, only coordinates of entries in these groups are sampled.
  std::vector<ParamGroup> groups;
};

struct FdCoordinate {
  std::string name;
  size_t offset = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool non_finite = false;
  bool kink = false;
};

struct FdReport {
  double max_rel_err = 0.0;
  int evaluated = 0;
  int flagged_kinks = 0;
  int flagged_non_finite = 0;
  FdCoordinate worst;
  std::vector<FdCoordinate> flagged;
};

// Central differences on randomly sampled coordinates. Analytic gradients
// must already be in the store (run the backward pass first); loss_fn must
// be a pure function of the registered parameter values.
// rel_err = |analytic - numeric| / max(1e-8, |numeric|).
FdReport finite_difference_check(const std::function<double()>& loss_fn, ParamStore& store,
                                 const FdOptions& opts);

}  // namespace llgs
