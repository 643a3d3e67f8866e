#include "llgs/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "llgs/common.hpp"
#include "llgs/rng.hpp"

namespace llgs {

const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kFixed: return "fixed";
    case ParamGroup::kPositions: return "positions";
    case ParamGroup::kOffsetsIntrinsic: return "offsets_intrinsic";
    case ParamGroup::kOffsetsTransient: return "offsets_transient";
    case ParamGroup::kFeatures: return "features";
    case ParamGroup::kEmbeddings: return "embeddings";
    case ParamGroup::kMlpOpacity: return "mlp_opacity";
    case ParamGroup::kMlpCov: return "mlp_cov";
    case ParamGroup::kMlpDecoders: return "mlp_decoders";
  }
  return "?";
}

void ParamStore::add(const std::string& name, double* values, double* grads, size_t size,
                     ParamGroup group) {
  for (const auto& e : entries_)
    if (e.name == name) throw DataError("ParamStore: duplicate entry " + name);
  entries_.push_back(Entry{name, values, grads, size, group});
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw DataError("ParamStore: unknown entry " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.size;
  return n;
}

size_t ParamStore::total_size(ParamGroup g) const {
  size_t n = 0;
  for (const auto& e : entries_)
    if (e.group == g) n += e.size;
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_)
    if (e.grads) std::memset(e.grads, 0, e.size * sizeof(double));
}

bool ParamStore::grads_finite(ParamGroup g) const {
  for (const auto& e : entries_) {
    if (e.group != g || !e.grads) continue;
    for (size_t i = 0; i < e.size; ++i)
      if (!std::isfinite(e.grads[i])) return false;
  }
  return true;
}

std::vector<double> ParamStore::snapshot_values() const {
  std::vector<double> snap;
  snap.reserve(total_size());
  for (const auto& e : entries_) snap.insert(snap.end(), e.values, e.values + e.size);
  return snap;
}

void ParamStore::restore_values(const std::vector<double>& snap) {
  size_t off = 0;
  for (auto& e : entries_) {
    std::memcpy(e.values, snap.data() + off, e.size * sizeof(double));
    off += e.size;
  }
}

AdamState::AdamState(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.size, 0.0);
    v_.emplace_back(e.size, 0.0);
  }
}

void adam_step(ParamStore& store, AdamState& state, const GroupLr& lr) {
  state.step_ += 1;
  double t = static_cast<double>(state.step_);
  double bc1 = 1.0 - std::pow(state.cfg_.beta1, t);
  double bc2 = 1.0 - std::pow(state.cfg_.beta2, t);

  std::array<bool, kNumParamGroups> group_ok;
  group_ok.fill(true);
  for (int g = 0; g < kNumParamGroups; ++g) {
    ParamGroup pg = static_cast<ParamGroup>(g);
    if (pg == ParamGroup::kFixed || lr[g] == 0.0) continue;
    if (!store.grads_finite(pg)) {
      group_ok[g] = false;
      state.skipped_ += 1;
      log_error(std::string("adam_step: non-finite gradients, skipping group ") +
                param_group_name(pg));
    }
  }

  const auto& entries = store.entries();
  for (size_t ei = 0; ei < entries.size(); ++ei) {
    const auto& e = entries[ei];
    int g = static_cast<int>(e.group);
    if (e.group == ParamGroup::kFixed || lr[g] == 0.0 || !group_ok[g]) continue;
    double* m = state.m_[ei].data();
    double* v = state.v_[ei].data();
    for (size_t i = 0; i < e.size; ++i) {
      double grad = e.grads[i];
      m[i] = state.cfg_.beta1 * m[i] + (1.0 - state.cfg_.beta1) * grad;
      v[i] = state.cfg_.beta2 * v[i] + (1.0 - state.cfg_.beta2) * grad * grad;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      e.values[i] -= lr[g] * mhat / (std::sqrt(vhat) + state.cfg_.eps);
    }
  }
  store.zero_grads();
}

FdReport finite_difference_check(const std::function<double()>& loss_fn, ParamStore& store,
                                 const FdOptions& opts) {
  // Collect candidate coordinates (entry index, offset).
  std::vector<std::pair<size_t, size_t>> coords;
  const auto& entries = store.entries();
  for (size_t ei = 0; ei < entries.size(); ++ei) {
    const auto& e = entries[ei];
    if (e.group == ParamGroup::kFixed) continue;
    if (!opts.groups.empty() &&
        std::find(opts.groups.begin(), opts.groups.end(), e.group) == opts.groups.end())
      continue;
    for (size_t i = 0; i < e.size; ++i) coords.emplace_back(ei, i);
  }
  FdReport report;
  if (coords.empty()) return report;

  Rng rng(opts.seed);
  double base = loss_fn();
  for (int s = 0; s < opts.samples; ++s) {
    auto [ei, off] = coords[static_cast<size_t>(rng.uniform_int(static_cast<int>(coords.size())))];
    const auto& e = entries[ei];
    double original = e.values[off];
    double h = opts.step;

    e.values[off] = original + h;
    double fp = loss_fn();
    e.values[off] = original - h;
    double fm = loss_fn();
    e.values[off] = original;

    FdCoordinate c;
    c.name = e.name;
    c.offset = off;
    c.analytic = e.grads[off];

    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      c.non_finite = true;
      report.flagged_non_finite += 1;
      report.flagged.push_back(c);
      continue;
    }
    double fwd = (fp - base) / h;
    double bwd = (base - fm) / h;
    if (std::abs(fwd - bwd) > 0.25 * (std::abs(fwd) + std::abs(bwd)) + 1e-7) {
      // One-sided slopes disagree: non-differentiable point, excluded.
      c.kink = true;
      report.flagged_kinks += 1;
      report.flagged.push_back(c);
      continue;
    }
    c.numeric = (fp - fm) / (2.0 * h);
    c.rel_err = std::abs(c.analytic - c.numeric) / std::max(1e-8, std::abs(c.numeric));
    report.evaluated += 1;
    if (c.rel_err > report.max_rel_err) {
      report.max_rel_err = c.rel_err;
      report.worst = c;
    }
  }
  return report;
}

}  // namespace llgs
