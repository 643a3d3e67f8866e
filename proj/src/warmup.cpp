#include <vector>

#include "llgs/common.hpp"
#include "llgs/llgim.hpp"
#include "llgs/losses.hpp"
#include "llgs/param_store.hpp"
#include "llgs/scene_model.hpp"
#include "llgs/splat_render.hpp"

namespace llgs {

namespace {

constexpr double kConvergedLoss = 1e-10;

}  // namespace

WarmupStats depth_warmup_refine(SceneModel& scene, const std::vector<WarmupView>& views,
                                int iters, double lr, int threads) {
  if (views.empty()) throw DataError("depth_warmup_refine: no views");
  WarmupStats stats;

  ParamStore store;
  scene.register_params(store);
  AdamState adam(store);
  GroupLr lrs{};
  lrs.fill(0.0);
  lrs[static_cast<int>(ParamGroup::kPositions)] = lr;
  lrs[static_cast<int>(ParamGroup::kOffsetsIntrinsic)] = lr;
  lrs[static_cast<int>(ParamGroup::kOffsetsTransient)] = lr;

  RenderOptions opts;
  opts.threads = threads;
  opts.want_enhanced = false;
  opts.want_transient = false;

  auto eval_mean = [&](std::vector<RenderCache>* caches, std::vector<Image>* grads,
                       std::vector<char>* used) -> double {
    double total = 0.0;
    int n_used = 0;
    for (size_t v = 0; v < views.size(); ++v) {
      RenderCache local;
      RenderCache& cache = caches ? (*caches)[v] : local;
      ComponentMaps maps = render_components(scene, views[v].cam, std::nullopt, opts, &cache);
      bool skipped = false;
      Image grad;
      double loss = depth_pcc_loss(maps.depth_map, views[v].depth_prior, &maps.alpha_map,
                                   &skipped, grads ? &grad : nullptr);
      if (skipped) {
        stats.skipped_view_evals += 1;
        if (used) (*used)[v] = 0;
        continue;
      }
      if (used) (*used)[v] = 1;
      if (grads) (*grads)[v] = std::move(grad);
      total += loss;
      n_used += 1;
    }
    return n_used > 0 ? total / n_used : 0.0;
  };

  stats.initial_loss = eval_mean(nullptr, nullptr, nullptr);
  if (stats.initial_loss < kConvergedLoss) {
    stats.final_loss = stats.initial_loss;
    return stats;
  }

  for (int it = 0; it < iters; ++it) {
    scene.zero_grads();
    std::vector<RenderCache> caches(views.size());
    std::vector<Image> grads(views.size());
    std::vector<char> used(views.size(), 0);
    double mean = eval_mean(&caches, &grads, &used);
    if (mean < kConvergedLoss) break;

    int n_used = 0;
    for (char u : used) n_used += u;
    if (n_used == 0) {
      log_info("depth_warmup_refine: all views skipped, stopping");
      break;
    }
    for (size_t v = 0; v < views.size(); ++v) {
      if (!used[v]) continue;
      for (auto& g : grads[v].data) g /= static_cast<double>(n_used);
      MapAdjoints adj;
      adj.dDepth = std::move(grads[v]);
      render_backward(scene, caches[v], adj);
    }
    adam_step(store, adam, lrs);
    stats.iterations_run += 1;
  }

  stats.final_loss = eval_mean(nullptr, nullptr, nullptr);
  return stats;
}

}  // namespace llgs
