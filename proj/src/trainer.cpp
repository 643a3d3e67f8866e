#include "llgs/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "llgs/common.hpp"
#include "llgs/png_io.hpp"
#include "llgs/rng.hpp"
#include "llgs/splat_render.hpp"

namespace llgs {

namespace fs = std::filesystem;

Dataset load_dataset(const std::string& dir) {
  std::ifstream cf(dir + "/cameras.json");
  if (!cf) throw DataError("cannot open " + dir + "/cameras.json");
  nlohmann::json cams;
  try {
    cf >> cams;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cameras.json parse: " + std::string(e.what()));
  }

  Dataset ds;
  const auto& arr = cams.at("cameras");
  char name[64];
  for (size_t i = 0; i < arr.size(); ++i) {
    DatasetView v;
    v.cam = camera_from_json(arr[i]);
    std::snprintf(name, sizeof(name), "view_%03zu.png", i);
    v.c_low = read_png(dir + "/views/" + name);
    std::string prior_path = dir + "/priors/" + name;
    if (fs::exists(prior_path)) v.c_pri = read_png(prior_path);
    std::string depth_path = dir + "/gt/depth/" + name;
    if (fs::exists(depth_path)) v.depth_prior = read_png(depth_path);
    ds.views.push_back(std::move(v));
  }
  if (cams.contains("split")) {
    ds.train_idx = cams["split"].value("train", std::vector<int>{});
    ds.test_idx = cams["split"].value("test", std::vector<int>{});
  }
  if (ds.train_idx.empty()) {
    for (size_t i = 0; i < ds.views.size(); ++i) ds.train_idx.push_back(static_cast<int>(i));
  }
  return ds;
}

Dataset dataset_from_bundle(const SynthBundle& bundle) {
  Dataset ds;
  for (const auto& v : bundle.views) {
    DatasetView dv;
    dv.cam = v.cam;
    dv.c_low = v.c_low;
    dv.c_pri = prior_provider(v.c_low, bundle.spec.gamma);
    dv.depth_prior = v.depth_gt;
    ds.views.push_back(std::move(dv));
  }
  ds.train_idx = bundle.train_idx;
  ds.test_idx = bundle.test_idx;
  return ds;
}

GroupLr lr_at_iteration(const TrainConfig& cfg, int64_t iter) {
  GroupLr lr{};
  lr.fill(0.0);
  double span = static_cast<double>(std::max<int64_t>(1, cfg.iterations - 1));
  double decay = cfg.lr_final_scale == 1.0
                     ? 1.0
                     : std::pow(cfg.lr_final_scale, static_cast<double>(iter) / span);
  lr[static_cast<int>(ParamGroup::kOffsetsIntrinsic)] = cfg.lr_offsets_intrinsic * decay;
  lr[static_cast<int>(ParamGroup::kOffsetsTransient)] = cfg.lr_offsets_transient * decay;
  lr[static_cast<int>(ParamGroup::kFeatures)] = cfg.lr_features;  // constant
  lr[static_cast<int>(ParamGroup::kEmbeddings)] = cfg.lr_embeddings * decay;
  lr[static_cast<int>(ParamGroup::kMlpOpacity)] = cfg.lr_mlp_opacity * decay;
  lr[static_cast<int>(ParamGroup::kMlpCov)] = cfg.lr_mlp_cov * decay;
  lr[static_cast<int>(ParamGroup::kMlpDecoders)] = cfg.lr_decoders * decay;
  return lr;
}

namespace {

void write_previews(const SceneModel& scene, const Dataset& ds, const TrainConfig& cfg,
                    int64_t iter) {
  if (cfg.out_dir.empty() || ds.train_idx.empty()) return;
  fs::create_directories(cfg.out_dir + "/previews");
  int view = ds.train_idx[0];
  RenderOptions opts;
  opts.threads = cfg.threads;
  ComponentMaps maps = render_components(scene, ds.views[view].cam, view, opts);
  char name[96];
  std::snprintf(name, sizeof(name), "/previews/iter_%06lld_low.png",
                static_cast<long long>(iter));
  write_png(cfg.out_dir + name, compose_low(maps));
  std::snprintf(name, sizeof(name), "/previews/iter_%06lld_enhanced.png",
                static_cast<long long>(iter));
  write_png(cfg.out_dir + name, compose_enhanced(maps));
}

int64_t cull_low_opacity(SceneModel& scene, const Dataset& ds, const TrainConfig& cfg) {
  int64_t culled = 0;
  int K = scene.dims.k;
  std::vector<double> mean_d(scene.gaussian_count(), 0.0), mean_r(scene.gaussian_count(), 0.0);
  for (int vi : ds.train_idx) {
    const Camera& cam = ds.views[vi].cam;
    for (int a = 0; a < scene.n_anchors; ++a) {
      ViewGeom g = anchor_view_geometry(scene.positions.col(a), cam);
      Eigen::VectorXd ad =
          mlp_forward(scene.mlp_alpha_d.p, scene.input_geo_d(a, g), Head::kSigmoid);
      Eigen::VectorXd ar =
          mlp_forward(scene.mlp_alpha_r.p, scene.input_geo_r(a, g), Head::kSigmoid);
      for (int i = 0; i < K; ++i) {
        mean_d[a * K + i] += ad[i];
        mean_r[a * K + i] += ar[i];
      }
    }
  }
  double n = static_cast<double>(ds.train_idx.size());
  for (int i = 0; i < scene.gaussian_count(); ++i) {
    if (scene.active_d[i] && mean_d[i] / n < cfg.cull_threshold) {
      scene.active_d[i] = 0;
      ++culled;
    }
    if (scene.active_r[i] && mean_r[i] / n < cfg.cull_threshold) {
      scene.active_r[i] = 0;
      ++culled;
    }
  }
  return culled;
}

}  // namespace

TrainResult train(SceneModel& scene, const Dataset& dataset, const TrainConfig& cfg) {
  TrainResult result;
  if (dataset.train_idx.empty()) throw DataError("train: no training views");
  if (scene.n_views != static_cast<int>(dataset.views.size()))
    throw DataError("train: scene embeddings do not match dataset view count");

  // Materialize priors for training views that lack one.
  std::vector<Image> priors(dataset.views.size());
  for (int vi : dataset.train_idx) {
    priors[vi] = dataset.views[vi].c_pri ? *dataset.views[vi].c_pri
                                         : prior_provider(dataset.views[vi].c_low, cfg.loss.gamma);
  }

  // Warm-up on views carrying a depth prior.
  std::vector<WarmupView> wviews;
  for (int vi : dataset.train_idx)
    if (dataset.views[vi].depth_prior)
      wviews.push_back({dataset.views[vi].cam, *dataset.views[vi].depth_prior});
  if (cfg.warmup_iters > 0 && !wviews.empty()) {
    result.warmup = depth_warmup_refine(scene, wviews, cfg.warmup_iters, cfg.warmup_lr,
                                        cfg.threads);
    log_info("warm-up: depth loss " + std::to_string(result.warmup.initial_loss) + " -> " +
             std::to_string(result.warmup.final_loss));
  }

  ParamStore store;
  scene.register_params(store);
  AdamState adam(store);

  std::ofstream log_file;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log_file.open(cfg.out_dir + "/train_log.jsonl");
    if (!log_file) throw DataError("cannot write train log in " + cfg.out_dir);
    nlohmann::json header;
    header["config"] = cfg.config_echo;
    header["seed"] = cfg.seed;
    header["iterations"] = cfg.iterations;
    log_file << header.dump() << "\n";
  }

  GroupLr rollback_mult{};
  rollback_mult.fill(1.0);
  int consecutive_failures = 0;

  std::vector<int> order;
  size_t cursor = 0;
  uint64_t epoch = 0;
  auto next_view = [&]() -> int {
    if (cursor >= order.size()) {
      order = dataset.train_idx;
      Rng rng(mix64(cfg.seed ^ mix64(0xe90c4 + epoch)));
      rng.shuffle(order);
      cursor = 0;
      ++epoch;
    }
    return order[cursor++];
  };

  RenderOptions opts;
  opts.threads = cfg.threads;

  for (int64_t it = 0; it < cfg.iterations; ++it) {
    LossWeights weights = lambda_schedule(it, cfg.loss.schedule);
    opts.want_enhanced = weights.enh != 0.0;

    std::vector<double> snapshot = store.snapshot_values();
    scene.zero_grads();

    LossBundle mean_bundle;
    int first_view = -1;
    bool finite = true;
    double inv = 1.0 / cfg.views_per_step;
    for (int s = 0; s < cfg.views_per_step; ++s) {
      int view = next_view();
      if (first_view < 0) first_view = view;
      RenderCache cache;
      ComponentMaps maps = render_components(scene, dataset.views[view].cam, view, opts, &cache);
      TotalLossGrads grads;
      LossBundle bundle =
          total_loss(maps, dataset.views[view].c_low, priors[view], it, cfg.loss, &grads);
      if (!std::isfinite(bundle.total)) {
        finite = false;
        break;
      }
      MapAdjoints adj;
      adj.dR = std::move(grads.dR);
      adj.dS = std::move(grads.dS);
      adj.dRs = std::move(grads.dRs);
      if (opts.want_enhanced) adj.dSenh = std::move(grads.dSenh);
      for (Image* img : {&adj.dR, &adj.dS, &adj.dRs, &adj.dSenh})
        for (auto& v : img->data) v *= inv;
      render_backward(scene, cache, adj);

      mean_bundle.recon += bundle.recon * inv;
      mean_bundle.ill += bundle.ill * inv;
      mean_bundle.re += bundle.re * inv;
      mean_bundle.enh += bundle.enh * inv;
      mean_bundle.total += bundle.total * inv;
      mean_bundle.weights = bundle.weights;
    }

    if (finite) {
      // A non-finite gradient group is handled by adam_step (group skipped);
      // detect it here as well so the rollback policy can react.
      for (int g = 1; g < kNumParamGroups; ++g)
        if (!store.grads_finite(static_cast<ParamGroup>(g))) finite = false;
    }

    if (!finite) {
      store.restore_values(snapshot);
      result.rollbacks += 1;
      consecutive_failures += 1;
      for (int g = 1; g < kNumParamGroups; ++g) {
        if (!store.grads_finite(static_cast<ParamGroup>(g))) rollback_mult[g] *= 0.5;
      }
      // Loss itself non-finite without a culprit group: halve everything once.
      bool any_bad_group = false;
      for (int g = 1; g < kNumParamGroups; ++g)
        any_bad_group |= !store.grads_finite(static_cast<ParamGroup>(g));
      if (!any_bad_group)
        for (auto& m : rollback_mult) m *= 0.5;
      store.zero_grads();
      log_error("train: non-finite loss at iteration " + std::to_string(it) +
                ", rolled back (lr halved)");
      if (consecutive_failures >= 3)
        throw NumericalError("train: aborted after 3 consecutive non-finite iterations");
      // Logged as a rollback, not a training record; iteration repeats.
      --it;
      continue;
    }
    consecutive_failures = 0;

    GroupLr lr = lr_at_iteration(cfg, it);
    for (int g = 0; g < kNumParamGroups; ++g) lr[g] *= rollback_mult[g];
    adam_step(store, adam, lr);

    IterRecord rec;
    rec.iter = it;
    rec.view = first_view;
    rec.losses = mean_bundle;
    result.log.push_back(rec);
    if (log_file) {
      nlohmann::json j;
      j["iter"] = it;
      j["view"] = first_view;
      j["recon"] = mean_bundle.recon;
      j["ill"] = mean_bundle.ill;
      j["re"] = mean_bundle.re;
      j["enh"] = mean_bundle.enh;
      j["total"] = mean_bundle.total;
      j["lambda_re"] = weights.re;
      j["lambda_enh"] = weights.enh;
      log_file << j.dump() << "\n";
    }

    if (cfg.preview_interval > 0 && !cfg.out_dir.empty() && (it + 1) % cfg.preview_interval == 0)
      write_previews(scene, dataset, cfg, it + 1);
    if (cfg.opacity_cull && cfg.cull_interval > 0 && (it + 1) % cfg.cull_interval == 0) {
      int64_t culled = cull_low_opacity(scene, dataset, cfg);
      result.culled_gaussians += culled;
      if (culled > 0)
        log_info("train: culled " + std::to_string(culled) + " low-opacity gaussians");
    }
  }

  if (!cfg.out_dir.empty()) scene.save(cfg.out_dir + "/checkpoint.llgs");
  return result;
}

}  // namespace llgs
