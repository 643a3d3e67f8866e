// llgs: synth / init / train / render / decompose / eval pipeline driver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "llgs/common.hpp"
#include "llgs/eval_metrics.hpp"
#include "llgs/llgim.hpp"
#include "llgs/losses.hpp"
#include "llgs/png_io.hpp"
#include "llgs/point_cloud.hpp"
#include "llgs/scene_model.hpp"
#include "llgs/splat_render.hpp"
#include "llgs/synth.hpp"
#include "llgs/toml_lite.hpp"
#include "llgs/trainer.hpp"

namespace fs = std::filesystem;
using namespace llgs;

namespace {

constexpr const char* kVersion = "llgs 1.0.0";

Camera load_camera_arg(const std::string& path, int camera_index) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open camera file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("camera json parse: " + std::string(e.what()));
  }
  if (j.contains("cameras")) {
    const auto& arr = j["cameras"];
    if (camera_index < 0 || camera_index >= static_cast<int>(arr.size()))
      throw UsageError("--camera-index required (file holds " + std::to_string(arr.size()) +
                       " cameras)");
    return camera_from_json(arr[camera_index]);
  }
  return camera_from_json(j);
}

void write_normalized_with_sidecar(const std::string& path, const Image& img) {
  double mn, mx;
  image_minmax(img, &mn, &mx);
  Image norm = img;
  double range = mx - mn;
  for (auto& v : norm.data) v = range > 0.0 ? (v - mn) / range : 0.0;
  write_png(path, norm);
  nlohmann::json sidecar;
  sidecar["min"] = mn;
  sidecar["max"] = mx;
  std::ofstream out(path + ".json");
  out << sidecar.dump(2) << "\n";
}

TrainConfig train_config_from_toml(const nlohmann::json& t, std::string echo) {
  TrainConfig cfg;
  cfg.config_echo = std::move(echo);
  if (t.contains("model")) {
    const auto& m = t["model"];
    cfg.dims.k = m.value("k", cfg.dims.k);
    cfg.dims.f_dim = m.value("f_dim", cfg.dims.f_dim);
    cfg.dims.hidden = m.value("hidden", cfg.dims.hidden);
    cfg.dims.r_e = m.value("r_e", cfg.dims.r_e);
  }
  if (t.contains("train")) {
    const auto& tr = t["train"];
    cfg.iterations = tr.value("iterations", cfg.iterations);
    cfg.warmup_iters = tr.value("warmup_iters", cfg.warmup_iters);
    cfg.warmup_lr = tr.value("warmup_lr", cfg.warmup_lr);
    cfg.seed = tr.value("seed", static_cast<int64_t>(cfg.seed));
    cfg.views_per_step = tr.value("views_per_step", cfg.views_per_step);
    cfg.threads = tr.value("threads", cfg.threads);
    cfg.loss.gamma = tr.value("gamma", cfg.loss.gamma);
    cfg.preview_interval = tr.value("preview_interval", cfg.preview_interval);
    cfg.opacity_cull = tr.value("opacity_cull", cfg.opacity_cull);
    cfg.cull_interval = tr.value("cull_interval", cfg.cull_interval);
    cfg.cull_threshold = tr.value("cull_threshold", cfg.cull_threshold);
    if (tr.contains("lr")) {
      const auto& lr = tr["lr"];
      cfg.lr_decoders = lr.value("decoders", cfg.lr_decoders);
      cfg.lr_offsets_intrinsic = lr.value("offsets_intrinsic", cfg.lr_offsets_intrinsic);
      cfg.lr_offsets_transient = lr.value("offsets_transient", cfg.lr_offsets_transient);
      cfg.lr_features = lr.value("features", cfg.lr_features);
      cfg.lr_embeddings = lr.value("embeddings", cfg.lr_embeddings);
      cfg.lr_mlp_opacity = lr.value("mlp_opacity", cfg.lr_mlp_opacity);
      cfg.lr_mlp_cov = lr.value("mlp_cov", cfg.lr_mlp_cov);
      cfg.lr_final_scale = lr.value("final_scale", cfg.lr_final_scale);
    }
    if (tr.contains("lambda")) {
      const auto& la = tr["lambda"];
      cfg.loss.schedule.lambda_ill = la.value("ill", cfg.loss.schedule.lambda_ill);
      cfg.loss.schedule.lambda_dssim = la.value("dssim", cfg.loss.schedule.lambda_dssim);
      cfg.loss.lambda_smo = la.value("smo", cfg.loss.lambda_smo);
      cfg.loss.schedule.re_init = la.value("re_init", cfg.loss.schedule.re_init);
      cfg.loss.schedule.re_final = la.value("re_final", cfg.loss.schedule.re_final);
      cfg.loss.schedule.re_decay_iters =
          la.value("re_decay_iters", cfg.loss.schedule.re_decay_iters);
      cfg.loss.schedule.enh_on_iter = la.value("enh_on_iter", cfg.loss.schedule.enh_on_iter);
      cfg.loss.schedule.enh_value = la.value("enh_value", cfg.loss.schedule.enh_value);
    }
  }
  return cfg;
}

int run_synth(const std::string& spec_path, const std::string& out_dir, uint64_t seed) {
  SynthSpec spec =
      spec_path.empty() ? default_synth_spec() : synth_spec_from_json(toml_parse_file(spec_path));
  SynthBundle bundle = generate(spec, seed);
  write_bundle(bundle, out_dir);
  log_info("synth: wrote " + std::to_string(bundle.views.size()) + " views to " + out_dir);
  return 0;
}

int run_init(const std::string& cloud_path, const std::string& out_path, double r,
             const PruneConfig& cfg) {
  PointCloud cloud = load_ply(cloud_path);
  AnchorSet candidates = build_anchor_candidates(cloud, r);
  PruneResult result = stochastic_prune(candidates, cfg);
  save_anchor_set(out_path, result, cfg);
  log_info("init: " + std::to_string(cloud.size()) + " points -> " +
           std::to_string(candidates.size()) + " candidates -> " +
           std::to_string(result.anchors.size()) + " anchors");
  return 0;
}

int run_train(const std::string& config_path) {
  std::ifstream raw(config_path);
  if (!raw) throw DataError("cannot open config: " + config_path);
  std::ostringstream ss;
  ss << raw.rdbuf();
  nlohmann::json t = toml_parse(ss.str());
  TrainConfig cfg = train_config_from_toml(t, ss.str());

  if (!t.contains("data")) throw DataError("run config: missing [data] section");
  std::string dataset_dir = t["data"].value("dataset", "");
  std::string anchors_path = t["data"].value("anchors", "");
  cfg.out_dir = t["data"].value("out", "");
  if (dataset_dir.empty() || anchors_path.empty() || cfg.out_dir.empty())
    throw DataError("run config: [data] must set dataset, anchors and out");

  Dataset ds = load_dataset(dataset_dir);
  AnchorSet anchors = load_anchor_set(anchors_path);
  SceneModel scene =
      SceneModel::create(anchors, cfg.dims, static_cast<int>(ds.views.size()), cfg.seed);
  TrainResult result = train(scene, ds, cfg);
  log_info("train: finished " + std::to_string(result.log.size()) + " iterations, " +
           std::to_string(result.rollbacks) + " rollbacks");
  return 0;
}

int run_render(const std::string& scene_path, const std::string& camera_path, int camera_index,
               const std::string& mode, const std::string& out_path, int view_index,
               int threads) {
  SceneModel scene = SceneModel::load(scene_path);
  Camera cam = load_camera_arg(camera_path, camera_index);
  std::optional<int> view;
  if (view_index >= 0) view = view_index;

  if (mode == "residual" && !view) throw UsageError("--mode residual requires --view-index");

  RenderOptions opts;
  opts.threads = threads;
  ComponentMaps maps = render_components(scene, cam, view, opts);
  if (mode == "low") {
    write_png(out_path, compose_low(maps));
  } else if (mode == "enhanced") {
    write_png(out_path, compose_enhanced(maps));
  } else if (mode == "reflectance") {
    write_png(out_path, maps.R_map);
  } else if (mode == "illumination") {
    write_normalized_with_sidecar(out_path, maps.S_map);
  } else if (mode == "residual") {
    write_normalized_with_sidecar(out_path, maps.Rs_map);
  } else if (mode == "depth") {
    write_normalized_with_sidecar(out_path, maps.depth_map);
  } else {
    throw UsageError("unknown --mode '" + mode + "'");
  }
  return 0;
}

int run_decompose(const std::string& scene_path, const std::string& camera_path,
                  int camera_index, const std::string& out_dir, int view_index, int threads) {
  SceneModel scene = SceneModel::load(scene_path);
  Camera cam = load_camera_arg(camera_path, camera_index);
  std::optional<int> view;
  if (view_index >= 0) view = view_index;
  fs::create_directories(out_dir);

  RenderOptions opts;
  opts.threads = threads;
  ComponentMaps maps = render_components(scene, cam, view, opts);
  write_png(out_dir + "/reflectance.png", maps.R_map);
  write_normalized_with_sidecar(out_dir + "/illumination.png", maps.S_map);
  write_normalized_with_sidecar(out_dir + "/illumination_enhanced.png", maps.S_enh_map);
  write_normalized_with_sidecar(out_dir + "/depth.png", maps.depth_map);
  write_png(out_dir + "/alpha.png", maps.alpha_map);
  write_png(out_dir + "/low.png", compose_low(maps));
  write_png(out_dir + "/enhanced.png", compose_enhanced(maps));
  if (view) write_normalized_with_sidecar(out_dir + "/residual.png", maps.Rs_map);
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& ref_dir, bool align,
             const std::string& out_path) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(pred_dir))
    if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError("eval: no PNG files in " + pred_dir);

  nlohmann::json report;
  report["per_view"] = nlohmann::json::object();
  double sum_psnr = 0.0, sum_ssim = 0.0;
  int n = 0;
  for (const auto& name : names) {
    std::string ref_path = ref_dir + "/" + name;
    if (!fs::exists(ref_path)) {
      log_info("eval: no reference for " + name + ", skipped");
      continue;
    }
    Image pred = read_png(pred_dir + "/" + name);
    Image ref = read_png(ref_path);
    PairScore score = evaluate_pair(pred, ref, align);
    nlohmann::json rec;
    rec["psnr"] = score.psnr;
    rec["ssim"] = score.ssim;
    if (align) {
      rec["a"] = score.align_a;
      rec["b"] = score.align_b;
    }
    report["per_view"][name] = rec;
    sum_psnr += score.psnr;
    sum_ssim += score.ssim;
    ++n;
  }
  if (n == 0) throw DataError("eval: no matching prediction/reference pairs");
  report["mean"] = {{"psnr", sum_psnr / n}, {"ssim", sum_ssim / n}};

  std::string text = report.dump(2);
  std::cout << text << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write report: " + out_path);
    out << text << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LL-grade Gaussian splatting: low-light scene decomposition and enhancement"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view bundle");
  std::string synth_spec, synth_out;
  uint64_t synth_seed = 1;
  synth->add_option("--spec", synth_spec, "scene TOML (omit for the built-in scene)");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "RNG seed");

  // init
  auto* init = app.add_subcommand("init", "Voxel anchors + stochastic pruning from a cloud");
  std::string init_cloud, init_out;
  double init_r = 1.0;
  PruneConfig prune_cfg;
  init->add_option("--cloud", init_cloud, "input PLY")->required();
  init->add_option("--out", init_out, "anchors.json path")->required();
  init->add_option("--r", init_r, "voxel resolution");
  init->add_option("--tau0", prune_cfg.tau0, "initial threshold");
  init->add_option("--beta", prune_cfg.beta, "temperature");
  init->add_option("--epsilon", prune_cfg.epsilon, "stability epsilon");
  init->add_option("--rounds", prune_cfg.rounds, "pruning rounds");
  init->add_option("--seed", prune_cfg.seed, "RNG seed");
  init->add_option("--threads", prune_cfg.threads, "worker threads");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run warm-up and main optimization");
  std::string train_config;
  train_cmd->add_option("--config", train_config, "run TOML")->required();

  // render
  auto* render = app.add_subcommand("render", "Render one map or composite");
  std::string r_scene, r_camera, r_mode = "low", r_out;
  int r_cam_index = -1, r_view_index = -1, r_threads = 1;
  render->add_option("--scene", r_scene, "checkpoint")->required();
  render->add_option("--camera", r_camera, "camera json (single or cameras.json)")->required();
  render->add_option("--camera-index", r_cam_index, "index into cameras.json");
  render->add_option("--mode", r_mode, "low|enhanced|reflectance|illumination|residual|depth");
  render->add_option("--out", r_out, "output PNG")->required();
  render->add_option("--view-index", r_view_index, "training-view index (residual/low)");
  render->add_option("--threads", r_threads, "worker threads");

  // decompose
  auto* dec = app.add_subcommand("decompose", "Write all component maps for a camera");
  std::string d_scene, d_camera, d_out;
  int d_cam_index = -1, d_view_index = -1, d_threads = 1;
  dec->add_option("--scene", d_scene, "checkpoint")->required();
  dec->add_option("--camera", d_camera, "camera json")->required();
  dec->add_option("--camera-index", d_cam_index, "index into cameras.json");
  dec->add_option("--out", d_out, "output directory")->required();
  dec->add_option("--view-index", d_view_index, "training-view index (adds residual)");
  dec->add_option("--threads", d_threads, "worker threads");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report over paired directories");
  std::string e_pred, e_ref, e_out;
  bool e_align = false;
  eval_cmd->add_option("--pred", e_pred, "prediction directory")->required();
  eval_cmd->add_option("--ref", e_ref, "reference directory")->required();
  eval_cmd->add_flag("--align", e_align, "affine luminance alignment before scoring");
  eval_cmd->add_option("--out", e_out, "also write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors map to exit 1
  }

  try {
    if (synth->parsed()) return run_synth(synth_spec, synth_out, synth_seed);
    if (init->parsed()) return run_init(init_cloud, init_out, init_r, prune_cfg);
    if (train_cmd->parsed()) return run_train(train_config);
    if (render->parsed())
      return run_render(r_scene, r_camera, r_cam_index, r_mode, r_out, r_view_index, r_threads);
    if (dec->parsed())
      return run_decompose(d_scene, d_camera, d_cam_index, d_out, d_view_index, d_threads);
    if (eval_cmd->parsed()) return run_eval(e_pred, e_ref, e_align, e_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
