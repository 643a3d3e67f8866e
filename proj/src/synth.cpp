#include "llgs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "llgs/common.hpp"
#include "llgs/png_io.hpp"
#include "llgs/rng.hpp"

namespace llgs {

namespace {

namespace fs = std::filesystem;

struct Hit {
  bool valid = false;
  double t = 0.0;  // ray parameter
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
};

Eigen::Vector3d surface_albedo(const SurfaceSpec& s, double u, double v) {
  if (s.checker_cells <= 0) return s.albedo;
  int cu = static_cast<int>(std::floor(u * s.checker_cells));
  int cv = static_cast<int>(std::floor(v * s.checker_cells));
  return ((cu + cv) % 2 + 2) % 2 == 0 ? s.albedo : s.albedo2;
}

Hit intersect(const SurfaceSpec& s, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  Hit h;
  if (s.type == SurfaceSpec::Type::kPlane) {
    Eigen::Vector3d n = s.edge_u.cross(s.edge_v);
    double denom = dir.dot(n);
    if (std::abs(denom) < 1e-12) return h;
    double t = (s.origin - origin).dot(n) / denom;
    if (t <= 1e-6) return h;
    Eigen::Vector3d q = origin + t * dir - s.origin;
    double uu = s.edge_u.squaredNorm(), vv = s.edge_v.squaredNorm();
    double u = q.dot(s.edge_u) / uu, v = q.dot(s.edge_v) / vv;
    if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return h;
    h.valid = true;
    h.t = t;
    h.point = origin + t * dir;
    h.albedo = surface_albedo(s, u, v);
  } else {
    Eigen::Vector3d oc = origin - s.center;
    double b = oc.dot(dir);
    double c = oc.squaredNorm() - s.radius * s.radius;
    double disc = b * b - c;
    if (disc < 0.0) return h;
    double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 1e-6) t = -b + sq;
    if (t <= 1e-6) return h;
    h.valid = true;
    h.t = t;
    h.point = origin + t * dir;
    Eigen::Vector3d n = (h.point - s.center).normalized();
    double u = (std::atan2(n.z(), n.x()) / (2.0 * std::numbers::pi)) + 0.5;
    double v = std::acos(std::clamp(n.y(), -1.0, 1.0)) / std::numbers::pi;
    h.albedo = surface_albedo(s, u, v);
  }
  return h;
}

double illum_field(const SynthSpec& spec, const Eigen::Vector3d& p) {
  double s = spec.illum_base;
  for (const auto& b : spec.illum_blobs) {
    double d2 = (p - b.center).squaredNorm();
    s += b.amplitude * std::exp(-d2 / (b.width * b.width));
  }
  return s;
}

Eigen::Vector3d json_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("expected a 3-vector");
  return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

void write_scaled_png(const std::string& png_path, const Image& img) {
  double mn, mx;
  image_minmax(img, &mn, &mx);
  Image norm = img;
  double range = mx - mn;
  for (auto& v : norm.data) v = range > 0.0 ? (v - mn) / range : 0.0;
  write_png(png_path, norm);
  nlohmann::json sidecar;
  sidecar["min"] = mn;
  sidecar["max"] = mx;
  std::ofstream out(png_path + ".json");
  out << sidecar.dump(2) << "\n";
}

}  // namespace

SynthSpec default_synth_spec() {
  SynthSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.n_views = 6;
  spec.test_every = 6;
  spec.cam_radius = 2.6;
  spec.cam_height = 1.6;
  spec.target = Eigen::Vector3d(0, 0.3, 0);
  spec.fov_deg = 60.0;
  spec.darkness = 0.25;
  spec.cloud_points = 3000;
  spec.cloud_jitter = 0.01;
  spec.illum_base = 0.4;
  spec.illum_blobs.push_back({Eigen::Vector3d(-0.8, 1.2, 0.8), 0.9, 1.5});
  spec.illum_blobs.push_back({Eigen::Vector3d(1.0, 0.8, -0.6), 0.5, 1.2});

  SurfaceSpec floor;
  floor.type = SurfaceSpec::Type::kPlane;
  floor.origin = Eigen::Vector3d(-2, 0, -2);
  floor.edge_u = Eigen::Vector3d(4, 0, 0);
  floor.edge_v = Eigen::Vector3d(0, 0, 4);
  floor.albedo = Eigen::Vector3d(0.70, 0.55, 0.40);
  floor.albedo2 = Eigen::Vector3d(0.45, 0.35, 0.25);
  floor.checker_cells = 4;
  spec.surfaces.push_back(floor);

  SurfaceSpec ball;
  ball.type = SurfaceSpec::Type::kSphere;
  ball.center = Eigen::Vector3d(0, 0.5, 0);
  ball.radius = 0.5;
  ball.albedo = Eigen::Vector3d(0.75, 0.30, 0.25);
  spec.surfaces.push_back(ball);

  SurfaceSpec ball2;
  ball2.type = SurfaceSpec::Type::kSphere;
  ball2.center = Eigen::Vector3d(0.8, 0.3, -0.5);
  ball2.radius = 0.3;
  ball2.albedo = Eigen::Vector3d(0.30, 0.45, 0.75);
  spec.surfaces.push_back(ball2);
  return spec;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec spec = default_synth_spec();
  spec.illum_blobs.clear();
  spec.surfaces.clear();
  try {
    if (j.contains("image")) {
      spec.width = j["image"].value("width", spec.width);
      spec.height = j["image"].value("height", spec.height);
    }
    if (j.contains("cameras")) {
      const auto& c = j["cameras"];
      spec.n_views = c.value("count", spec.n_views);
      spec.test_every = c.value("test_every", spec.test_every);
      spec.cam_radius = c.value("radius", spec.cam_radius);
      spec.cam_height = c.value("height", spec.cam_height);
      spec.fov_deg = c.value("fov_deg", spec.fov_deg);
      if (c.contains("target")) spec.target = json_vec3(c["target"]);
    }
    if (j.contains("degrade")) {
      const auto& d = j["degrade"];
      spec.darkness = d.value("darkness", spec.darkness);
      spec.noise_sigma = d.value("noise_sigma", spec.noise_sigma);
      spec.color_shift = d.value("color_shift", spec.color_shift);
    }
    if (j.contains("prior")) spec.gamma = j["prior"].value("gamma", spec.gamma);
    if (j.contains("cloud")) {
      spec.cloud_points = j["cloud"].value("points", spec.cloud_points);
      spec.cloud_jitter = j["cloud"].value("jitter", spec.cloud_jitter);
    }
    if (j.contains("illumination")) {
      const auto& il = j["illumination"];
      spec.illum_base = il.value("base", spec.illum_base);
      if (il.contains("blobs"))
        for (const auto& b : il["blobs"])
          spec.illum_blobs.push_back(
              {json_vec3(b.at("center")), b.value("amplitude", 1.0), b.value("width", 1.0)});
    }
    if (j.contains("surfaces")) {
      for (const auto& sj : j["surfaces"]) {
        SurfaceSpec s;
        std::string type = sj.value("type", "plane");
        if (type == "plane") {
          s.type = SurfaceSpec::Type::kPlane;
          s.origin = json_vec3(sj.at("origin"));
          s.edge_u = json_vec3(sj.at("edge_u"));
          s.edge_v = json_vec3(sj.at("edge_v"));
        } else if (type == "sphere") {
          s.type = SurfaceSpec::Type::kSphere;
          s.center = json_vec3(sj.at("center"));
          s.radius = sj.at("radius").get<double>();
        } else {
          throw DataError("unknown surface type '" + type + "'");
        }
        s.albedo = json_vec3(sj.at("albedo"));
        if (sj.contains("albedo2")) s.albedo2 = json_vec3(sj["albedo2"]);
        s.checker_cells = sj.value("checker_cells", 0);
        spec.surfaces.push_back(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scene spec: ") + e.what());
  }
  if (spec.surfaces.empty()) throw DataError("scene spec: no surfaces");
  if (!(spec.darkness > 0.0 && spec.darkness <= 1.0))
    throw DataError("scene spec: darkness must be in (0,1]");
  return spec;
}

SynthBundle generate(const SynthSpec& spec, uint64_t seed) {
  if (spec.surfaces.empty()) throw DataError("generate: no surfaces");
  SynthBundle bundle;
  bundle.spec = spec;

  double fov = spec.fov_deg * std::numbers::pi / 180.0;
  double fx = 0.5 * spec.width / std::tan(0.5 * fov);
  double fy = fx;

  for (int vi = 0; vi < spec.n_views; ++vi) {
    double angle = 2.0 * std::numbers::pi * vi / spec.n_views;
    Eigen::Vector3d eye = spec.target + Eigen::Vector3d(spec.cam_radius * std::cos(angle),
                                                        spec.cam_height,
                                                        spec.cam_radius * std::sin(angle));
    SynthView view;
    view.cam = make_look_at(eye, spec.target, Eigen::Vector3d(0, 1, 0), fx, fy,
                            spec.width * 0.5, spec.height * 0.5, spec.width, spec.height);

    view.r_gt = Image(spec.width, spec.height, 3);
    view.s_gt = Image(spec.width, spec.height, 1);
    view.depth_gt = Image(spec.width, spec.height, 1);
    view.noise = Image(spec.width, spec.height, 3);
    view.c_low = Image(spec.width, spec.height, 3);

    Rng rng(mix64(seed ^ (0xb0b0ULL + static_cast<uint64_t>(vi))));
    if (spec.color_shift > 0.0)
      view.color_shift = Eigen::Vector3d(rng.uniform(-spec.color_shift, spec.color_shift),
                                         rng.uniform(-spec.color_shift, spec.color_shift),
                                         rng.uniform(-spec.color_shift, spec.color_shift));

    Eigen::Vector3d origin = view.cam.center();
    int hits = 0;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        Eigen::Vector3d dir_cam((x - view.cam.cx) / fx, (y - view.cam.cy) / fy, 1.0);
        Eigen::Vector3d dir = (view.cam.R.transpose() * dir_cam).normalized();
        Hit best;
        for (const auto& s : spec.surfaces) {
          Hit h = intersect(s, origin, dir);
          if (h.valid && (!best.valid || h.t < best.t)) best = h;
        }
        Eigen::Vector3d clean = Eigen::Vector3d::Zero();
        if (best.valid) {
          ++hits;
          double s_val = illum_field(spec, best.point);
          view.s_gt.at(x, y) = s_val;
          view.depth_gt.at(x, y) = view.cam.to_camera(best.point).z();
          for (int c = 0; c < 3; ++c) view.r_gt.at(x, y, c) = best.albedo[c];
          clean = best.albedo * (spec.darkness * s_val);
        }
        for (int c = 0; c < 3; ++c) {
          double n = spec.noise_sigma > 0.0 ? rng.normal() * spec.noise_sigma : 0.0;
          view.noise.at(x, y, c) = n;
          view.c_low.at(x, y, c) =
              std::clamp(clean[c] + n + view.color_shift[c], 0.0, 1.0);
        }
      }
    }
    if (hits == 0)
      throw DataError("generate: camera " + std::to_string(vi) + " sees no geometry");

    bundle.views.push_back(std::move(view));
    if (spec.test_every > 0 && (vi + 1) % spec.test_every == 0)
      bundle.test_idx.push_back(vi);
    else
      bundle.train_idx.push_back(vi);
  }

  // Surface point samples: the MVS-cloud stand-in.
  Rng crng(mix64(seed ^ 0xc10cdULL));
  std::vector<double> areas;
  double total_area = 0.0;
  for (const auto& s : spec.surfaces) {
    double a = s.type == SurfaceSpec::Type::kPlane
                   ? s.edge_u.cross(s.edge_v).norm()
                   : 4.0 * std::numbers::pi * s.radius * s.radius;
    areas.push_back(a);
    total_area += a;
  }
  bundle.cloud.colors.emplace();
  for (int i = 0; i < spec.cloud_points; ++i) {
    double pick = crng.uniform() * total_area;
    size_t si = 0;
    while (si + 1 < areas.size() && pick > areas[si]) {
      pick -= areas[si];
      ++si;
    }
    const auto& s = spec.surfaces[si];
    Eigen::Vector3d p, albedo;
    if (s.type == SurfaceSpec::Type::kPlane) {
      double u = crng.uniform(), v = crng.uniform();
      p = s.origin + u * s.edge_u + v * s.edge_v;
      albedo = surface_albedo(s, u, v);
    } else {
      // uniform direction via normalized Gaussian triple
      Eigen::Vector3d n(crng.normal(), crng.normal(), crng.normal());
      if (n.norm() < 1e-9) n = Eigen::Vector3d(0, 1, 0);
      n.normalize();
      p = s.center + s.radius * n;
      double u = (std::atan2(n.z(), n.x()) / (2.0 * std::numbers::pi)) + 0.5;
      double v = std::acos(std::clamp(n.y(), -1.0, 1.0)) / std::numbers::pi;
      albedo = surface_albedo(s, u, v);
    }
    Eigen::Vector3d color = albedo * (spec.darkness * illum_field(spec, p));
    if (spec.cloud_jitter > 0.0)
      p += Eigen::Vector3d(crng.normal(), crng.normal(), crng.normal()) * spec.cloud_jitter;
    bundle.cloud.points.push_back(p);
    bundle.cloud.colors->push_back(color.cwiseMin(1.0).cwiseMax(0.0));
  }
  return bundle;
}

Image prior_provider(const Image& c_low, double gamma) {
  if (!(gamma > 0.0)) throw DataError("prior_provider: gamma must be > 0");
  Image scaled = c_low;
  for (auto& v : scaled.data) v *= gamma;
  if (c_low.channels == 3) {
    std::vector<double> means = channel_means(scaled);
    double avg = (means[0] + means[1] + means[2]) / 3.0;
    for (int c = 0; c < 3; ++c) {
      double k = means[c] > 1e-12 ? avg / means[c] : 1.0;
      for (int y = 0; y < scaled.height; ++y)
        for (int x = 0; x < scaled.width; ++x) scaled.at(x, y, c) *= k;
    }
  }
  for (auto& v : scaled.data) v = std::clamp(v, 0.0, 1.0);
  return scaled;
}

void write_bundle(const SynthBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  fs::create_directories(dir + "/views");
  fs::create_directories(dir + "/priors");
  fs::create_directories(dir + "/gt/R");
  fs::create_directories(dir + "/gt/S");
  fs::create_directories(dir + "/gt/depth");

  save_ply(dir + "/cloud.ply", bundle.cloud, /*binary=*/true);

  nlohmann::json cams;
  cams["cameras"] = nlohmann::json::array();
  for (const auto& v : bundle.views) cams["cameras"].push_back(camera_to_json(v.cam));
  cams["split"] = {{"train", bundle.train_idx}, {"test", bundle.test_idx}};
  std::ofstream cf(dir + "/cameras.json");
  if (!cf) throw DataError("cannot write cameras.json");
  cf << cams.dump(2) << "\n";

  char name[64];
  for (size_t i = 0; i < bundle.views.size(); ++i) {
    const auto& v = bundle.views[i];
    std::snprintf(name, sizeof(name), "view_%03zu.png", i);
    write_png(dir + "/views/" + name, v.c_low);
    write_png(dir + "/priors/" + name, prior_provider(v.c_low, bundle.spec.gamma));
    write_png(dir + "/gt/R/" + name, v.r_gt);
    write_scaled_png(dir + "/gt/S/" + name, v.s_gt);
    write_scaled_png(dir + "/gt/depth/" + name, v.depth_gt);
  }
}

}  // namespace llgs
