#include "llgs/llgim.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"
#include "llgs/common.hpp"
#include "llgs/kdtree.hpp"
#include "llgs/parallel.hpp"
#include "llgs/rng.hpp"

namespace llgs {

namespace {

struct VoxelKey {
  int64_t x, y, z;
  bool operator==(const VoxelKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct VoxelKeyHash {
  size_t operator()(const VoxelKey& k) const {
    uint64_t h = mix64(static_cast<uint64_t>(k.x));
    h = mix64(h ^ static_cast<uint64_t>(k.y));
    h = mix64(h ^ static_cast<uint64_t>(k.z));
    return static_cast<size_t>(h);
  }
};

}  // namespace

AnchorSet build_anchor_candidates(const PointCloud& cloud, double r) {
  if (cloud.points.empty()) throw DataError("build_anchor_candidates: empty cloud");
  if (!(r > 0.0)) throw DataError("build_anchor_candidates: voxel resolution must be > 0");

  AnchorSet set;
  set.voxel_resolution = r;
  std::unordered_map<VoxelKey, int, VoxelKeyHash> seen;
  seen.reserve(cloud.points.size());
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) throw DataError("build_anchor_candidates: non-finite point");
    VoxelKey key{static_cast<int64_t>(std::floor(p.x() / r)),
                 static_cast<int64_t>(std::floor(p.y() / r)),
                 static_cast<int64_t>(std::floor(p.z() / r))};
    if (seen.emplace(key, static_cast<int>(set.positions.size())).second) {
      set.positions.emplace_back((key.x + 0.5) * r, (key.y + 0.5) * r, (key.z + 0.5) * r);
      set.scales.push_back(r);
    }
  }
  return set;
}

double preservation_probability(double d_min, double tau, double epsilon) {
  return std::min(1.0, d_min / tau + epsilon);
}

double update_threshold(double tau, double beta, size_t retained, size_t initial) {
  return tau * std::exp(beta * static_cast<double>(retained) / static_cast<double>(initial));
}

PruneResult stochastic_prune(const AnchorSet& anchors, const PruneConfig& cfg) {
  if (anchors.positions.empty()) throw DataError("stochastic_prune: empty anchor set");
  if (!(cfg.tau0 > 0.0) || !(cfg.beta > 0.0) || !(cfg.epsilon > 0.0) || cfg.rounds < 1)
    throw DataError("stochastic_prune: invalid config");

  PruneResult result;
  result.initial_count = anchors.size();
  std::vector<int> retained(anchors.size());
  for (size_t i = 0; i < anchors.size(); ++i) retained[i] = static_cast<int>(i);

  double tau = cfg.tau0;
  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<Eigen::Vector3d> pts(retained.size());
    for (size_t i = 0; i < retained.size(); ++i) pts[i] = anchors.positions[retained[i]];
    KdTree tree(pts);

    std::vector<uint8_t> keep(retained.size(), 0);
    parallel_for(retained.size(), cfg.threads, [&](size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) {
        double d_min = retained.size() == 1
                           ? std::numeric_limits<double>::infinity()
                           : tree.nearest_distance_excluding(pts[i], static_cast<int>(i));
        double p = preservation_probability(d_min, tau, cfg.epsilon);
        double u = hash01(cfg.seed, static_cast<uint64_t>(round),
                          static_cast<uint64_t>(retained[i]));
        keep[i] = u < p ? 1 : 0;
      }
    });

    std::vector<int> next;
    next.reserve(retained.size());
    for (size_t i = 0; i < retained.size(); ++i)
      if (keep[i]) next.push_back(retained[i]);
    retained.swap(next);

    PruneRoundStats stats;
    stats.tau_used = tau;
    stats.retained = retained.size();
    tau = update_threshold(tau, cfg.beta, retained.size(), result.initial_count);
    stats.tau_after = tau;
    result.rounds.push_back(stats);
    log_debug("prune round " + std::to_string(round) + ": retained " +
              std::to_string(retained.size()) + "/" + std::to_string(result.initial_count));
  }

  result.kept_indices = retained;
  result.anchors.voxel_resolution = anchors.voxel_resolution;
  result.anchors.positions.reserve(retained.size());
  result.anchors.scales.reserve(retained.size());
  for (int idx : retained) {
    result.anchors.positions.push_back(anchors.positions[idx]);
    result.anchors.scales.push_back(anchors.scales[idx]);
  }
  return result;
}

void save_anchor_set(const std::string& path, const PruneResult& result,
                     const PruneConfig& cfg) {
  nlohmann::json j;
  j["voxel_resolution"] = result.anchors.voxel_resolution;
  nlohmann::json arr = nlohmann::json::array();
  for (size_t i = 0; i < result.anchors.size(); ++i) {
    arr.push_back({{"x", {result.anchors.positions[i].x(), result.anchors.positions[i].y(),
                          result.anchors.positions[i].z()}},
                   {"l", result.anchors.scales[i]}});
  }
  j["anchors"] = arr;
  nlohmann::json prov;
  prov["initial_count"] = result.initial_count;
  prov["seed"] = cfg.seed;
  prov["tau0"] = cfg.tau0;
  prov["beta"] = cfg.beta;
  prov["epsilon"] = cfg.epsilon;
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : result.rounds)
    rounds.push_back({{"tau_used", r.tau_used}, {"retained", r.retained}, {"tau_after", r.tau_after}});
  prov["rounds"] = rounds;
  j["provenance"] = prov;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

AnchorSet load_anchor_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("anchors json parse: " + std::string(e.what()));
  }
  AnchorSet set;
  try {
    set.voxel_resolution = j.at("voxel_resolution").get<double>();
    for (const auto& a : j.at("anchors")) {
      set.positions.emplace_back(a.at("x").at(0).get<double>(), a.at("x").at(1).get<double>(),
                                 a.at("x").at(2).get<double>());
      set.scales.push_back(a.at("l").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("anchors json fields: " + std::string(e.what()));
  }
  return set;
}

}  // namespace llgs
