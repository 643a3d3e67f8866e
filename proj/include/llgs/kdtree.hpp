#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <vector>

namespace llgs {

// 3D kd-tree for nearest-neighbor queries with self-exclusion by point index.
// Built once over an immutable point set; queries are const and thread-safe.
class KdTree {
 public:
  explicit KdTree(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {
    index_.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) index_[i] = static_cast<int>(i);
    nodes_.reserve(pts.size() * 2 + 1);
    if (!pts.empty()) root_ = build(0, static_cast<int>(pts.size()));
  }

  // Euclidean distance to the nearest point whose index != exclude.
  // +inf when no such point exists.
  double nearest_distance_excluding(const Eigen::Vector3d& q, int exclude) const {
    double best = std::numeric_limits<double>::infinity();
    if (root_ >= 0) search(root_, q, exclude, &best);
    return std::sqrt(best);
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into index_
  };

  int build(int begin, int end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size() - 1);
    }
    Eigen::Vector3d lo = pts_[index_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(pts_[index_[i]]);
      hi = hi.cwiseMax(pts_[index_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    int mid = (begin + end) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](int a, int b) {
                       if (pts_[a][axis] != pts_[b][axis]) return pts_[a][axis] < pts_[b][axis];
                       return a < b;  // deterministic for ties
                     });
    node.axis = axis;
    node.split = pts_[index_[mid]][axis];
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int l = build(begin, mid);
    int r = build(mid, end);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Eigen::Vector3d& q, int exclude, double* best_sq) const {
    const Node& n = nodes_[ni];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int pi = index_[i];
        if (pi == exclude) continue;
        double d = (pts_[pi] - q).squaredNorm();
        if (d < *best_sq) *best_sq = d;
      }
      return;
    }
    double delta = q[n.axis] - n.split;
    int near = delta < 0.0 ? n.left : n.right;
    int far = delta < 0.0 ? n.right : n.left;
    search(near, q, exclude, best_sq);
    if (delta * delta < *best_sq) search(far, q, exclude, best_sq);
  }

  std::vector<Eigen::Vector3d> pts_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace llgs
