#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "llgs/common.hpp"

namespace llgs {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::optional<std::vector<Eigen::Vector3d>> colors;  // [0,1]^3, same length as points

  size_t size() const { return points.size(); }
};

// Parse failure carrying the byte offset where the input became invalid.
class PlyError : public DataError {
 public:
  PlyError(const std::string& what, size_t offset)
      : DataError(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

// ASCII and binary-little-endian PLY. Vertex element must come first;
// x/y/z must be float or double; colors picked up from uchar red/green/blue.
PointCloud load_ply(const std::string& path);

void save_ply(const std::string& path, const PointCloud& cloud, bool binary = true);

}  // namespace llgs
