#pragma once

#include <Eigen/Dense>
#include <string>

#include "json.hpp"

namespace llgs {

// Pinhole camera, world-to-camera pose, +Z forward, pixel origin top-left.
// Pixel coordinates are continuous; integer coordinates land on pixel centers.
struct Camera {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();  // world -> camera
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 1, height = 1;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const { return R * p_world + t; }
  Eigen::Vector3d center() const { return -R.transpose() * t; }

  // Throws DataError when invariants fail (orthonormality, det=+1,
  // positive focals, principal point inside the frame).
  void validate() const;
};

struct Projection {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double depth = 0.0;  // camera-space Z; <= 0 means behind/at the camera plane
  bool in_front() const { return depth > 0.0; }
};

Projection project_point(const Camera& cam, const Eigen::Vector3d& x);

// World-to-camera pose looking from eye toward target. `up` fixes roll.
Camera make_look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up, double fx, double fy, double cx,
                    double cy, int width, int height);

// JSON layout: {focal:[fx,fy], principal:[cx,cy], R:[9 row-major], t:[3], size:[W,H]}
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

}  // namespace llgs
