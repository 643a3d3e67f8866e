#include "llgs/camera.hpp"

#include <cmath>

#include "llgs/common.hpp"

namespace llgs {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DataError("camera: focal lengths must be positive");
  if (width < 1 || height < 1) throw DataError("camera: resolution must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw DataError("camera: principal point outside the frame");
  Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9) throw DataError("camera: rotation is not orthonormal");
  if (R.determinant() < 0.0) throw DataError("camera: rotation has negative determinant");
  if (!R.allFinite() || !t.allFinite()) throw DataError("camera: non-finite pose");
}

Projection project_point(const Camera& cam, const Eigen::Vector3d& x) {
  Eigen::Vector3d pc = cam.to_camera(x);
  Projection out;
  out.depth = pc.z();
  if (pc.z() <= 0.0) return out;  // caller culls on depth <= 0
  out.pixel.x() = cam.fx * pc.x() / pc.z() + cam.cx;
  out.pixel.y() = cam.fy * pc.y() / pc.z() + cam.cy;
  return out;
}

Camera make_look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up, double fx, double fy, double cx,
                    double cy, int width, int height) {
  Eigen::Vector3d fwd = (target - eye).normalized();
  Eigen::Vector3d u = up;
  if (std::abs(fwd.dot(u.normalized())) > 0.999) u = Eigen::Vector3d(1, 0, 0);
  Eigen::Vector3d right = u.cross(fwd).normalized();
  Eigen::Vector3d down = fwd.cross(right);  // image +y
  Camera cam;
  cam.R.row(0) = right.transpose();
  cam.R.row(1) = down.transpose();
  cam.R.row(2) = fwd.transpose();
  cam.t = -cam.R * eye;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

nlohmann::json camera_to_json(const Camera& cam) {
  nlohmann::json j;
  j["focal"] = {cam.fx, cam.fy};
  j["principal"] = {cam.cx, cam.cy};
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = cam.R(i, k);
  j["R"] = r;
  j["t"] = {cam.t.x(), cam.t.y(), cam.t.z()};
  j["size"] = {cam.width, cam.height};
  return j;
}

Camera camera_from_json(const nlohmann::json& j) {
  try {
    Camera cam;
    cam.fx = j.at("focal").at(0).get<double>();
    cam.fy = j.at("focal").at(1).get<double>();
    cam.cx = j.at("principal").at(0).get<double>();
    cam.cy = j.at("principal").at(1).get<double>();
    const auto& r = j.at("R");
    if (r.size() != 9) throw DataError("camera json: R must hold 9 floats");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) cam.R(i, k) = r.at(i * 3 + k).get<double>();
    for (int i = 0; i < 3; ++i) cam.t(i) = j.at("t").at(i).get<double>();
    cam.width = j.at("size").at(0).get<int>();
    cam.height = j.at("size").at(1).get<int>();
    cam.validate();
    return cam;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("camera json: ") + e.what());
  }
}

}  // namespace llgs
