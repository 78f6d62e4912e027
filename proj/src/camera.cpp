#include "hmr/camera.hpp"

#include "hmr/body_model.hpp"

#include <cmath>
#include <stdexcept>

namespace hmr::camera {

void CameraParams::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("camera scale must be positive and finite");
  if (!global_rotation.allFinite() || !translation.allFinite())
    throw std::invalid_argument("camera parameters must be finite");
}

namespace {

std::size_t check_joints(const char* op, const Var& joints) {
  const ad::Shape& s = joints.shape();
  if (s.size() != 3 || s[2] != 3) throw ad::ShapeError(op, s, "joints must be [B, K, 3]");
  return s[0];
}

}  // namespace

Var rotate_points(const Var& joints, const Var& rotation_matrices) {
  return ad::bmm(joints, ad::transpose_last2(rotation_matrices));
}

Var project(const Var& joints, const Var& rotation, const Var& translation, const Var& scale) {
  const std::size_t batch = check_joints("project", joints);
  const std::size_t k = joints.shape()[1];
  if (rotation.shape() != ad::Shape{batch, 3}) throw ad::ShapeError("project rotation", rotation.shape(), joints.shape());
  if (translation.shape() != ad::Shape{batch, 2})
    throw ad::ShapeError("project translation", translation.shape(), joints.shape());
  if (scale.shape() != ad::Shape{batch, 1}) throw ad::ShapeError("project scale", scale.shape(), joints.shape());
  Var rotated = rotate_points(joints, body::rodrigues(rotation));
  Var planar = ad::slice_last(rotated, 0, 2);
  Var s = ad::expand(ad::reshape(scale, {batch, 1, 1}), {batch, k, 2});
  Var t = ad::expand(ad::reshape(translation, {batch, 1, 2}), {batch, k, 2});
  return planar * s + t;
}

Var camera_depths(const Var& joints, const Var& rotation) {
  const std::size_t batch = check_joints("camera_depths", joints);
  if (rotation.shape() != ad::Shape{batch, 3})
    throw ad::ShapeError("camera_depths rotation", rotation.shape(), joints.shape());
  Var rotated = rotate_points(joints, body::rodrigues(rotation));
  return ad::reshape(ad::slice_last(rotated, 2, 3), {batch, joints.shape()[1]});
}

Eigen::MatrixXd project(const Eigen::MatrixXd& joints, const CameraParams& cam) {
  cam.validate();
  const Eigen::Matrix3d r = body::rodrigues(cam.global_rotation);
  Eigen::MatrixXd out(joints.rows(), 2);
  for (Eigen::Index i = 0; i < joints.rows(); ++i) {
    const Eigen::Vector3d x = r * joints.row(i).transpose();
    out.row(i) = (cam.scale * x.head<2>() + cam.translation).transpose();
  }
  return out;
}

Eigen::VectorXd camera_depths(const Eigen::MatrixXd& joints, const CameraParams& cam) {
  cam.validate();
  const Eigen::Matrix3d r = body::rodrigues(cam.global_rotation);
  Eigen::VectorXd out(joints.rows());
  for (Eigen::Index i = 0; i < joints.rows(); ++i) out[i] = r.row(2).dot(joints.row(i));
  return out;
}

}  // namespace hmr::camera
