#pragma once

// Weak-perspective camera: x = s * P(R X) + t with P dropping the third axis.
// Image coordinates: x right, y down, origin at the crop centre, [-1, 1] over the crop.

#include "hmr/autodiff.hpp"

#include <Eigen/Core>

namespace hmr::camera {

using ad::Var;

struct CameraParams {
  Eigen::Vector3d global_rotation = Eigen::Vector3d::Zero();  // axis-angle
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  double scale = 1.0;

  /// Throws std::invalid_argument unless scale > 0 and all values are finite.
  void validate() const;
};

/// joints: [B, K, 3]; rotation: [B, 3] axis-angle; translation: [B, 2]; scale: [B, 1] -> [B, K, 2]
Var project(const Var& joints, const Var& rotation, const Var& translation, const Var& scale);
/// Third coordinate of R X per joint: [B, K, 3] -> [B, K]
Var camera_depths(const Var& joints, const Var& rotation);
/// R X per joint with R given as matrices [B, 3, 3].
Var rotate_points(const Var& joints, const Var& rotation_matrices);

Eigen::MatrixXd project(const Eigen::MatrixXd& joints, const CameraParams& cam);
Eigen::VectorXd camera_depths(const Eigen::MatrixXd& joints, const CameraParams& cam);

}  // namespace hmr::camera
