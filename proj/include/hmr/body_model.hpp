#pragma once

// Synthetic SMPL-style body model and its differentiable forward function.
//
// Vertices are posed by linear blend skinning of a 24-joint rig; the 14
// evaluation keypoints are a fixed linear regression of the posed vertices.
// Pose-dependent corrective blendshapes of full SMPL are omitted.
//
// Model frame: x to the subject's left (image right), y down, z away from
// the camera. The rest pose is a T-pose facing the camera.

#include "hmr/autodiff.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hmr::body {

using ad::Array;
using ad::Graph;
using ad::Var;

inline constexpr std::size_t kNumJoints = 24;
inline constexpr std::size_t kNumKeypoints = 14;
inline constexpr std::size_t kNumBetas = 10;
inline constexpr std::size_t kNumPose = 3 * kNumJoints;

/// LSP ordering of the evaluation keypoints.
enum Keypoint : std::size_t {
  kRightAnkle = 0,
  kRightKnee,
  kRightHip,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kRightWrist,
  kRightElbow,
  kRightShoulder,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
  kNeck,
  kHead,
};

/// Skeleton edges over the 14 keypoints (used for bone-length normalisation).
extern const std::array<std::pair<std::size_t, std::size_t>, 13> kKeypointBones;

/// Kinematic tree of the rig; parents[0] == -1.
extern const std::array<int, kNumJoints> kSmplParents;

struct BodyModel {
  Array template_vertices;     // [N, 3], meters
  Array shape_dirs;            // [N, 3, 10]
  Array skinning_weights;      // [N, 24]
  Array joint_regressor_rest;  // [24, N]
  Array keypoint_regressor;    // [14, N]
  std::array<int, kNumJoints> parents = kSmplParents;

  std::size_t num_vertices() const { return template_vertices.shape.empty() ? 0 : template_vertices.shape[0]; }
  /// Checks shapes, skinning normalisation and tree ordering; throws std::invalid_argument.
  void validate() const;
  friend bool operator==(const BodyModel&, const BodyModel&) = default;
};

/// Deterministic human-proportioned model with `n_vertices` >= 24 vertices.
BodyModel synth_model(std::uint64_t seed, std::size_t n_vertices = 200);

void save_body_model(const std::string& path, const BodyModel& model);
BodyModel load_body_model(const std::string& path);

/// Plain (non-differentiable) rotation from an axis-angle vector.
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle);

/// Differentiable batched rotation: [M, 3] -> [M, 3, 3].
/// R = I + sin|w|/|w| K + (1 - cos|w|)/|w|^2 K^2 with K the cross-product matrix of w;
/// the coefficients switch to their Taylor series near the origin.
Var rodrigues(const Var& axis_angle);

struct WorldTransforms {
  std::vector<Var> rotations;     // per joint [B, 3, 3]
  std::vector<Var> translations;  // per joint [B, 3] (world joint positions)
  Var local_rotations;            // [B, 24 * 9]
};

struct ShapedRest {
  Var vertices;  // [B, N, 3]
  Var joints;    // [B, 24, 3]
};

struct SmplOutput {
  Var vertices;  // [B, N, 3]
  Var joints;    // [B, 14, 3]
  WorldTransforms transforms;
};

/// Graph-side view of a BodyModel with the linear blend tensors factored out.
///
/// Because skinning, blend shapes and keypoint regression are all linear, the
/// keypoints can be computed as P(beta) * T(theta) where P folds the keypoint
/// regressor into the skinning weights ([14, 24 * 4]) and T stacks the
/// per-joint affine transforms. keypoints() uses that shortcut and never forms
/// the posed mesh.
class SmplLayer {
 public:
  explicit SmplLayer(const BodyModel& model);

  const BodyModel& model() const { return model_; }
  std::size_t num_vertices() const { return model_.num_vertices(); }

  /// beta: [B, 10]
  ShapedRest shaped_rest(Graph& g, const Var& beta) const;
  /// joints_rest: [B, 24, 3]; theta: [B, 72]
  WorldTransforms forward_kinematics(Graph& g, const Var& joints_rest, const Var& theta) const;
  /// Full forward: posed vertices and the 14 regressed keypoints.
  SmplOutput forward(Graph& g, const Var& beta, const Var& theta) const;
  /// Keypoints only ([B, 14, 3]); equal to forward().joints.
  Var keypoints(Graph& g, const Var& beta, const Var& theta, WorldTransforms* transforms = nullptr) const;

 private:
  Var skinning_blocks(const WorldTransforms& world, const Var& joints_rest) const;
  Var rest_joints(Graph& g, const Var& beta) const;

  BodyModel model_;
  Array rest_shape_;  // [10, N*3]
  Array joint_base_;  // [1, 72]
  Array joint_shape_;  // [10, 72]
  Array vertex_base_;  // [1, N*96]
  Array vertex_shape_;  // [10, N*96]
  Array keypoint_base_;  // [1, 14*96]
  Array keypoint_shape_;  // [10, 14*96]
};

/// Convenience single-sample evaluation (beta: 10, theta: 72).
struct PosedBody {
  Eigen::MatrixXd vertices;  // N x 3
  Eigen::MatrixXd joints;    // 14 x 3
};
PosedBody smpl_forward(const SmplLayer& layer, const std::vector<double>& beta, const std::vector<double>& theta);
/// Keypoints only, single sample, 14 x 3.
Eigen::MatrixXd smpl_keypoints(const SmplLayer& layer, const std::vector<double>& beta,
                               const std::vector<double>& theta);

}  // namespace hmr::body
