#pragma once

// Synthetic RGB-D pose data: poses and shapes drawn from a Gaussian prior are
// pushed through the body model and a weak-perspective camera, then emitted as
// per-stream observations, 2D/3D annotations and noisy per-keypoint depth
// readings in a dataset-specific coordinate frame.
//
// Depth holes are modelled per keypoint (Bernoulli). A dense depth map sampled
// with a 3x3 median around each keypoint would be the natural extension.

#include "hmr/body_model.hpp"
#include "hmr/camera.hpp"
#include "hmr/losses.hpp"
#include "hmr/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hmr::data {

using Points = Eigen::MatrixXd;

inline constexpr std::size_t kRgbObsDim = 3 * body::kNumKeypoints;    // (x, y, visible) per keypoint
inline constexpr std::size_t kDepthObsDim = 4 * body::kNumKeypoints;  // (x, y, relative depth, valid)

/// Native coordinates = unit_scale * (rotation * common + translation); the common frame is
/// the body-model frame in meters.
struct DatasetFrame {
  std::string name = "common";
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // meters
  double unit_scale = 1.0;

  void validate() const;
  Points apply(const Points& common) const;
  Points to_common(const Points& native) const;
};

/// "common", "frame-a" (mm, rotated 90 degrees about x, shifted 1.5 m) and "frame-b" (m, axis-aligned).
DatasetFrame builtin_frame(const std::string& name);

enum class StreamKind { rgb, depth };

struct StreamObservation {
  StreamKind stream = StreamKind::rgb;
  std::vector<double> data;
  bool present = false;

  friend bool operator==(const StreamObservation&, const StreamObservation&) = default;
};

struct Annotations {
  bool has_2d = true;
  bool has_3d = false;
  bool has_depth = false;
  friend bool operator==(const Annotations&, const Annotations&) = default;
};

/// Generating parameters, kept for evaluation.
struct GroundTruth {
  std::vector<double> beta;   // 10
  std::vector<double> theta;  // 72
  camera::CameraParams cam;
};

struct Sample {
  std::string sample_id;
  std::string dataset;
  std::string frame;
  Annotations annotations;
  StreamObservation rgb_obs;
  StreamObservation depth_obs;
  Points kp2d;                                 // 14 x 2
  std::vector<std::uint8_t> visibility;        // 14
  std::optional<Points> kp3d;                  // 14 x 3, native frame
  std::optional<std::vector<double>> kp_depths;  // 14, meters; NaN marks a hole
  GroundTruth truth;
};

bool structurally_equal(const Sample& a, const Sample& b);

struct PosePrior {
  std::vector<double> joint_std;  // 24, radians
  double shape_std = 1.0;

  /// Larger spread on hips, knees, shoulders and elbows; small on spine and extremities.
  static PosePrior standard();
  void validate() const;
};

struct CameraPrior {
  double yaw_range = 0.8;  // uniform in [-range, range], radians
  double pitch_std = 0.1;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translation_std = 0.05;
  double distance_min = 2.5;  // sensor distance to the root, meters
  double distance_max = 3.5;
};

struct NoiseConfig {
  double kp2d_sigma = 0.01;   // normalised image units
  double depth_sigma = 0.02;  // meters
  double hole_rate = 0.05;
  double occlusion_rate = 0.0;
};

struct PoseShape {
  std::vector<double> beta;
  std::vector<double> theta;
};

/// beta ~ N(0, shape_std^2), theta_j ~ N(0, joint_std[j]^2) clamped to [-pi, pi].
PoseShape sample_pose_shape(Rng& rng, const PosePrior& prior);

camera::CameraParams sample_camera(Rng& rng, const CameraPrior& prior);

struct SampleOptions {
  Annotations annotations;
  bool depth_stream = true;  // false for RGB-only datasets
  double sensor_distance = 3.0;
};

Sample make_sample(const body::SmplLayer& layer, const PoseShape& params, const camera::CameraParams& cam,
                   const DatasetFrame& frame, const NoiseConfig& noise, const SampleOptions& options, Rng& rng,
                   std::string sample_id = {});

/// All p < q pairs with valid readings at both joints.
losses::Relations build_relations(const Sample& sample, double tie_tolerance = losses::kDefaultTieTolerance);
losses::Relations build_relations(const std::vector<double>& depths, double tie_tolerance);

/// Observation vectors for the two streams.
std::vector<double> encode_rgb(const Points& kp2d, const std::vector<std::uint8_t>& visibility);
std::vector<double> encode_depth(const Points& kp2d, const std::vector<double>& depths);

struct DatasetSpec {
  std::string name;
  std::string frame = "common";
  std::size_t train_size = 1000;
  std::size_t test_size = 200;
  bool rgbd = true;  // false: RGB-only, 2D annotations only
  bool has_3d = true;
  NoiseConfig noise;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct GenerationContext {
  const body::SmplLayer* layer = nullptr;
  PosePrior prior = PosePrior::standard();
  CameraPrior camera;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// In-memory generation; sample i of split s uses its own RNG stream derived from
/// (seed, dataset name, split, i), so the thread count does not change the output.
Dataset generate_dataset(const DatasetSpec& spec, const GenerationContext& ctx);

/// Writes <dir>/<name>/{train,test}.jsonl and <dir>/<name>/manifest.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir, const std::string& name);

/// generate_dataset + write_dataset.
Dataset make_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, const GenerationContext& ctx);

std::string sample_to_json(const Sample& s);
Sample sample_from_json(const std::string& line);

/// (J, beta, theta) triples for constraint-generator training; joints in the common frame.
struct PairedSample {
  Points joints;
  std::vector<double> beta;
  std::vector<double> theta;
};
std::vector<PairedSample> make_pairs(const body::SmplLayer& layer, const PosePrior& prior, std::size_t count,
                                     std::uint64_t seed);

/// Ground-truth keypoints of a sample in the common frame (14 x 3, meters).
Points truth_joints(const body::SmplLayer& layer, const Sample& sample);

}  // namespace hmr::data
