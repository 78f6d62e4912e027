#pragma once

// Keypoints-to-SMPL constraint generator: a plain FC stack from root-relative,
// bone-length-normalised 3D keypoints to (beta, theta), trained with a
// parameter term plus a joints-cycle term through the body model, and a
// Procrustes quality gate on the emitted parameters.

#include "hmr/body_model.hpp"
#include "hmr/nn.hpp"
#include "hmr/synth_data.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hmr::uscg {

using ad::Graph;
using ad::Var;
using Points = Eigen::MatrixXd;

inline constexpr std::size_t kInputDim = 3 * body::kNumKeypoints;
inline constexpr std::size_t kOutputDim = body::kNumBetas + body::kNumPose;
inline constexpr double kDefaultThresholdMm = 100.0;

struct UscgConfig {
  std::size_t layers = 10;  // FC layers, including the output layer
  std::size_t width = 256;
  std::size_t root_index = body::kRightHip;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t steps = 4000;
  double param_weight = 1.0;
  double cycle_weight = 1.0;
  bool rotation_matrix_params = false;  // compare pose as rotation matrices in the parameter term
  double threshold_mm = kDefaultThresholdMm;
  std::size_t eval_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Subtracts the root joint from every row.
Points root_relativize(const Points& joints, std::size_t root_index);

/// Mean length of the skeleton edges of the 14-keypoint set.
double mean_bone_length(const Points& joints);

class UscgNetwork {
 public:
  UscgNetwork() = default;
  UscgNetwork(const UscgConfig& config, Rng& rng);

  /// j_rel: [B, 42] root-relative, normalised joints -> [B, 82] = [beta | theta].
  Var forward(Graph& g, const Var& j_rel);
  std::vector<ad::Parameter*> parameters();
  nn::Mlp& mlp() { return net_; }

 private:
  nn::Mlp net_;
};

/// Network input for one skeleton: root-relativised and divided by mean_bone_length.
/// Returns nullopt when the skeleton is degenerate.
std::optional<std::vector<double>> normalise_input(const Points& joints, std::size_t root_index);

struct UscgPrediction {
  std::vector<double> beta;
  std::vector<double> theta;
};

/// Single-skeleton forward; `j_rel` must already be root-relative (meters).
UscgPrediction uscg_forward(UscgNetwork& net, const Points& j_rel, std::size_t root_index);

struct TrainCurve {
  std::vector<std::size_t> steps;
  std::vector<double> train_loss;  // mean objective over the last eval window
  std::vector<double> val_loss;
};

/// Per-sample objective: param_weight * ||[b, t] - [b^, t^]||^2 + cycle_weight * ||J - X(G(J))||^2,
/// averaged over the batch. Joints in meters, root-relative.
Var uscg_objective(Graph& g, UscgNetwork& net, const body::SmplLayer& layer,
                   const std::vector<const data::PairedSample*>& batch, const UscgConfig& config);

TrainCurve uscg_train(UscgNetwork& net, const body::SmplLayer& layer, const std::vector<data::PairedSample>& train,
                      const std::vector<data::PairedSample>& validation, const UscgConfig& config);

struct GeneratedConstraint {
  std::string sample_id;
  std::vector<double> beta_tilde;
  std::vector<double> theta_tilde;
  double cycle_error_mm = 0.0;
  bool accepted = false;
  bool valid = true;  // false for degenerate input skeletons
};

/// native_joints in `frame` coordinates -> common frame -> network -> gate on similarity-aligned MPJPE.
GeneratedConstraint generate_constraint(UscgNetwork& net, const body::SmplLayer& layer, const Points& native_joints,
                                        const data::DatasetFrame& frame, double threshold_mm,
                                        std::size_t root_index = body::kRightHip);

/// Cycle MPJPE (mm) of the network on clean skeletons given in the common frame.
std::vector<double> cycle_errors(UscgNetwork& net, const body::SmplLayer& layer,
                                 const std::vector<data::PairedSample>& samples, std::size_t root_index);

/// One JSON record per line: {sample_id, beta_tilde, theta_tilde, cycle_error_mm, accepted, valid}.
void write_constraints(const std::filesystem::path& path, const std::vector<GeneratedConstraint>& constraints);
std::vector<GeneratedConstraint> read_constraints(const std::filesystem::path& path);

/// Accepted constraints keyed by sample id.
using ConstraintTable = std::map<std::string, GeneratedConstraint>;
ConstraintTable accepted_table(const std::vector<GeneratedConstraint>& constraints);

}  // namespace hmr::uscg
