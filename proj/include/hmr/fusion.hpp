#pragma once

// Two-stream fusion regressor. Each stream has its own feedforward encoder;
// features are concatenated [RGB | DEPTH], passed through two FC layers and
// fed, together with the current estimate, to an iterative regressor that
// refines the pose state over a fixed number of shared-weight iterations.
//
// During training a stream of an RGB-D sample may be replaced by an all-zeros
// input (void stream) so the network learns to cope with a missing modality.

#include "hmr/body_model.hpp"
#include "hmr/losses.hpp"
#include "hmr/nn.hpp"
#include "hmr/synth_data.hpp"
#include "hmr/uscg.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hmr::fusion {

using ad::Array;
using ad::Graph;
using ad::Var;
using data::StreamKind;

// Pose state layout: [theta 72 | beta 10 | rotation 3 | translation 2 | scale 1].
inline constexpr std::size_t kPoseOffset = 0;
inline constexpr std::size_t kShapeOffset = 72;
inline constexpr std::size_t kRotationOffset = 82;
inline constexpr std::size_t kTranslationOffset = 85;
inline constexpr std::size_t kScaleOffset = 87;
inline constexpr std::size_t kStateDim = 88;

/// Which stream, if any, is voided for a sample.
enum class StreamMask { none, rgb, depth };

/// rgb with probability p_miss, depth with probability p_miss, none otherwise; needs 0 <= p_miss < 0.5.
StreamMask select_streams(Rng& rng, double p_miss);

struct FusionConfig {
  std::size_t feature_dim = 128;     // d
  std::size_t encoder_hidden = 128;
  std::size_t fusion_hidden = 0;     // 0: 2d
  std::size_t fusion_out = 0;        // 0: d
  std::size_t regressor_hidden = 256;
  std::size_t n_iterations = 3;
  double regressor_output_gain = 0.05;

  std::size_t fusion_hidden_width() const { return fusion_hidden == 0 ? 2 * feature_dim : fusion_hidden; }
  std::size_t fusion_out_width() const { return fusion_out == 0 ? feature_dim : fusion_out; }
  void validate() const;
};

struct PoseState {
  std::vector<double> theta;  // 72
  std::vector<double> beta;   // 10
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  double scale = 1.0;

  static PoseState from_row(const Array& states, std::size_t row);
};

class FusionNetwork {
 public:
  FusionNetwork() = default;
  FusionNetwork(const FusionConfig& config, Rng& rng);

  /// obs: [B, 42] (rgb) or [B, 56] (depth) -> [B, d]
  Var encode(Graph& g, StreamKind stream, const Var& obs);
  /// [B, d] x [B, d] -> [B, fusion_out]
  Var fuse(Graph& g, const Var& f_rgb, const Var& f_depth);
  /// phi: [B, fusion_out] -> [B, 88]; starts from mean_theta.
  Var regress(Graph& g, const Var& phi, std::size_t n_iterations);
  /// encode both streams, fuse, regress with the configured iteration count.
  Var forward(Graph& g, const Var& rgb_obs, const Var& depth_obs);

  std::vector<ad::Parameter*> parameters();
  const FusionConfig& config() const { return config_; }
  const Array& mean_theta() const { return mean_theta_; }
  nn::Mlp& encoder(StreamKind stream) { return stream == StreamKind::rgb ? encoder_rgb_ : encoder_depth_; }
  nn::Mlp& fusion() { return fusion_; }
  nn::Mlp& regressor() { return regressor_; }

 private:
  FusionConfig config_;
  nn::Mlp encoder_rgb_;
  nn::Mlp encoder_depth_;
  nn::Mlp fusion_;
  nn::Mlp regressor_;
  Array mean_theta_;  // [1, 88]
};

struct LossSwitches {
  bool use_2d = true;
  bool use_adv = true;
  bool use_smpl_constraints = false;
  bool use_drc = false;
  bool use_3d_joint_loss = false;
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 16;           // RGB-D samples per step, split evenly across RGB-D pools
  std::size_t rgb_only_batch = 0;   // RGB-only samples added per step when an RGB-only pool exists
  double lr = 1e-3;
  double disc_lr = 1e-3;
  std::size_t disc_hidden = 64;
  double p_miss = 0.3;
  bool dropout_training = true;
  double tie_tolerance = losses::kDefaultTieTolerance;
  std::size_t root_index = body::kRightHip;
  LossSwitches switches;
  losses::LossWeights weights;

  void validate() const;
};

/// Loss values of one step; absent components are nullopt.
struct StepLosses {
  std::optional<double> l2d;
  std::optional<double> smpl;
  std::optional<double> drc;
  std::optional<double> adv;
  std::optional<double> joints3d;
  double total = 0.0;
  std::optional<double> disc;
};

/// Observation arrays for a batch after applying per-sample masks.
struct BatchInputs {
  Array rgb;    // [B, 42]
  Array depth;  // [B, 56]
  std::vector<StreamMask> masks;
};

/// Voids the masked streams, and the depth stream of every sample without one.
BatchInputs batch_inputs(const std::vector<const data::Sample*>& batch, const std::vector<StreamMask>& masks);

class Trainer {
 public:
  Trainer(const FusionConfig& fusion, const TrainConfig& train, const body::SmplLayer& layer,
          const data::PosePrior& prior, std::uint64_t seed);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// One generator update on `batch` followed by one discriminator update.
  StepLosses train_step(const std::vector<const data::Sample*>& batch);

  /// Component graph for a batch with explicit masks; used by train_step and gradient checks.
  losses::LossComponents components(Graph& g, const std::vector<const data::Sample*>& batch,
                                    const std::vector<StreamMask>& masks, Var* local_rotations = nullptr,
                                    Var* beta = nullptr);

  /// Masks train_step would draw for `batch` (consumes the trainer rng).
  std::vector<StreamMask> draw_masks(const std::vector<const data::Sample*>& batch);

  void set_constraints(const uscg::ConstraintTable* table) { constraints_ = table; }
  FusionNetwork& network() { return net_; }
  losses::Discriminator& discriminator() { return disc_; }
  const TrainConfig& config() const { return train_; }
  Rng& rng() { return rng_; }

 private:
  FusionConfig fusion_config_;
  TrainConfig train_;
  const body::SmplLayer* layer_;
  data::PosePrior prior_;
  Rng rng_;
  FusionNetwork net_;
  losses::Discriminator disc_;
  std::vector<ad::Parameter*> gen_params_;
  std::vector<ad::Parameter*> disc_params_;
  nn::Adam opt_gen_;
  nn::Adam opt_disc_;
  const uscg::ConstraintTable* constraints_ = nullptr;
};

/// Draws per-step batches: `batch` samples spread evenly over the RGB-D pools plus
/// `rgb_only_batch` from the RGB-only pool.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::vector<const data::Sample*>> rgbd_pools, std::vector<const data::Sample*> rgb_only,
               std::size_t batch, std::size_t rgb_only_batch, std::uint64_t seed);
  std::vector<const data::Sample*> next();

 private:
  std::vector<std::vector<const data::Sample*>> rgbd_;
  std::vector<const data::Sample*> rgb_only_;
  std::size_t batch_;
  std::size_t rgb_only_batch_;
  Rng rng_;
};

/// Runs `steps` train steps; `on_step(step, losses)` is invoked after each.
void train_loop(Trainer& trainer, BatchSampler& sampler, std::size_t steps,
                const std::function<void(std::size_t, const StepLosses&)>& on_step = {});

/// States for each sample given which streams are available; both-void rows are allowed.
Array predict_states(FusionNetwork& net, const std::vector<const data::Sample*>& samples,
                     const std::vector<StreamMask>& masks, const std::vector<bool>& void_both = {});

/// Inference for one sample. Throws when neither stream is available.
PoseState infer(FusionNetwork& net, const data::Sample& sample, bool rgb_available, bool depth_available);

/// Keypoints (common frame, 14 x 3) and camera-frame depths (14) implied by a state.
Eigen::MatrixXd state_keypoints(const body::SmplLayer& layer, const PoseState& state);
Eigen::VectorXd state_depths(const body::SmplLayer& layer, const PoseState& state);

void save_network(const std::string& path, FusionNetwork& net);
void load_network(const std::string& path, FusionNetwork& net);

}  // namespace hmr::fusion
