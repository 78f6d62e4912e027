#pragma once

// Training objectives: 2D keypoint L1, SMPL-parameter L2, depth ranking
// consistency, a least-squares adversarial term and their weighted sum.

#include "hmr/autodiff.hpp"
#include "hmr/nn.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hmr::losses {

using ad::Array;
using ad::Graph;
using ad::Var;

/// Ordinal depth label for a joint pair (p < q): +1 when p is closer, -1 when farther, 0 for a tie.
struct DepthRankRelation {
  std::size_t p = 0;
  std::size_t q = 0;
  int r = 0;
  friend bool operator==(const DepthRankRelation&, const DepthRankRelation&) = default;
};

using Relations = std::vector<DepthRankRelation>;

/// Default tie band on metric depth, meters.
inline constexpr double kDefaultTieTolerance = 0.010;

struct LossWeights {
  double lambda_2d = 10.0;
  double lambda_smpl = 1.0;
  double lambda_drc = 1.0;
  double lambda_adv = 0.1;
  double lambda_3d = 1.0;  // only used by the 3D-joint baseline

  void validate() const;
};

/// |z_p - z_q| <= tie_tolerance counts as equal; tie_tolerance = 0 is the exact rule.
int rank_relation(double z_p, double z_q, double tie_tolerance = kDefaultTieTolerance);

struct MaskedLoss {
  Var value;
  bool contributes = false;  // false when no sample had a visible joint
};

/// pred, gt: [B, K, 2]; visibility: B*K flags. Per sample: mean over visible joints of
/// |dx| + |dy|; the batch value is the mean over samples with at least one visible joint.
MaskedLoss loss_2d(const Var& pred, const Array& gt, std::span<const std::uint8_t> visibility);

/// sum_b w_b * ||generated_b - predicted_b||^2 over [B, 82] rows (w_b = 1 when `sample_weights` is empty).
Var loss_smpl(const Var& predicted, const Array& generated, std::span<const double> sample_weights = {});

/// sum_b w_b * sum_{pairs, r != 0} log(1 + exp(r (z_p - z_q))); z: [B, K].
Var loss_drc(const Var& depths, const std::vector<Relations>& relations, std::span<const double> sample_weights = {});
/// Single sample, z: [K] or [1, K].
Var loss_drc(const Var& depths, const Relations& relations);

/// Mean squared error between root-relative keypoints; pred, gt: [B, K, 3].
Var loss_joints3d(const Var& pred, const Array& gt, std::span<const double> sample_weights);

/// Realism score of (shape, non-root joint rotations).
class Discriminator {
 public:
  static constexpr std::size_t kInput = 10 + 23 * 9;

  Discriminator() = default;
  Discriminator(std::size_t hidden, Rng& rng);

  /// beta: [B, 10]; local_rotations: [B, 24 * 9] (root block is dropped) -> [B, 1] in (0, 1).
  Var forward(Graph& g, const Var& beta, const Var& local_rotations);
  void collect(std::vector<ad::Parameter*>& out) { net_.collect(out); }
  nn::Mlp& net() { return net_; }

 private:
  nn::Mlp net_;
};

/// Generator side: mean (fake - 1)^2. Discriminator side: mean (real - 1)^2 + mean fake^2.
Var loss_adv(bool generator_side, const Var& scores_fake, const Var& scores_real);

struct LossTerm {
  Var value;
  bool available = false;
};

struct LossComponents {
  LossTerm l2d;
  LossTerm smpl;
  LossTerm drc;
  LossTerm adv;
  LossTerm joints3d;
};

/// Weighted sum over the available components; an empty set yields constant 0.
Var loss_total(Graph& g, const LossComponents& components, const LossWeights& weights);

}  // namespace hmr::losses
