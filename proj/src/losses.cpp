#include "hmr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace hmr::losses {

void LossWeights::validate() const {
  const double all[] = {lambda_2d, lambda_smpl, lambda_drc, lambda_adv, lambda_3d};
  for (double w : all)
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("loss weights must be finite and >= 0");
}

int rank_relation(double z_p, double z_q, double tie_tolerance) {
  if (std::abs(z_p - z_q) <= tie_tolerance) return 0;
  return z_p < z_q ? 1 : -1;
}

MaskedLoss loss_2d(const Var& pred, const Array& gt, std::span<const std::uint8_t> visibility) {
  const ad::Shape& s = pred.shape();
  if (s.size() != 3 || s[2] != 2 || gt.shape != s) throw ad::ShapeError("loss_2d", s, gt.shape);
  const std::size_t batch = s[0];
  const std::size_t k = s[1];
  if (visibility.size() != batch * k) throw ad::ShapeError("loss_2d visibility", s, "need B*K flags");
  Graph& g = *pred.graph();
  std::vector<std::size_t> counts(batch, 0);
  std::size_t contributing = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < k; ++j) counts[b] += visibility[b * k + j] ? 1 : 0;
    if (counts[b] > 0) ++contributing;
  }
  if (contributing == 0) return {g.constant(Array::scalar(0.0)), false};
  Array w(s);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < k; ++j)
      if (visibility[b * k + j]) {
        const double wj = 1.0 / (static_cast<double>(counts[b]) * static_cast<double>(contributing));
        w[(b * k + j) * 2] = wj;
        w[(b * k + j) * 2 + 1] = wj;
      }
  Var err = ad::abs(pred - g.constant(gt));
  return {ad::sum(err * g.constant(std::move(w))), true};
}

namespace {

Array row_weights(std::span<const double> sample_weights, std::size_t batch, std::size_t width) {
  if (!sample_weights.empty() && sample_weights.size() != batch)
    throw std::invalid_argument("sample weight count does not match the batch");
  Array w({batch, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < width; ++c) w[b * width + c] = sample_weights.empty() ? 1.0 : sample_weights[b];
  return w;
}

}  // namespace

Var loss_smpl(const Var& predicted, const Array& generated, std::span<const double> sample_weights) {
  const ad::Shape& s = predicted.shape();
  if (s.size() != 2 || generated.shape != s) throw ad::ShapeError("loss_smpl", s, generated.shape);
  Graph& g = *predicted.graph();
  Var sq = ad::square(g.constant(generated) - predicted);
  return ad::sum(sq * g.constant(row_weights(sample_weights, s[0], s[1])));
}

Var loss_drc(const Var& depths, const std::vector<Relations>& relations, std::span<const double> sample_weights) {
  const ad::Shape& s = depths.shape();
  if (s.size() != 2) throw ad::ShapeError("loss_drc", s, "depths must be [B, K]");
  const std::size_t batch = s[0];
  const std::size_t k = s[1];
  if (relations.size() != batch) throw ad::ShapeError("loss_drc", s, "one relation list per sample");
  if (!sample_weights.empty() && sample_weights.size() != batch)
    throw std::invalid_argument("loss_drc: sample weight count does not match the batch");
  Graph& g = *depths.graph();
  std::vector<std::size_t> ps;
  std::vector<std::size_t> qs;
  std::vector<double> signs;
  std::vector<double> weights;
  for (std::size_t b = 0; b < batch; ++b) {
    const double w = sample_weights.empty() ? 1.0 : sample_weights[b];
    if (w == 0.0) continue;
    for (const DepthRankRelation& rel : relations[b]) {
      if (rel.r == 0) continue;
      if (rel.p >= k || rel.q >= k) throw std::out_of_range("loss_drc: joint index out of range");
      ps.push_back(b * k + rel.p);
      qs.push_back(b * k + rel.q);
      signs.push_back(static_cast<double>(rel.r));
      weights.push_back(w);
    }
  }
  if (ps.empty()) return ad::scale(ad::sum(depths), 0.0);
  const std::size_t n = ps.size();
  Var diff = ad::take(depths, std::move(ps)) - ad::take(depths, std::move(qs));
  Var margin = diff * g.constant(Array({n}, std::move(signs)));
  return ad::sum(ad::softplus(margin) * g.constant(Array({n}, std::move(weights))));
}

Var loss_drc(const Var& depths, const Relations& relations) {
  const std::size_t k = depths.shape().back();
  return loss_drc(ad::reshape(depths, {1, k}), std::vector<Relations>{relations});
}

Var loss_joints3d(const Var& pred, const Array& gt, std::span<const double> sample_weights) {
  const ad::Shape& s = pred.shape();
  if (s.size() != 3 || gt.shape != s) throw ad::ShapeError("loss_joints3d", s, gt.shape);
  Graph& g = *pred.graph();
  const std::size_t per = s[1] * s[2];
  Array w = row_weights(sample_weights, s[0], per);
  for (double& v : w.data) v /= static_cast<double>(per);
  w.shape = s;
  return ad::sum(ad::square(pred - g.constant(gt)) * g.constant(std::move(w)));
}

Discriminator::Discriminator(std::size_t hidden, Rng& rng)
    : net_("discriminator", {kInput, hidden, hidden, 1}, rng, false, 0.1) {}

Var Discriminator::forward(Graph& g, const Var& beta, const Var& local_rotations) {
  const std::size_t batch = beta.shape()[0];
  if (local_rotations.shape() != ad::Shape{batch, 24 * 9})
    throw ad::ShapeError("discriminator", beta.shape(), local_rotations.shape());
  Var x = ad::concat({beta, ad::slice_last(local_rotations, 9, 24 * 9)});
  return ad::sigmoid(net_.forward(g, x));
}

Var loss_adv(bool generator_side, const Var& scores_fake, const Var& scores_real) {
  if (generator_side) return ad::mean(ad::square(ad::add_scalar(scores_fake, -1.0)));
  return ad::mean(ad::square(ad::add_scalar(scores_real, -1.0))) + ad::mean(ad::square(scores_fake));
}

Var loss_total(Graph& g, const LossComponents& c, const LossWeights& w) {
  Var total = g.constant(Array::scalar(0.0));
  auto accumulate = [&](const LossTerm& term, double lambda) {
    if (!term.available || !term.value.valid()) return;
    total = total + ad::scale(term.value, lambda);
  };
  accumulate(c.l2d, w.lambda_2d);
  accumulate(c.smpl, w.lambda_smpl);
  accumulate(c.drc, w.lambda_drc);
  accumulate(c.adv, w.lambda_adv);
  accumulate(c.joints3d, w.lambda_3d);
  return total;
}

}  // namespace hmr::losses
