#include "hmr/losses.hpp"
#include "hmr/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hmr;
using namespace hmr::losses;
using ad::Array;
using ad::Graph;

namespace {

Relations random_relations(Rng& rng, std::size_t k) {
  Relations out;
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t q = p + 1; q < k; ++q) out.push_back({p, q, static_cast<int>(std::floor(uniform(rng, -1.0, 2.0)))});
  return out;
}

double softplus_ref(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

TEST(Loss2d, ZeroForIdenticalKeypoints) {
  Graph g;
  Array kp({1, 14, 2});
  for (std::size_t i = 0; i < kp.size(); ++i) kp[i] = 0.01 * static_cast<double>(i);
  std::vector<std::uint8_t> vis(14, 1);
  const MaskedLoss l = loss_2d(g.constant(kp), kp, vis);
  EXPECT_TRUE(l.contributes);
  EXPECT_EQ(l.value.item(), 0.0);
}

TEST(Loss2d, UnitOffsetGivesMeanOfOne) {
  Graph g;
  Array gt({1, 14, 2}), pred({1, 14, 2});
  for (std::size_t j = 0; j < 14; ++j) pred[2 * j] = 1.0;
  std::vector<std::uint8_t> vis(14, 1);
  // per joint |1| + |0| = 1, mean over 14 visible joints = 1
  EXPECT_DOUBLE_EQ(loss_2d(g.constant(pred), gt, vis).value.item(), 1.0);
}

TEST(Loss2d, MaskedJointContributesNothing) {
  Graph g;
  Array gt({1, 14, 2}), pred({1, 14, 2});
  pred[6] = 5.0;
  std::vector<std::uint8_t> vis(14, 1);
  vis[3] = 0;
  EXPECT_EQ(loss_2d(g.constant(pred), gt, vis).value.item(), 0.0);
}

TEST(Loss2d, NoVisibleJointsIsFlagged) {
  Graph g;
  Array kp({2, 14, 2}, 1.0);
  std::vector<std::uint8_t> vis(28, 0);
  const MaskedLoss l = loss_2d(g.constant(kp), Array({2, 14, 2}), vis);
  EXPECT_FALSE(l.contributes);
  EXPECT_EQ(l.value.item(), 0.0);
}

TEST(LossSmpl, ZeroForIdenticalParameters) {
  Graph g;
  Array p({1, 82}, 0.3);
  EXPECT_EQ(loss_smpl(g.constant(p), p).item(), 0.0);
}

TEST(LossSmpl, AllOnesResidualGivesEightyTwo) {
  Graph g;
  EXPECT_DOUBLE_EQ(loss_smpl(g.constant(Array({1, 82}, 1.0)), Array({1, 82})).item(), 82.0);
}

TEST(LossSmpl, QuadraticInResidualAndSummedOverBatch) {
  Rng rng(1);
  Array a({3, 82}), b({3, 82});
  for (double& v : a.data) v = normal(rng);
  Array doubled = a;
  for (double& v : doubled.data) v *= 2.0;
  Graph g;
  const double l1 = loss_smpl(g.constant(a), b).item();
  EXPECT_NEAR(loss_smpl(g.constant(doubled), b).item(), 4.0 * l1, 1e-10);
  double rows = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    Array row({1, 82}, std::vector<double>(a.data.begin() + static_cast<std::ptrdiff_t>(r * 82), a.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * 82)));
    rows += loss_smpl(g.constant(row), Array({1, 82})).item();
  }
  EXPECT_NEAR(l1, rows, 1e-10);
}

TEST(RankRelation, CloserFartherAndTie) {
  EXPECT_EQ(rank_relation(1.0, 2.0, 0.01), 1);
  EXPECT_EQ(rank_relation(2.0, 1.0, 0.01), -1);
  EXPECT_EQ(rank_relation(1.500, 1.505, 0.01), 0);
  EXPECT_EQ(rank_relation(1.0, 1.0, 0.0), 0);
  EXPECT_EQ(rank_relation(1.0, 1.0 + 1e-12, 0.0), 1);
}

TEST(LossDrc, ConsistentPairScalarExample) {
  Graph g;
  // z_p - z_q = -5 with r = +1
  const double v = loss_drc(g.constant(Array({2}, {0.0, 5.0})), Relations{{0, 1, 1}}).item();
  EXPECT_NEAR(v, std::log1p(std::exp(-5.0)), 1e-9);
  EXPECT_NEAR(v, 0.006715348489, 1e-9);
}

TEST(LossDrc, InconsistentPairScalarExample) {
  Graph g;
  const double v = loss_drc(g.constant(Array({2}, {5.0, 0.0})), Relations{{0, 1, 1}}).item();
  EXPECT_NEAR(v, std::log(1.0 + std::exp(5.0)), 1e-9);
  EXPECT_NEAR(v, 5.006715348489, 1e-9);
}

TEST(LossDrc, EmptyRelationSetIsZero) {
  Graph g;
  EXPECT_EQ(loss_drc(g.constant(Array({14}, 1.0)), Relations{}).item(), 0.0);
}

TEST(LossDrc, TiesAreSkipped) {
  Graph g;
  Var z = g.variable(Array({3}, {0.3, -0.2, 0.9}));
  Var l = loss_drc(z, Relations{{0, 1, 0}, {0, 2, 0}, {1, 2, 0}});
  EXPECT_EQ(l.item(), 0.0);
}

TEST(LossDrc, MatchesDirectSumOverPairs) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Array z({14});
    for (double& v : z.data) v = normal(rng);
    const Relations rel = random_relations(rng, 14);
    double ref = 0.0;
    for (const auto& r : rel)
      if (r.r != 0) ref += softplus_ref(r.r * (z[r.p] - z[r.q]));
    Graph g;
    EXPECT_NEAR(loss_drc(g.constant(z), rel).item(), ref, 1e-10);
  }
}

TEST(LossDrc, ShiftInvariantExactly) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Array z({14});
    for (double& v : z.data) v = std::ldexp(std::round(normal(rng) * 1024.0), -10);
    const Relations rel = random_relations(rng, 14);
    Array shifted = z;
    const double c = static_cast<double>(trial % 7) - 3.0;
    for (double& v : shifted.data) v += c;
    Graph g;
    EXPECT_EQ(loss_drc(g.constant(z), rel).item(), loss_drc(g.constant(shifted), rel).item());
  }
}

TEST(LossDrc, MonotoneInViolatedMargin) {
  Graph g;
  double prev = INFINITY;
  for (double d = 4.0; d >= -4.0; d -= 0.25) {
    const double v = loss_drc(g.constant(Array({2}, {d, 0.0})), Relations{{0, 1, 1}}).item();
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(LossDrc, VanishesAsConsistentMarginGrows) {
  Rng rng(4);
  Array z({14});
  for (std::size_t i = 0; i < 14; ++i) z[i] = static_cast<double>(i);
  Relations rel;
  for (std::size_t p = 0; p < 14; ++p)
    for (std::size_t q = p + 1; q < 14; ++q) rel.push_back({p, q, 1});
  double prev = INFINITY;
  for (double m : {1.0, 10.0, 100.0, 1000.0}) {
    Array scaled = z;
    for (double& v : scaled.data) v *= m;
    Graph g;
    const double v = loss_drc(g.constant(scaled), rel).item();
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-300 + 1e-12);
}

TEST(LossDrc, BatchedMatchesPerSampleSum) {
  Rng rng(5);
  Array z({3, 14});
  for (double& v : z.data) v = normal(rng);
  std::vector<Relations> rel{random_relations(rng, 14), random_relations(rng, 14), random_relations(rng, 14)};
  Graph g;
  double per = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    Array row({14}, std::vector<double>(z.data.begin() + static_cast<std::ptrdiff_t>(b * 14), z.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * 14)));
    per += loss_drc(g.constant(row), rel[b]).item();
  }
  EXPECT_NEAR(loss_drc(g.constant(z), rel).item(), per, 1e-10);
}

TEST(Discriminator, ZeroWeightsScoreHalf) {
  Rng rng(6);
  Discriminator d(16, rng);
  d.net().zero_weights();
  Graph g;
  Var s = d.forward(g, g.constant(Array({2, 10}, 0.4)), g.constant(Array({2, 216}, -0.3)));
  for (double v : s.value().data) EXPECT_EQ(v, 0.5);
}

TEST(Discriminator, DeterministicAndInUnitInterval) {
  Rng rng(7);
  Discriminator d(16, rng);
  Array beta({4, 10}), rot({4, 216});
  for (double& v : beta.data) v = normal(rng, 0, 3);
  for (double& v : rot.data) v = normal(rng, 0, 3);
  Graph g;
  const Array a = d.forward(g, g.constant(beta), g.constant(rot)).value();
  const Array b = d.forward(g, g.constant(beta), g.constant(rot)).value();
  EXPECT_EQ(a, b);
  for (double v : a.data) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Discriminator, IgnoresRootRotation) {
  Rng rng(8);
  Discriminator d(16, rng);
  Array beta({1, 10}), rot({1, 216});
  for (double& v : rot.data) v = normal(rng);
  Array moved = rot;
  for (std::size_t i = 0; i < 9; ++i) moved[i] += 1.0;
  Graph g;
  EXPECT_EQ(d.forward(g, g.constant(beta), g.constant(rot)).item(), d.forward(g, g.constant(beta), g.constant(moved)).item());
}

TEST(LossAdv, GeneratorAndDiscriminatorSides) {
  Graph g;
  EXPECT_EQ(loss_adv(true, g.constant(Array({3}, 1.0)), g.constant(Array({3}, 0.2))).item(), 0.0);
  EXPECT_EQ(loss_adv(false, g.constant(Array({3}, 0.0)), g.constant(Array({3}, 1.0))).item(), 0.0);
  // (0.5 - 1)^2
  EXPECT_DOUBLE_EQ(loss_adv(true, g.constant(Array({3}, 0.5)), g.constant(Array({3}, 0.5))).item(), 0.25);
}

TEST(LossTotal, WeightedSumOfAvailableTerms) {
  Graph g;
  LossComponents c;
  c.l2d = {g.constant(Array::scalar(1.0)), true};
  c.smpl = {g.constant(Array::scalar(2.0)), true};
  c.drc = {g.constant(Array::scalar(3.0)), true};
  c.adv = {g.constant(Array::scalar(4.0)), true};
  LossWeights ones{1, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(loss_total(g, c, ones).item(), 10.0);
  LossWeights no_drc = ones;
  no_drc.lambda_drc = 0.0;
  const double a = loss_total(g, c, no_drc).item();
  c.drc = {g.constant(Array::scalar(300.0)), true};
  EXPECT_EQ(loss_total(g, c, no_drc).item(), a);
  c.smpl.available = false;
  c.drc.available = false;
  EXPECT_DOUBLE_EQ(loss_total(g, c, LossWeights{}).item(), 10.0 * 1.0 + 0.1 * 4.0);
  EXPECT_EQ(loss_total(g, LossComponents{}, LossWeights{}).item(), 0.0);
}

TEST(LossWeights, RejectNegative) {
  LossWeights w;
  w.lambda_adv = -0.1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(LossGradients, EveryLossPassesGradCheck) {
  Rng rng(9);
  for (int point = 0; point < 10; ++point) {
    Array pred({2, 14, 2}), gt({2, 14, 2});
    for (double& v : pred.data) v = normal(rng);
    for (double& v : gt.data) v = normal(rng);
    std::vector<std::uint8_t> vis(28);
    for (auto& v : vis) v = uniform(rng) < 0.8;
    EXPECT_LT(ad::grad_check([&](Graph&, const Var& x) { return loss_2d(x, gt, vis).value; }, pred), 1e-4);

    Array p82({2, 82}), t82({2, 82});
    for (double& v : p82.data) v = normal(rng);
    for (double& v : t82.data) v = normal(rng);
    const std::vector<double> w{0.5, 1.5};
    EXPECT_LT(ad::grad_check([&](Graph&, const Var& x) { return loss_smpl(x, t82, w); }, p82), 1e-4);

    Array z({2, 14});
    for (double& v : z.data) v = normal(rng);
    const std::vector<Relations> rel{random_relations(rng, 14), random_relations(rng, 14)};
    EXPECT_LT(ad::grad_check([&](Graph&, const Var& x) { return loss_drc(x, rel); }, z), 1e-4);

    Array p3({2, 14, 3}), g3({2, 14, 3});
    for (double& v : p3.data) v = normal(rng);
    for (double& v : g3.data) v = normal(rng);
    EXPECT_LT(ad::grad_check([&](Graph&, const Var& x) { return loss_joints3d(x, g3, w); }, p3), 1e-4);

    Array fake({4, 1});
    for (double& v : fake.data) v = uniform(rng, 0.05, 0.95);
    for (bool side : {true, false})
      EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return loss_adv(side, x, g.constant(Array({4, 1}, 0.7))); }, fake), 1e-4);

    Array comps({4});
    for (double& v : comps.data) v = normal(rng);
    LossWeights lw{0.5, 2.0, 0.3, 0.1, 1.0};
    EXPECT_LT(ad::grad_check(
                  [&](Graph& g, const Var& x) {
                    LossComponents c;
                    c.l2d = {ad::square(ad::take(x, {0})), true};
                    c.smpl = {ad::square(ad::take(x, {1})), true};
                    c.drc = {ad::softplus(ad::take(x, {2})), true};
                    c.adv = {ad::square(ad::take(x, {3})), true};
                    return loss_total(g, c, lw);
                  },
                  comps),
              1e-4);
  }
}

TEST(LossGradients, DiscriminatorPassesGradCheck) {
  Rng rng(10);
  Discriminator d(8, rng);
  std::vector<ad::Parameter*> params;
  d.collect(params);
  for (int point = 0; point < 10; ++point) {
    Array beta({3, 10}), rot({3, 216});
    for (double& v : beta.data) v = normal(rng);
    for (double& v : rot.data) v = normal(rng);
    const auto r = ad::grad_check_params(
        [&](Graph& g) { return loss_adv(false, d.forward(g, g.constant(beta), g.constant(rot)), g.constant(Array({3, 1}, 0.8))); },
        params);
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return ad::sum(d.forward(g, g.constant(beta), x)); }, rot), 1e-4);
  }
}
