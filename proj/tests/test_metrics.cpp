#include "hmr/metrics.hpp"
#include "hmr/body_model.hpp"
#include "hmr/rng.hpp"
#include "hmr/synth_data.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <filesystem>

using namespace hmr;
using namespace hmr::metrics;

namespace {

Points random_points(Rng& rng, int k = 14) {
  Points p(k, 3);
  for (int i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = normal(rng, 0.0, 0.4);
  return p;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  return body::rodrigues(Eigen::Vector3d(normal(rng), normal(rng), normal(rng)));
}

Points transform(const Points& a, double s, const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  return ((s * a * r.transpose()).rowwise() + t.transpose());
}

// Independent oracle: damped Gauss-Newton over (log s, axis-angle, t) with a
// finite-difference Jacobian, restarted from several rotations.
struct OracleFit {
  double scale;
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
  double cost;
};

OracleFit oracle_fit(const Points& a, const Points& b, bool with_scale, Rng& rng) {
  const int k = static_cast<int>(a.rows());
  auto unpack = [&](const Eigen::VectorXd& p, double& s, Eigen::Matrix3d& r, Eigen::Vector3d& t) {
    s = with_scale ? std::exp(p[0]) : 1.0;
    r = body::rodrigues(Eigen::Vector3d(p[1], p[2], p[3]));
    t = Eigen::Vector3d(p[4], p[5], p[6]);
  };
  auto residual = [&](const Eigen::VectorXd& p) {
    double s;
    Eigen::Matrix3d r;
    Eigen::Vector3d t;
    unpack(p, s, r, t);
    const Points d = transform(a, s, r, t) - b;
    Eigen::VectorXd out(3 * k);
    for (int i = 0; i < k; ++i) out.segment<3>(3 * i) = d.row(i).transpose();
    return out;
  };
  OracleFit best{1.0, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), INFINITY};
  for (int restart = 0; restart < 8; ++restart) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(7);
    if (restart > 0)
      for (int i = 1; i < 4; ++i) p[i] = normal(rng, 0.0, 1.5);
    p.segment<3>(4) = (b.colwise().mean() - a.colwise().mean()).transpose();
    double lambda = 1e-3;
    Eigen::VectorXd r = residual(p);
    for (int it = 0; it < 500; ++it) {
      Eigen::MatrixXd jac(3 * k, 7);
      for (int j = 0; j < 7; ++j) {
        Eigen::VectorXd hi = p, lo = p;
        hi[j] += 1e-7;
        lo[j] -= 1e-7;
        jac.col(j) = (residual(hi) - residual(lo)) / 2e-7;
      }
      if (!with_scale) jac.col(0).setZero();
      Eigen::MatrixXd h = jac.transpose() * jac;
      const Eigen::VectorXd grad = jac.transpose() * r;
      h.diagonal().array() += lambda * (h.diagonal().array() + 1e-12);
      if (!with_scale) h(0, 0) = 1.0;
      const Eigen::VectorXd step = h.ldlt().solve(-grad);
      const Eigen::VectorXd r_new = residual(p + step);
      if (r_new.squaredNorm() < r.squaredNorm()) {
        p += step;
        r = r_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        if (step.norm() < 1e-15) break;
      } else {
        lambda *= 4.0;
        if (lambda > 1e12) break;
      }
    }
    if (r.squaredNorm() < best.cost) {
      unpack(p, best.scale, best.rotation, best.translation);
      best.cost = r.squaredNorm();
    }
  }
  return best;
}

}  // namespace

TEST(Procrustes, IdentityAlignment) {
  Rng rng(1);
  const Points a = random_points(rng);
  const AlignmentResult r = procrustes_align(a, a);
  EXPECT_NEAR(r.scale, 1.0, 1e-12);
  EXPECT_LT((r.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(r.translation.norm(), 1e-12);
  EXPECT_LT(r.residual_mm, 1e-9);
}

TEST(Procrustes, SimilarityCopiesHaveZeroError) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Points gt = random_points(rng);
    const double s = uniform(rng, 0.2, 5.0);
    const Eigen::Vector3d t(normal(rng), normal(rng), normal(rng));
    const Points pred = transform(gt, s, random_rotation(rng), t);
    EXPECT_LT(reconstruction_error(pred, gt), 1e-9);
    const AlignmentResult r = procrustes_align(transform(gt, 2.0, Eigen::Matrix3d::Identity(), t), gt);
    EXPECT_NEAR(r.scale, 0.5, 1e-12);
  }
}

TEST(Procrustes, RotationIsProperAndScalePositive) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Points b = random_points(rng);
    Points a = random_points(rng);
    a.col(0) *= -1.0;  // tempts a reflection
    const AlignmentResult r = procrustes_align(a, b);
    EXPECT_NEAR(r.rotation.determinant(), 1.0, 1e-10);
    EXPECT_LT((r.rotation.transpose() * r.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GT(r.scale, 0.0);
  }
}

TEST(Procrustes, AgreesWithNumericalMinimisationOracle) {
  Rng rng(4);
  for (int pair = 0; pair < 100; ++pair) {
    const Points b = random_points(rng);
    Points a = transform(b, uniform(rng, 0.5, 2.0), random_rotation(rng), Eigen::Vector3d(normal(rng), normal(rng), normal(rng)));
    a += 0.05 * random_points(rng);
    for (AlignMode mode : {AlignMode::similarity, AlignMode::rigid}) {
      const OracleFit o = oracle_fit(a, b, mode == AlignMode::similarity, rng);
      const double oracle_mm = mpjpe(transform(a, o.scale, o.rotation, o.translation), b);
      EXPECT_NEAR(reconstruction_error(a, b, mode), oracle_mm, 1e-6) << "pair " << pair;
      const AlignmentResult r = procrustes_align(a, b, mode);
      EXPECT_NEAR(r.scale, o.scale, 1e-7);
      EXPECT_LT((r.rotation - o.rotation).cwiseAbs().maxCoeff(), 1e-7);
    }
  }
}

TEST(Procrustes, ResidualInvariantUnderPreappliedSimilarity) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Points a = random_points(rng), b = random_points(rng);
    const Points a2 = transform(a, uniform(rng, 0.3, 3.0), random_rotation(rng), Eigen::Vector3d(normal(rng), normal(rng), normal(rng)));
    EXPECT_NEAR(procrustes_align(a, b).residual_mm, procrustes_align(a2, b).residual_mm, 1e-9);
  }
}

TEST(Procrustes, RejectsDegenerateInput) {
  Points line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) = Eigen::RowVector3d(i, 2 * i, -i);
  Rng rng(6);
  EXPECT_THROW(procrustes_align(line, random_points(rng, 5)), UnalignableError);
  EXPECT_THROW(procrustes_align(Points::Zero(14, 3), random_points(rng)), UnalignableError);
  EXPECT_THROW(procrustes_align(random_points(rng, 2), random_points(rng, 2)), UnalignableError);
}

TEST(Mpjpe, OffsetAndSymmetry) {
  Rng rng(7);
  const Points a = random_points(rng);
  EXPECT_EQ(mpjpe(a, a), 0.0);
  const Points b = a.rowwise() + Eigen::RowVector3d(0.003, 0.004, 0.0);
  EXPECT_NEAR(mpjpe(a, b), std::sqrt(3.0 * 3.0 + 4.0 * 4.0), 1e-9);
  const Points c = random_points(rng);
  EXPECT_EQ(mpjpe(a, c), mpjpe(c, a));
}

TEST(ReconstructionError, NeverExceedsMpjpe) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const Points a = random_points(rng), b = random_points(rng);
    EXPECT_LE(reconstruction_error(a, b), mpjpe(a, b) + 1e-9);
    EXPECT_LE(reconstruction_error(a, b, AlignMode::rigid), mpjpe(a, b) + 1e-9);
    EXPECT_LE(reconstruction_error(a, b), reconstruction_error(a, b, AlignMode::rigid) + 1e-9);
  }
}

TEST(ReconstructionError, InvariantToDatasetFrameOfGroundTruth) {
  Rng rng(9);
  const data::DatasetFrame frame = data::builtin_frame("frame-a");
  for (int i = 0; i < 50; ++i) {
    const Points pred = random_points(rng), gt = random_points(rng);
    EXPECT_NEAR(reconstruction_error(pred, gt), reconstruction_error(pred, frame.apply(gt)) / 1000.0 * 1.0, 1e-6);
  }
}

TEST(OrdinalAccuracy, ExactNegatedAndEmpty) {
  Rng rng(10);
  Eigen::VectorXd z(14);
  for (int i = 0; i < 14; ++i) z[i] = normal(rng);
  const losses::Relations rel = data::build_relations(std::vector<double>(z.data(), z.data() + 14), 0.0);
  EXPECT_EQ(ordinal_accuracy(z, rel).value(), 1.0);
  EXPECT_EQ(ordinal_accuracy(-z, rel).value(), 0.0);
  EXPECT_FALSE(ordinal_accuracy(z, {}).has_value());
  EXPECT_FALSE(ordinal_accuracy(z, {{0, 1, 0}}).has_value());
}

TEST(OrdinalAccuracy, RandomPredictionsAverageOneHalf) {
  Rng rng(11);
  double total = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd truth(14), guess(14);
    for (int i = 0; i < 14; ++i) {
      truth[i] = normal(rng);
      guess[i] = normal(rng);
    }
    total += ordinal_accuracy(guess, data::build_relations(std::vector<double>(truth.data(), truth.data() + 14), 0.0)).value();
  }
  EXPECT_NEAR(total / trials, 0.5, 0.02);
}

TEST(SweepGrid, CsvRoundTripAndHeader) {
  SweepGrid g;
  g.p_rgb_levels = default_sweep_levels();
  g.p_d_levels = default_sweep_levels();
  ASSERT_EQ(g.p_rgb_levels.size(), 11u);
  EXPECT_DOUBLE_EQ(g.p_rgb_levels.back(), 1.0);
  g.cells = Eigen::MatrixXd::Random(11, 11);
  const auto path = std::filesystem::temp_directory_path() / "hmr_sweep_test.csv";
  write_sweep_csv(path.string(), g);
  const SweepGrid back = read_sweep_csv(path.string());
  EXPECT_EQ(back.p_rgb_levels, g.p_rgb_levels);
  EXPECT_EQ(back.p_d_levels, g.p_d_levels);
  EXPECT_EQ(back.cells, g.cells);
  std::filesystem::remove(path);
  const SweepGrid d = grid_difference(g, back);
  EXPECT_EQ(d.cells.cwiseAbs().maxCoeff(), 0.0);
  SweepGrid bad = g;
  bad.cells = Eigen::MatrixXd::Zero(3, 3);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
