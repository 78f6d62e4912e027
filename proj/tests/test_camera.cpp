#include "hmr/camera.hpp"

#include "hmr/rng.hpp"

#include <Eigen/Geometry>

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <numeric>

using namespace hmr;
using namespace hmr::camera;
using ad::Array;
using ad::Graph;

namespace {

Eigen::MatrixXd random_joints(Rng& rng, int k = 14) {
  Eigen::MatrixXd j(k, 3);
  for (int i = 0; i < k; ++i)
    for (int c = 0; c < 3; ++c) j(i, c) = normal(rng, 0.0, 0.5);
  return j;
}

CameraParams random_camera(Rng& rng) {
  CameraParams c;
  c.global_rotation = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
  c.translation = Eigen::Vector2d(normal(rng, 0, 0.2), normal(rng, 0, 0.2));
  c.scale = uniform(rng, 0.5, 2.0);
  return c;
}

std::vector<std::size_t> argsort(const Eigen::VectorXd& z) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(z.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return z[static_cast<Eigen::Index>(a)] < z[static_cast<Eigen::Index>(b)]; });
  return idx;
}

}  // namespace

TEST(Camera, OrthographicDropOfDepth) {
  Eigen::MatrixXd x(1, 3);
  x << 0.5, 0.25, 3.0;
  const Eigen::MatrixXd p = project(x, CameraParams{});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.25);
}

TEST(Camera, ScaleAndTranslation) {
  Eigen::MatrixXd x(1, 3);
  x << 0.5, 0.25, 3.0;
  CameraParams c;
  c.scale = 2.0;
  c.translation = Eigen::Vector2d(1.0, -1.0);
  const Eigen::MatrixXd p = project(x, c);
  // 2 * 0.5 + 1 and 2 * 0.25 - 1
  EXPECT_DOUBLE_EQ(p(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p(0, 1), -0.5);
}

TEST(Camera, ProjectionIgnoresAbsoluteDepth) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Eigen::MatrixXd j = random_joints(rng);
    CameraParams c = random_camera(rng);
    // a shift along the camera axis: rotate (0, 0, dz) back into the model frame
    const Eigen::Matrix3d r = Eigen::AngleAxisd(c.global_rotation.norm(), c.global_rotation.normalized()).toRotationMatrix();
    const Eigen::RowVector3d shift = (r.transpose() * Eigen::Vector3d(0, 0, normal(rng, 0, 5))).transpose();
    const Eigen::MatrixXd moved = j.rowwise() + shift;
    EXPECT_LT((project(moved, c) - project(j, c)).cwiseAbs().maxCoeff(), 1e-12);
    c.global_rotation.setZero();
    Eigen::MatrixXd dz = j;
    dz.col(2).array() += 4.0;
    EXPECT_EQ(project(dz, c), project(j, c));
  }
}

TEST(Camera, DepthsWithoutRotationAreRawZ) {
  Rng rng(2);
  const Eigen::MatrixXd j = random_joints(rng);
  EXPECT_EQ(camera_depths(j, CameraParams{}), Eigen::VectorXd(j.col(2)));
}

TEST(Camera, HalfTurnAboutXNegatesDepth) {
  Rng rng(3);
  Eigen::MatrixXd j = random_joints(rng);
  j.col(1).setZero();
  CameraParams c;
  c.global_rotation = Eigen::Vector3d(std::numbers::pi, 0, 0);
  Eigen::Matrix3d oracle;
  oracle << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const Eigen::VectorXd expected = (j * oracle.transpose()).col(2);
  const Eigen::VectorXd z = camera_depths(j, c);
  EXPECT_LT((z - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((z + j.col(2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Camera, ConstantDepthShiftKeepsDifferences) {
  Rng rng(4);
  const Eigen::MatrixXd j = random_joints(rng);
  Eigen::MatrixXd shifted = j;
  shifted.col(2).array() += 2.5;
  const Eigen::VectorXd a = camera_depths(j, CameraParams{}), b = camera_depths(shifted, CameraParams{});
  EXPECT_LT(((b - a).array() - 2.5).abs().maxCoeff(), 1e-12);
}

TEST(Camera, DepthOrderInvariantUnderPositiveScaling) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Eigen::MatrixXd j = random_joints(rng);
    const CameraParams c = random_camera(rng);
    EXPECT_EQ(argsort(camera_depths(j, c)), argsort(camera_depths(j * uniform(rng, 0.1, 10.0), c)));
  }
}

TEST(Camera, RejectsNonPositiveScale) {
  CameraParams c;
  c.scale = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.scale = -1.0;
  EXPECT_THROW(project(Eigen::MatrixXd::Zero(14, 3), c), std::invalid_argument);
}

TEST(Camera, GraphVersionMatchesPlain) {
  Rng rng(6);
  const Eigen::MatrixXd j = random_joints(rng);
  const CameraParams c = random_camera(rng);
  Array ja({1, 14, 3});
  for (int r = 0; r < 14; ++r)
    for (int k = 0; k < 3; ++k) ja[static_cast<std::size_t>(r * 3 + k)] = j(r, k);
  Graph g;
  const Array& p = project(g.constant(ja), g.constant(Array({1, 3}, {c.global_rotation.x(), c.global_rotation.y(), c.global_rotation.z()})),
                           g.constant(Array({1, 2}, {c.translation.x(), c.translation.y()})), g.constant(Array({1, 1}, {c.scale})))
                       .value();
  const Eigen::MatrixXd ref = project(j, c);
  for (int r = 0; r < 14; ++r)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(p[static_cast<std::size_t>(r * 2 + k)], ref(r, k), 1e-12);
}

TEST(Camera, GradientsPassGradCheck) {
  Rng rng(7);
  for (int point = 0; point < 10; ++point) {
    Array joints({2, 14, 3}), rot({2, 3}), trans({2, 2}), scale({2, 1});
    for (double& v : joints.data) v = normal(rng);
    for (double& v : rot.data) v = normal(rng);
    for (double& v : trans.data) v = normal(rng);
    for (double& v : scale.data) v = uniform(rng, 0.5, 2.0);
    Array w2({2, 14, 2}), wz({2, 14});
    for (double& v : w2.data) v = normal(rng);
    for (double& v : wz.data) v = normal(rng);
    auto proj = [&](Graph& g, const Var& j, const Var& r, const Var& t, const Var& s) {
      return ad::sum(ad::mul(project(j, r, t, s), g.constant(w2)));
    };
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return proj(g, x, g.constant(rot), g.constant(trans), g.constant(scale)); }, joints), 1e-4);
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return proj(g, g.constant(joints), x, g.constant(trans), g.constant(scale)); }, rot), 1e-4);
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return proj(g, g.constant(joints), g.constant(rot), x, g.constant(scale)); }, trans), 1e-4);
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return proj(g, g.constant(joints), g.constant(rot), g.constant(trans), x); }, scale), 1e-4);
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return ad::sum(ad::mul(camera_depths(x, g.constant(rot)), g.constant(wz))); }, joints), 1e-4);
    EXPECT_LT(ad::grad_check([&](Graph& g, const Var& x) { return ad::sum(ad::mul(camera_depths(g.constant(joints), x), g.constant(wz))); }, rot), 1e-4);
  }
}
