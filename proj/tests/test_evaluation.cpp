#include "hmr/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hmr;

namespace {

const body::SmplLayer& layer() {
  static const body::BodyModel model = body::synth_model(1);
  static const body::SmplLayer l(model);
  return l;
}

data::Dataset make(const std::string& name, bool rgbd, std::size_t train, std::size_t test, std::uint64_t seed) {
  data::DatasetSpec spec;
  spec.name = name;
  spec.frame = rgbd ? "frame-a" : "common";
  spec.train_size = train;
  spec.test_size = test;
  spec.rgbd = rgbd;
  spec.has_3d = rgbd;
  data::GenerationContext ctx;
  ctx.layer = &layer();
  ctx.seed = seed;
  return data::generate_dataset(spec, ctx);
}

const data::Dataset& rgbd() {
  static const data::Dataset d = make("synth-e", true, 1000, 150, 31);
  return d;
}

std::vector<const data::Sample*> pointers(const std::vector<data::Sample>& v) {
  std::vector<const data::Sample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

// Small network trained briefly with stream dropout.
fusion::FusionNetwork& trained() {
  static fusion::Trainer trainer = [] {
    fusion::FusionConfig fc;
    fc.feature_dim = 32;
    fc.encoder_hidden = 64;
    fc.regressor_hidden = 64;
    fusion::TrainConfig tc;
    tc.batch = 16;
    tc.switches.use_drc = true;
    tc.weights.lambda_drc = 0.05;
    tc.disc_lr = 1e-4;
    return fusion::Trainer(fc, tc, layer(), data::PosePrior::standard(), 1);
  }();
  static bool done = false;
  if (!done) {
    fusion::BatchSampler s({pointers(rgbd().train)}, {}, 16, 0, 1);
    fusion::train_loop(trainer, s, 400);
    done = true;
  }
  return trainer.network();
}

}  // namespace

TEST(InputMode, ParseAndPrint) {
  for (auto m : {eval::InputMode::rgb, eval::InputMode::depth, eval::InputMode::rgbd})
    EXPECT_EQ(eval::parse_input_mode(eval::to_string(m)), m);
  EXPECT_THROW(eval::parse_input_mode("lidar"), std::invalid_argument);
}

TEST(TruthKeypoints, MatchPerSampleForward) {
  const auto samples = pointers(rgbd().test);
  const auto kp = eval::truth_keypoints(layer(), samples);
  ASSERT_EQ(kp.size(), samples.size());
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_LT((kp[i] - data::truth_joints(layer(), *samples[i])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Evaluate, MatchesPerSampleInference) {
  fusion::FusionNetwork& net = trained();
  const auto samples = pointers(rgbd().test);
  for (auto mode : {eval::InputMode::rgb, eval::InputMode::depth, eval::InputMode::rgbd}) {
    const eval::EvalReport r = eval::evaluate(net, layer(), samples, mode);
    ASSERT_EQ(r.samples, samples.size());
    ASSERT_EQ(r.per_sample_mm.size(), samples.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const fusion::PoseState s =
          fusion::infer(net, *samples[i], mode != eval::InputMode::depth, mode != eval::InputMode::rgb);
      const double e = metrics::reconstruction_error(fusion::state_keypoints(layer(), s), data::truth_joints(layer(), *samples[i]));
      EXPECT_NEAR(r.per_sample_mm[i], e, 1e-9);
      mean += e;
    }
    EXPECT_NEAR(r.reconstruction_error_mm, mean / samples.size(), 1e-9);
    EXPECT_GE(r.ordinal_accuracy, 0.0);
    EXPECT_LE(r.ordinal_accuracy, 1.0);
  }
}

TEST(Evaluate, DepthModeSkipsRgbOnlySamples) {
  const data::Dataset rgb = make("synth-o", false, 0, 20, 32);
  const auto samples = pointers(rgb.test);
  const eval::EvalReport d = eval::evaluate(trained(), layer(), samples, eval::InputMode::depth);
  EXPECT_EQ(d.samples, 0u);
  const eval::EvalReport r = eval::evaluate(trained(), layer(), samples, eval::InputMode::rgb);
  EXPECT_EQ(r.samples, 20u);
}

TEST(NoiseSweep, CleanCellEqualsPlainEvaluation) {
  fusion::FusionNetwork& net = trained();
  const auto samples = pointers(rgbd().test);
  const auto levels = metrics::default_sweep_levels();
  const metrics::SweepGrid g = eval::noise_sweep(net, layer(), samples, {0.0, 0.5}, {0.0, 0.5}, 7);
  const eval::EvalReport plain = eval::evaluate(net, layer(), samples, eval::InputMode::rgbd);
  EXPECT_NEAR(g.cells(0, 0), plain.reconstruction_error_mm, 1e-9);
  EXPECT_EQ(g.cells.rows(), 2);
  EXPECT_EQ(g.cells.cols(), 2);
  // same seed, same grid; fully voided streams reproduce the single-stream modes
  const metrics::SweepGrid again = eval::noise_sweep(net, layer(), samples, {0.0, 0.5}, {0.0, 0.5}, 7);
  EXPECT_EQ(g.cells, again.cells);
  const metrics::SweepGrid edge = eval::noise_sweep(net, layer(), samples, {0.0, 1.0}, {0.0}, 7);
  EXPECT_NEAR(edge.cells(1, 0), eval::evaluate(net, layer(), samples, eval::InputMode::depth).reconstruction_error_mm, 1e-9);
}

TEST(NoiseSweep, ErrorGrowsAlongBothAxes) {
  fusion::FusionNetwork& net = trained();
  const auto samples = pointers(rgbd().test);
  const std::vector<double> levels{0.0, 0.25, 0.5, 0.75, 1.0};
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(5, 5);
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) mean += eval::noise_sweep(net, layer(), samples, levels, levels, 100 + s).cells;
  mean /= seeds;
  const double tol = 2.0;  // mm, one-sided
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j + 1 < 5; ++j) {
      EXPECT_GE(mean(i, j + 1), mean(i, j) - tol) << "row " << i << " col " << j;
      EXPECT_GE(mean(j + 1, i), mean(j, i) - tol) << "col " << i << " row " << j;
    }
  EXPECT_GT(mean(4, 4), mean(0, 0));
}
