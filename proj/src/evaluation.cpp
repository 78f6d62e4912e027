#include "hmr/evaluation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hmr::eval {

using ad::Array;
using ad::Graph;

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::rgb:
      return "rgb";
    case InputMode::depth:
      return "depth";
    case InputMode::rgbd:
      return "rgbd";
  }
  return "?";
}

InputMode parse_input_mode(const std::string& text) {
  if (text == "rgb") return InputMode::rgb;
  if (text == "depth") return InputMode::depth;
  if (text == "rgbd") return InputMode::rgbd;
  throw std::invalid_argument("input mode must be rgb, depth or rgbd (got '" + text + "')");
}

namespace {

constexpr std::size_t kChunk = 256;

std::vector<Eigen::MatrixXd> batch_keypoints(const body::SmplLayer& layer, const Array& beta, const Array& theta) {
  const std::size_t n = beta.shape[0];
  std::vector<Eigen::MatrixXd> out;
  out.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t m = std::min(n, begin + kChunk) - begin;
    Array b({m, body::kNumBetas});
    Array t({m, body::kNumPose});
    std::copy_n(beta.data.begin() + static_cast<std::ptrdiff_t>(begin * body::kNumBetas), m * body::kNumBetas,
                b.data.begin());
    std::copy_n(theta.data.begin() + static_cast<std::ptrdiff_t>(begin * body::kNumPose), m * body::kNumPose,
                t.data.begin());
    Graph g;
    const Array& kp = layer.keypoints(g, g.constant(std::move(b)), g.constant(std::move(t))).value();
    for (std::size_t i = 0; i < m; ++i) {
      Eigen::MatrixXd j(body::kNumKeypoints, 3);
      for (std::size_t r = 0; r < body::kNumKeypoints; ++r)
        for (std::size_t c = 0; c < 3; ++c)
          j(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = kp[(i * body::kNumKeypoints + r) * 3 + c];
      out.push_back(std::move(j));
    }
  }
  return out;
}

std::vector<std::uint8_t> draw_voids(std::uint64_t seed, std::size_t cell, std::size_t count, double p_rgb,
                                     double p_d) {
  // bit 0: rgb voided, bit 1: depth voided
  std::vector<std::uint8_t> out(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, cell, i));
    const double u_rgb = uniform(rng);
    const double u_d = uniform(rng);
    out[i] = static_cast<std::uint8_t>((u_rgb < p_rgb ? 1 : 0) | (u_d < p_d ? 2 : 0));
  }
  return out;
}

}  // namespace

std::vector<Eigen::MatrixXd> truth_keypoints(const body::SmplLayer& layer,
                                             const std::vector<const data::Sample*>& samples) {
  const std::size_t n = samples.size();
  Array beta({n, body::kNumBetas});
  Array theta({n, body::kNumPose});
  for (std::size_t i = 0; i < n; ++i) {
    const data::GroundTruth& t = samples[i]->truth;
    if (t.beta.size() != body::kNumBetas || t.theta.size() != body::kNumPose)
      throw std::invalid_argument(samples[i]->sample_id + ": missing ground-truth parameters");
    std::copy(t.beta.begin(), t.beta.end(), beta.data.begin() + static_cast<std::ptrdiff_t>(i * body::kNumBetas));
    std::copy(t.theta.begin(), t.theta.end(), theta.data.begin() + static_cast<std::ptrdiff_t>(i * body::kNumPose));
  }
  return batch_keypoints(layer, beta, theta);
}

StateGeometry state_geometry(const body::SmplLayer& layer, const Array& states) {
  const std::size_t n = states.shape[0];
  Array beta({n, body::kNumBetas});
  Array theta({n, body::kNumPose});
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = states.data.data() + i * fusion::kStateDim;
    std::copy(s + fusion::kShapeOffset, s + fusion::kRotationOffset,
              beta.data.begin() + static_cast<std::ptrdiff_t>(i * body::kNumBetas));
    std::copy(s + fusion::kPoseOffset, s + fusion::kShapeOffset,
              theta.data.begin() + static_cast<std::ptrdiff_t>(i * body::kNumPose));
  }
  StateGeometry out;
  out.keypoints = batch_keypoints(layer, beta, theta);
  out.depths.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = states.data.data() + i * fusion::kStateDim + fusion::kRotationOffset;
    const Eigen::Matrix3d r = body::rodrigues(Eigen::Vector3d(s[0], s[1], s[2]));
    out.depths.push_back(out.keypoints[i] * r.row(2).transpose());
  }
  return out;
}

EvalReport evaluate(fusion::FusionNetwork& net, const body::SmplLayer& layer,
                    const std::vector<const data::Sample*>& samples, InputMode mode, double tie_tolerance,
                    metrics::AlignMode align) {
  std::vector<const data::Sample*> used;
  std::vector<fusion::StreamMask> masks;
  for (const data::Sample* s : samples) {
    if (mode == InputMode::depth && !s->depth_obs.present) continue;
    if (mode != InputMode::depth && !s->rgb_obs.present) continue;
    used.push_back(s);
    masks.push_back(mode == InputMode::rgb     ? fusion::StreamMask::depth
                    : mode == InputMode::depth ? fusion::StreamMask::rgb
                                               : fusion::StreamMask::none);
  }
  EvalReport report;
  report.samples = used.size();
  if (used.empty()) {
    report.reconstruction_error_mm = std::numeric_limits<double>::quiet_NaN();
    report.ordinal_accuracy = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  const Array states = fusion::predict_states(net, used, masks);
  const StateGeometry geo = state_geometry(layer, states);
  const std::vector<Eigen::MatrixXd> truth = truth_keypoints(layer, used);

  double err = 0.0;
  double acc = 0.0;
  std::size_t acc_n = 0;
  for (std::size_t i = 0; i < used.size(); ++i) {
    const double e = metrics::reconstruction_error(geo.keypoints[i], truth[i], align);
    report.per_sample_mm.push_back(e);
    err += e;
    const Eigen::VectorXd z = camera::camera_depths(truth[i], used[i]->truth.cam);
    const losses::Relations rel = data::build_relations(std::vector<double>(z.data(), z.data() + z.size()), tie_tolerance);
    if (auto a = metrics::ordinal_accuracy(geo.depths[i], rel)) {
      acc += *a;
      ++acc_n;
    }
  }
  report.reconstruction_error_mm = err / static_cast<double>(used.size());
  report.ordinal_accuracy = acc_n ? acc / static_cast<double>(acc_n) : std::numeric_limits<double>::quiet_NaN();
  return report;
}

metrics::SweepGrid noise_sweep(fusion::FusionNetwork& net, const body::SmplLayer& layer,
                               const std::vector<const data::Sample*>& samples,
                               const std::vector<double>& p_rgb_levels, const std::vector<double>& p_d_levels,
                               std::uint64_t seed, metrics::AlignMode align) {
  metrics::SweepGrid grid;
  grid.p_rgb_levels = p_rgb_levels;
  grid.p_d_levels = p_d_levels;
  grid.cells = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_rgb_levels.size()),
                                     static_cast<Eigen::Index>(p_d_levels.size()));
  grid.validate();
  if (samples.empty()) throw std::invalid_argument("noise_sweep: empty test set");
  const std::vector<Eigen::MatrixXd> truth = truth_keypoints(layer, samples);
  const std::size_t n = samples.size();
  for (std::size_t r = 0; r < p_rgb_levels.size(); ++r) {
    for (std::size_t c = 0; c < p_d_levels.size(); ++c) {
      const std::vector<std::uint8_t> voids =
          draw_voids(seed, r * p_d_levels.size() + c, n, p_rgb_levels[r], p_d_levels[c]);
      std::vector<fusion::StreamMask> masks(n, fusion::StreamMask::none);
      std::vector<bool> both(n, false);
      for (std::size_t i = 0; i < n; ++i) {
        if (voids[i] == 3)
          both[i] = true;
        else if (voids[i] == 1)
          masks[i] = fusion::StreamMask::rgb;
        else if (voids[i] == 2)
          masks[i] = fusion::StreamMask::depth;
      }
      const Array states = fusion::predict_states(net, samples, masks, both);
      const StateGeometry geo = state_geometry(layer, states);
      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) err += metrics::reconstruction_error(geo.keypoints[i], truth[i], align);
      grid.cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = err / static_cast<double>(n);
    }
  }
  return grid;
}

}  // namespace hmr::eval
