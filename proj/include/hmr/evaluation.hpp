#pragma once

// Held-out evaluation of a fusion network: reconstruction error and depth
// ordering accuracy per input mode, and the stream-voiding noise sweep.

#include "hmr/fusion.hpp"
#include "hmr/metrics.hpp"

#include <string>
#include <vector>

namespace hmr::eval {

enum class InputMode { rgb, depth, rgbd };

std::string to_string(InputMode mode);
InputMode parse_input_mode(const std::string& text);

struct EvalReport {
  double reconstruction_error_mm = 0.0;  // mean over evaluated samples
  double ordinal_accuracy = 0.0;         // mean over samples with at least one ordered pair; NaN if none
  std::size_t samples = 0;
  std::vector<double> per_sample_mm;
};

/// Ground-truth keypoints (common frame) for every sample, computed in batches.
std::vector<Eigen::MatrixXd> truth_keypoints(const body::SmplLayer& layer, const std::vector<const data::Sample*>& samples);

/// Keypoints [14 x 3] and camera-frame depths implied by each row of a state array.
struct StateGeometry {
  std::vector<Eigen::MatrixXd> keypoints;
  std::vector<Eigen::VectorXd> depths;
};
StateGeometry state_geometry(const body::SmplLayer& layer, const ad::Array& states);

/// Samples lacking the stream a mode needs are skipped (depth mode on RGB-only data).
/// Ordering accuracy is scored against relations from the ground-truth camera depths.
EvalReport evaluate(fusion::FusionNetwork& net, const body::SmplLayer& layer,
                    const std::vector<const data::Sample*>& samples, InputMode mode,
                    double tie_tolerance = losses::kDefaultTieTolerance,
                    metrics::AlignMode align = metrics::AlignMode::similarity);

/// For every (p_rgb, p_d) cell each stream of each sample is voided independently with
/// the cell's probabilities; samples with both streams voided are run on an all-void input.
/// The voiding draws depend only on (seed, cell, sample), so two networks see the same pattern.
metrics::SweepGrid noise_sweep(fusion::FusionNetwork& net, const body::SmplLayer& layer,
                               const std::vector<const data::Sample*>& samples,
                               const std::vector<double>& p_rgb_levels, const std::vector<double>& p_d_levels,
                               std::uint64_t seed, metrics::AlignMode align = metrics::AlignMode::similarity);

}  // namespace hmr::eval
