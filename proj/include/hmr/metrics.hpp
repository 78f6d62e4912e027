#pragma once

// Pose evaluation metrics. Point sets are k x 3 matrices in meters; errors are
// reported in millimeters.

#include "hmr/losses.hpp"

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmr::metrics {

using Points = Eigen::MatrixXd;

class UnalignableError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AlignMode {
  similarity,  // scale + rotation + translation
  rigid,       // rotation + translation
};

struct AlignmentResult {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double residual_mm = 0.0;  // MPJPE between the aligned A and B
};

/// Least-squares (s, R, t) minimising sum ||s R a_i + t - b_i||^2 (Umeyama/Kabsch with
/// reflection correction). Throws UnalignableError for k < 3 or rank(A) < 2.
AlignmentResult procrustes_align(const Points& a, const Points& b, AlignMode mode = AlignMode::similarity);

Points apply_alignment(const AlignmentResult& t, const Points& a);

/// Mean per-joint Euclidean distance in mm.
double mpjpe(const Points& a, const Points& b);

/// MPJPE after aligning pred onto gt.
double reconstruction_error(const Points& pred, const Points& gt, AlignMode mode = AlignMode::similarity);

/// Fraction of relations (r != 0) where sign(z_q - z_p) == r; nullopt when there are none.
std::optional<double> ordinal_accuracy(const Eigen::VectorXd& z_pred, const losses::Relations& relations);

/// Mean reconstruction error per (p_rgb, p_d) noise cell.
struct SweepGrid {
  std::vector<double> p_rgb_levels;
  std::vector<double> p_d_levels;
  Eigen::MatrixXd cells;  // rows: p_rgb, cols: p_d, mm

  void validate() const;
};

/// Cell-wise a - b; level lists must match.
SweepGrid grid_difference(const SweepGrid& a, const SweepGrid& b);

/// Delimited matrix: header rows list both level axes, then one row per p_rgb level.
void write_sweep_csv(const std::string& path, const SweepGrid& grid);
SweepGrid read_sweep_csv(const std::string& path);

/// 0.0, 0.1, ..., 1.0
std::vector<double> default_sweep_levels();

}  // namespace hmr::metrics
