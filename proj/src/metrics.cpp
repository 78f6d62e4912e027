#include "hmr/metrics.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace hmr::metrics {

AlignmentResult procrustes_align(const Points& a, const Points& b, AlignMode mode) {
  if (a.cols() != 3 || b.cols() != 3 || a.rows() != b.rows())
    throw std::invalid_argument("procrustes_align: point sets must both be k x 3");
  if (a.rows() < 3) throw UnalignableError("procrustes_align: need at least 3 points");
  const Eigen::RowVector3d mu_a = a.colwise().mean();
  const Eigen::RowVector3d mu_b = b.colwise().mean();
  const Points a0 = a.rowwise() - mu_a;
  const Points b0 = b.rowwise() - mu_b;

  const Eigen::JacobiSVD<Points> rank_check(a0);
  const auto& sv = rank_check.singularValues();
  if (!(sv[0] > 1e-12) || sv[1] <= 1e-9 * sv[0]) throw UnalignableError("procrustes_align: source points are degenerate");

  const Eigen::Matrix3d h = a0.transpose() * b0;
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0);

  AlignmentResult out;
  out.rotation = v * d.asDiagonal() * u.transpose();
  out.scale = mode == AlignMode::similarity ? svd.singularValues().dot(d) / a0.squaredNorm() : 1.0;
  out.translation = mu_b.transpose() - out.scale * out.rotation * mu_a.transpose();
  out.residual_mm = mpjpe(apply_alignment(out, a), b);
  return out;
}

Points apply_alignment(const AlignmentResult& t, const Points& a) {
  Points out = (t.scale * (a * t.rotation.transpose())).rowwise() + t.translation.transpose();
  return out;
}

double mpjpe(const Points& a, const Points& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mpjpe: mismatched point sets");
  if (a.rows() == 0) return 0.0;
  return 1000.0 * (a - b).rowwise().norm().mean();
}

double reconstruction_error(const Points& pred, const Points& gt, AlignMode mode) {
  return procrustes_align(pred, gt, mode).residual_mm;
}

std::optional<double> ordinal_accuracy(const Eigen::VectorXd& z_pred, const losses::Relations& relations) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const losses::DepthRankRelation& rel : relations) {
    if (rel.r == 0) continue;
    if (static_cast<Eigen::Index>(std::max(rel.p, rel.q)) >= z_pred.size())
      throw std::out_of_range("ordinal_accuracy: joint index out of range");
    const double d = z_pred[static_cast<Eigen::Index>(rel.q)] - z_pred[static_cast<Eigen::Index>(rel.p)];
    const int sign = (d > 0) - (d < 0);
    ++total;
    if (sign == rel.r) ++correct;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

void SweepGrid::validate() const {
  if (cells.rows() != static_cast<Eigen::Index>(p_rgb_levels.size()) ||
      cells.cols() != static_cast<Eigen::Index>(p_d_levels.size()))
    throw std::invalid_argument("sweep grid cell count does not match the level lists");
  for (double p : p_rgb_levels)
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("sweep levels must lie in [0, 1]");
  for (double p : p_d_levels)
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("sweep levels must lie in [0, 1]");
}

SweepGrid grid_difference(const SweepGrid& a, const SweepGrid& b) {
  if (a.p_rgb_levels != b.p_rgb_levels || a.p_d_levels != b.p_d_levels)
    throw std::invalid_argument("grid_difference: level lists differ");
  SweepGrid out = a;
  out.cells = a.cells - b.cells;
  return out;
}

void write_sweep_csv(const std::string& path, const SweepGrid& grid) {
  grid.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sweep grid " + path);
  // shortest text that reads back to the same double
  auto num = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  out << "# rows: p_rgb, cols: p_d, values: mean reconstruction error (mm)\n";
  out << "p_rgb_levels";
  for (double p : grid.p_rgb_levels) out << ',' << num(p);
  out << "\np_d_levels";
  for (double p : grid.p_d_levels) out << ',' << num(p);
  out << "\np_rgb\\p_d";
  for (double p : grid.p_d_levels) out << ',' << num(p);
  out << '\n';
  for (Eigen::Index r = 0; r < grid.cells.rows(); ++r) {
    out << num(grid.p_rgb_levels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < grid.cells.cols(); ++c) out << ',' << num(grid.cells(r, c));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for sweep grid " + path);
}

namespace {

std::vector<double> parse_row(const std::string& line, std::string& label) {
  std::stringstream ss(line);
  std::string cell;
  std::getline(ss, label, ',');
  std::vector<double> values;
  while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
  return values;
}

}  // namespace

SweepGrid read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sweep grid " + path);
  std::string line;
  std::string label;
  SweepGrid grid;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> values = parse_row(line, label);
    if (label == "p_rgb_levels") {
      grid.p_rgb_levels = std::move(values);
    } else if (label == "p_d_levels") {
      grid.p_d_levels = std::move(values);
    } else if (label != "p_rgb\\p_d") {
      rows.push_back(std::move(values));
    }
  }
  grid.cells = Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(grid.p_d_levels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != grid.p_d_levels.size()) throw std::runtime_error(path + ": ragged sweep grid row");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      grid.cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  grid.validate();
  return grid;
}

std::vector<double> default_sweep_levels() {
  std::vector<double> levels;
  for (int i = 0; i <= 10; ++i) levels.push_back(i / 10.0);
  return levels;
}

}  // namespace hmr::metrics
