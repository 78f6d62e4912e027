#include "hmr/uscg.hpp"

#include "hmr/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace hmr::uscg {

using ad::Array;
using nlohmann::json;

void UscgConfig::validate() const {
  if (layers < 2) throw std::invalid_argument("uscg.layers must be >= 2");
  if (width == 0) throw std::invalid_argument("uscg.width must be > 0");
  if (root_index >= body::kNumKeypoints) throw std::invalid_argument("uscg.root_index out of range");
  if (!(lr > 0.0)) throw std::invalid_argument("uscg.lr must be > 0");
  if (batch == 0) throw std::invalid_argument("uscg.batch must be > 0");
  if (param_weight < 0.0 || cycle_weight < 0.0) throw std::invalid_argument("uscg term weights must be >= 0");
  if (std::isnan(threshold_mm) || threshold_mm < 0.0) throw std::invalid_argument("uscg.threshold_mm must be >= 0");
  if (eval_every == 0) throw std::invalid_argument("uscg.eval_every must be > 0");
}

Points root_relativize(const Points& joints, std::size_t root_index) {
  if (joints.cols() != 3 || root_index >= static_cast<std::size_t>(joints.rows()))
    throw std::invalid_argument("root_relativize: bad joints or root index");
  const Eigen::RowVector3d root = joints.row(static_cast<Eigen::Index>(root_index));
  Points out = joints.rowwise() - root;
  out.row(static_cast<Eigen::Index>(root_index)).setZero();
  return out;
}

double mean_bone_length(const Points& joints) {
  double total = 0.0;
  for (auto [a, b] : body::kKeypointBones)
    total += (joints.row(static_cast<Eigen::Index>(a)) - joints.row(static_cast<Eigen::Index>(b))).norm();
  return total / static_cast<double>(body::kKeypointBones.size());
}

namespace {

std::vector<std::size_t> layer_widths(const UscgConfig& c) {
  std::vector<std::size_t> w{kInputDim};
  for (std::size_t i = 0; i + 1 < c.layers; ++i) w.push_back(c.width);
  w.push_back(kOutputDim);
  return w;
}

}  // namespace

UscgNetwork::UscgNetwork(const UscgConfig& config, Rng& rng)
    : net_("uscg", layer_widths(config), rng, false, 0.1) {}

Var UscgNetwork::forward(Graph& g, const Var& j_rel) {
  if (j_rel.shape().size() != 2 || j_rel.shape()[1] != kInputDim)
    throw ad::ShapeError("uscg_forward", j_rel.shape(), "expected [B, 42]");
  return net_.forward(g, j_rel);
}

std::vector<ad::Parameter*> UscgNetwork::parameters() {
  std::vector<ad::Parameter*> out;
  net_.collect(out);
  return out;
}

std::optional<std::vector<double>> normalise_input(const Points& joints, std::size_t root_index) {
  if (joints.rows() != static_cast<Eigen::Index>(body::kNumKeypoints) || joints.cols() != 3 || !joints.allFinite())
    return std::nullopt;
  const Points rel = root_relativize(joints, root_index);
  const double bone = mean_bone_length(rel);
  if (!(bone > 1e-9)) return std::nullopt;
  std::vector<double> out(kInputDim);
  for (std::size_t j = 0; j < body::kNumKeypoints; ++j)
    for (std::size_t c = 0; c < 3; ++c)
      out[3 * j + c] = rel(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) / bone;
  return out;
}

UscgPrediction uscg_forward(UscgNetwork& net, const Points& j_rel, std::size_t root_index) {
  auto input = normalise_input(j_rel, root_index);
  if (!input) throw std::invalid_argument("uscg_forward: degenerate skeleton");
  Graph g;
  Var out = net.forward(g, g.constant(Array({1, kInputDim}, std::move(*input))));
  const auto& v = out.value().data;
  return {std::vector<double>(v.begin(), v.begin() + body::kNumBetas),
          std::vector<double>(v.begin() + body::kNumBetas, v.end())};
}

namespace {

Var root_relative(const Var& kp, std::size_t root) {
  const std::size_t batch = kp.shape()[0];
  Var flat = ad::reshape(kp, {batch, kInputDim});
  Var r = ad::reshape(ad::slice_last(flat, 3 * root, 3 * root + 3), {batch, 1, 3});
  return kp - ad::expand(r, {batch, body::kNumKeypoints, 3});
}

}  // namespace

Var uscg_objective(Graph& g, UscgNetwork& net, const body::SmplLayer& layer,
                   const std::vector<const data::PairedSample*>& batch, const UscgConfig& config) {
  if (batch.empty()) throw std::invalid_argument("uscg_objective: empty batch");
  const std::size_t n = batch.size();
  Array input({n, kInputDim});
  Array target({n, kOutputDim});
  Array joints({n, body::kNumKeypoints, 3});
  for (std::size_t b = 0; b < n; ++b) {
    const data::PairedSample& s = *batch[b];
    auto x = normalise_input(s.joints, config.root_index);
    if (!x) throw std::invalid_argument("uscg_objective: degenerate training skeleton");
    std::copy(x->begin(), x->end(), input.data.begin() + static_cast<std::ptrdiff_t>(b * kInputDim));
    std::copy(s.beta.begin(), s.beta.end(), target.data.begin() + static_cast<std::ptrdiff_t>(b * kOutputDim));
    std::copy(s.theta.begin(), s.theta.end(),
              target.data.begin() + static_cast<std::ptrdiff_t>(b * kOutputDim + body::kNumBetas));
    const Points rel = root_relativize(s.joints, config.root_index);
    for (std::size_t j = 0; j < body::kNumKeypoints; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        joints[(b * body::kNumKeypoints + j) * 3 + c] = rel(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
  }
  Var pred = net.forward(g, g.constant(std::move(input)));
  Var beta = ad::slice_last(pred, 0, body::kNumBetas);
  Var theta = ad::slice_last(pred, body::kNumBetas, kOutputDim);

  Var param;
  if (config.rotation_matrix_params) {
    Var tgt = g.constant(target);
    Var tb = ad::slice_last(tgt, 0, body::kNumBetas);
    Var tt = ad::reshape(ad::slice_last(tgt, body::kNumBetas, kOutputDim), {n * body::kNumJoints, 3});
    Var rp = body::rodrigues(ad::reshape(theta, {n * body::kNumJoints, 3}));
    param = ad::sum(ad::square(tb - beta)) + ad::sum(ad::square(body::rodrigues(tt) - rp));
  } else {
    param = ad::sum(ad::square(g.constant(std::move(target)) - pred));
  }
  Var cycle = ad::sum(ad::square(g.constant(std::move(joints)) -
                                 root_relative(layer.keypoints(g, beta, theta), config.root_index)));
  Var total = ad::scale(param, config.param_weight) + ad::scale(cycle, config.cycle_weight);
  return ad::scale(total, 1.0 / static_cast<double>(n));
}

TrainCurve uscg_train(UscgNetwork& net, const body::SmplLayer& layer, const std::vector<data::PairedSample>& train,
                      const std::vector<data::PairedSample>& validation, const UscgConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("uscg_train: empty training set");
  nn::Adam opt(net.parameters(), {config.lr});
  Rng rng(derive_seed(config.seed, fnv1a("uscg-batches")));
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);

  auto validation_loss = [&]() {
    if (validation.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    const std::size_t chunk = 256;
    for (std::size_t i = 0; i < validation.size(); i += chunk) {
      std::vector<const data::PairedSample*> batch;
      for (std::size_t k = i; k < std::min(validation.size(), i + chunk); ++k) batch.push_back(&validation[k]);
      Graph g;
      total += uscg_objective(g, net, layer, batch, config).item() * static_cast<double>(batch.size());
    }
    return total / static_cast<double>(validation.size());
  };

  TrainCurve curve;
  double window = 0.0;
  std::size_t window_count = 0;
  const std::size_t batch_size = std::min(config.batch, train.size());
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<const data::PairedSample*> batch(batch_size);
    if (batch_size == train.size() && train.size() <= config.batch) {
      for (std::size_t i = 0; i < batch_size; ++i) batch[i] = &train[i];
    } else {
      for (auto& p : batch) p = &train[pick(rng)];
    }
    Graph g;
    Var loss = uscg_objective(g, net, layer, batch, config);
    if (!std::isfinite(loss.item())) throw std::runtime_error("uscg_train: loss diverged at step " + std::to_string(step));
    g.backward(loss);
    opt.step();
    window += loss.item();
    ++window_count;
    if (step % config.eval_every == 0 || step == config.steps) {
      curve.steps.push_back(step);
      curve.train_loss.push_back(window / static_cast<double>(window_count));
      curve.val_loss.push_back(validation_loss());
      window = 0.0;
      window_count = 0;
    }
  }
  return curve;
}

GeneratedConstraint generate_constraint(UscgNetwork& net, const body::SmplLayer& layer, const Points& native_joints,
                                        const data::DatasetFrame& frame, double threshold_mm, std::size_t root_index) {
  GeneratedConstraint out;
  if (native_joints.rows() != static_cast<Eigen::Index>(body::kNumKeypoints) || native_joints.cols() != 3)
    throw std::invalid_argument("generate_constraint expects 14 x 3 joints");
  const Points common = frame.to_common(native_joints);
  const Points rel = root_relativize(common, root_index);
  if (!normalise_input(rel, root_index)) {
    out.valid = false;
    out.accepted = false;
    out.cycle_error_mm = std::numeric_limits<double>::infinity();
    return out;
  }
  UscgPrediction pred = uscg_forward(net, rel, root_index);
  const Points j_hat = body::smpl_keypoints(layer, pred.beta, pred.theta);
  try {
    out.cycle_error_mm = metrics::reconstruction_error(j_hat, rel);
  } catch (const metrics::UnalignableError&) {
    out.valid = false;
    out.cycle_error_mm = std::numeric_limits<double>::infinity();
  }
  out.beta_tilde = std::move(pred.beta);
  out.theta_tilde = std::move(pred.theta);
  out.accepted = out.valid && out.cycle_error_mm <= threshold_mm;
  return out;
}

std::vector<double> cycle_errors(UscgNetwork& net, const body::SmplLayer& layer,
                                 const std::vector<data::PairedSample>& samples, std::size_t root_index) {
  const data::DatasetFrame common;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back(generate_constraint(net, layer, s.joints, common, kDefaultThresholdMm, root_index).cycle_error_mm);
  return out;
}

void write_constraints(const std::filesystem::path& path, const std::vector<GeneratedConstraint>& constraints) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& c : constraints) {
    json j = {{"sample_id", c.sample_id},
              {"beta_tilde", c.beta_tilde},
              {"theta_tilde", c.theta_tilde},
              {"cycle_error_mm", std::isfinite(c.cycle_error_mm) ? json(c.cycle_error_mm) : json(nullptr)},
              {"accepted", c.accepted},
              {"valid", c.valid}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<GeneratedConstraint> read_constraints(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<GeneratedConstraint> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    GeneratedConstraint c;
    c.sample_id = j.at("sample_id").get<std::string>();
    c.beta_tilde = j.at("beta_tilde").get<std::vector<double>>();
    c.theta_tilde = j.at("theta_tilde").get<std::vector<double>>();
    c.cycle_error_mm = j.at("cycle_error_mm").is_null() ? std::numeric_limits<double>::infinity()
                                                        : j.at("cycle_error_mm").get<double>();
    c.accepted = j.at("accepted").get<bool>();
    c.valid = j.at("valid").get<bool>();
    out.push_back(std::move(c));
  }
  return out;
}

ConstraintTable accepted_table(const std::vector<GeneratedConstraint>& constraints) {
  ConstraintTable t;
  for (const auto& c : constraints)
    if (c.accepted) t[c.sample_id] = c;
  return t;
}

}  // namespace hmr::uscg
