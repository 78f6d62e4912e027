#include "hmr/nn.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hmr::nn {

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, double gain)
    : weight_(name + ".weight", Array({in, out})), bias_(name + ".bias", Array({1, out})) {
  const double stddev = gain / std::sqrt(static_cast<double>(in));
  for (double& w : weight_.value.data) w = normal(rng, 0.0, stddev);
}

Var Linear::forward(Graph& g, const Var& x) {
  if (x.shape().size() != 2 || x.shape()[1] != in_features())
    throw ad::ShapeError(weight_.name, x.shape(), weight_.value.shape);
  Var w = g.param(weight_);
  Var b = g.param(bias_);
  return ad::matmul(x, w) + ad::expand(b, {x.shape()[0], out_features()});
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng, bool relu_on_output,
         double output_gain)
    : relu_on_output_(relu_on_output) {
  if (widths.size() < 2) throw std::invalid_argument(name + ": an MLP needs at least one layer");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1], rng,
                         last ? output_gain : 1.4142135623730951);
  }
}

Var Mlp::forward(Graph& g, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(g, h);
    if (i + 1 < layers_.size() || relu_on_output_) h = ad::relu(h);
  }
  return h;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (Linear& l : layers_) l.collect(out);
}

void Mlp::zero_weights() {
  std::vector<Parameter*> ps;
  collect(ps);
  for (Parameter* p : ps) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
    p->zero_grad();
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.grad.shape != p.value.shape) p.zero_grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      p.value[i] -= config_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

StateDict state_dict(const std::vector<Parameter*>& params) {
  StateDict out;
  for (const Parameter* p : params) {
    if (out.contains(p->name)) throw std::logic_error("duplicate parameter name " + p->name);
    out.emplace(p->name, p->value);
  }
  return out;
}

void load_state_dict(const StateDict& state, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    auto it = state.find(p->name);
    if (it == state.end()) throw std::runtime_error("checkpoint is missing '" + p->name + "'");
    if (it->second.shape != p->value.shape)
      throw ad::ShapeError("load " + p->name, it->second.shape, p->value.shape);
    p->value = it->second;
    p->zero_grad();
  }
}

void save_checkpoint(const std::string& path, const StateDict& state) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, arr] : state) doc[name] = {{"shape", arr.shape}, {"data", arr.data}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed for checkpoint " + path);
}

StateDict load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  StateDict out;
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    for (const auto& [name, entry] : doc.items())
      out.emplace(name, Array(entry.at("shape").get<ad::Shape>(), entry.at("data").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path + ": " + e.what());
  }
  return out;
}

}  // namespace hmr::nn
