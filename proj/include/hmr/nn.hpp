#pragma once

// Fully connected layers, MLP stacks and the Adam optimizer on top of hmr::ad.

#include "hmr/autodiff.hpp"
#include "hmr/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace hmr::nn {

using ad::Array;
using ad::Graph;
using ad::Parameter;
using ad::Var;

/// Named arrays, the unit of checkpoint persistence.
using StateDict = std::map<std::string, Array>;

class Linear {
 public:
  Linear() = default;
  /// Weights ~ N(0, gain^2 / in); zero bias.
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, double gain = 1.4142135623730951);

  /// x: [batch, in] -> [batch, out]
  Var forward(Graph& g, const Var& x);

  std::size_t in_features() const { return weight_.value.shape[0]; }
  std::size_t out_features() const { return weight_.value.shape[1]; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  void collect(std::vector<Parameter*>& out);

 private:
  Parameter weight_;
  Parameter bias_;
};

/// Stack of Linear layers with relu between them.
class Mlp {
 public:
  Mlp() = default;
  /// `widths` lists every layer boundary, e.g. {in, h, h, out}.
  Mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng, bool relu_on_output,
      double output_gain = 1.4142135623730951);

  Var forward(Graph& g, const Var& x);

  std::size_t depth() const { return layers_.size(); }
  std::size_t in_features() const { return layers_.front().in_features(); }
  std::size_t out_features() const { return layers_.back().out_features(); }
  Linear& layer(std::size_t i) { return layers_[i]; }
  void collect(std::vector<Parameter*>& out);
  void zero_weights();

 private:
  std::vector<Linear> layers_;
  bool relu_on_output_ = false;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  const AdamConfig& config() const { return config_; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  std::size_t t_ = 0;
};

StateDict state_dict(const std::vector<Parameter*>& params);
/// Copies matching entries into `params`; throws on a missing key or shape mismatch.
void load_state_dict(const StateDict& state, const std::vector<Parameter*>& params);

/// Checkpoint document: {"<name>": {"shape": [...], "data": [...]}, ...}
void save_checkpoint(const std::string& path, const StateDict& state);
StateDict load_checkpoint(const std::string& path);

}  // namespace hmr::nn
