#pragma once

// Experiment configuration: one JSON document, every key optional, unknown
// keys rejected. See README.md for the full key list and defaults.

#include "hmr/fusion.hpp"
#include "hmr/metrics.hpp"
#include "hmr/synth_data.hpp"
#include "hmr/uscg.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace hmr::config {

/// Field-level validation failure; `what()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UscgSettings {
  uscg::UscgConfig net;
  std::size_t pairs = 20000;
  std::size_t validation_pairs = 1000;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string profile = "desk";  // "desk" or "full": picks model-size and optimizer defaults
  unsigned threads = 1;
  std::uint64_t body_model_seed = 1;
  std::size_t n_vertices = 200;
  std::vector<data::DatasetSpec> datasets;
  data::CameraPrior camera;
  fusion::FusionConfig model;
  fusion::TrainConfig train;
  UscgSettings uscg;
  std::vector<std::string> train_datasets;  // empty: all
  std::vector<std::string> eval_datasets;   // empty: all
  metrics::AlignMode align = metrics::AlignMode::similarity;
  std::size_t checkpoint_every = 1000;
  std::vector<double> sweep_levels = metrics::default_sweep_levels();

  void validate() const;
  /// Names of the datasets used for training / evaluation after applying the empty-means-all rule.
  std::vector<std::string> training_names() const;
  std::vector<std::string> evaluation_names() const;
  const data::DatasetSpec& dataset(const std::string& name) const;
};

/// synth-pku (RGB-D, 3D, frame-a, mm), synth-cad (RGB-D, 3D, frame-b, m), synth-coco (RGB only).
std::vector<data::DatasetSpec> default_datasets();

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Fully resolved document (all defaults filled in).
std::string to_json(const ExperimentConfig& config);

/// Hex digest of the resolved config without the seed.
std::string config_hash(const ExperimentConfig& config);
/// "<hash>-seed<seed>"
std::string run_name(const ExperimentConfig& config);

}  // namespace hmr::config
