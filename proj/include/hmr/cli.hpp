#pragma once

// Experiment driver. Each subcommand reads one config file, resolves the run
// directory (<runs-root>/<config hash>-seed<seed>) and writes everything under it.

#include "hmr/config.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmr::cli {

enum class ErrorKind { other = 1, config = 2, missing_input = 3, exists = 4, io = 5 };

std::string to_string(ErrorKind kind);

class CliError : public std::runtime_error {
 public:
  CliError(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct Options {
  std::string config_path;  // empty: built-in defaults
  std::optional<std::uint64_t> seed;
  std::filesystem::path runs_root = "runs";
  std::filesystem::path run_dir;  // overrides runs_root/<run name>
  bool force = false;
  bool quiet = false;
  std::string tag;                       // train/eval: model tag, default from the ablation switches
  std::string mode = "rgbd";             // eval
  std::vector<std::string> checkpoints;  // eval/sweep: tags or checkpoint paths
};

/// Config after the seed override, plus the resolved run directory.
struct Run {
  config::ExperimentConfig config;
  std::filesystem::path dir;
};

Run open_run(const Options& options);

/// "2d+adv+smpl+rank"-style label of the enabled loss terms; "-nodrop" marks dropout-free training.
std::string ablation_tag(const fusion::TrainConfig& train);

std::filesystem::path data_dir(const Run& run);
std::filesystem::path constraints_path(const Run& run, const std::string& dataset);
std::filesystem::path model_dir(const Run& run, const std::string& tag);
std::filesystem::path model_checkpoint(const Run& run, const std::string& tag);

void cmd_gen_data(const Options& options);
void cmd_train_uscg(const Options& options);
void cmd_train(const Options& options);
void cmd_eval(const Options& options);
void cmd_sweep(const Options& options);

/// Parses argv, dispatches, and maps failures to "error[<kind>]: ..." on stderr plus an exit code.
int run_cli(int argc, char** argv);

}  // namespace hmr::cli
