#include "hmr/cli.hpp"

#include "hmr/evaluation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hmr::cli {

namespace fs = std::filesystem;

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return "config";
    case ErrorKind::missing_input:
      return "missing-input";
    case ErrorKind::exists:
      return "exists";
    case ErrorKind::io:
      return "io";
    case ErrorKind::other:
      break;
  }
  return "internal";
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
  if (!out) throw CliError(ErrorKind::io, "cannot write " + p.string());
}

// Fresh output directory; refuses to clobber unless --force.
void claim_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force) throw CliError(ErrorKind::exists, dir.string() + " already exists (pass --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void claim_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force)
    throw CliError(ErrorKind::exists, file.string() + " already exists (pass --force to overwrite)");
  fs::create_directories(file.parent_path());
}

class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet) {}
  template <class... T>
  void operator()(const T&... parts) const {
    if (quiet_) return;
    (std::cout << ... << parts) << '\n';
  }

 private:
  bool quiet_;
};

body::SmplLayer make_layer(const config::ExperimentConfig& c) {
  return body::SmplLayer(body::synth_model(c.body_model_seed, c.n_vertices));
}

data::Dataset load_dataset(const Run& run, const std::string& name) {
  const fs::path manifest = data_dir(run) / name / "manifest.json";
  if (!fs::exists(manifest))
    throw CliError(ErrorKind::missing_input, "missing dataset " + manifest.string() + " (run gen-data first)");
  try {
    return data::read_dataset(data_dir(run), name);
  } catch (const std::exception& e) {
    throw CliError(ErrorKind::io, e.what());
  }
}

std::vector<const data::Sample*> pointers(const std::vector<data::Sample>& samples) {
  std::vector<const data::Sample*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(&s);
  return out;
}

struct ModelRef {
  std::string label;
  fs::path path;
};

ModelRef resolve_model(const Run& run, const std::string& ref) {
  if (fs::is_regular_file(ref)) return {fs::path(ref).parent_path().filename().string(), ref};
  const fs::path p = model_checkpoint(run, ref);
  if (!fs::exists(p)) throw CliError(ErrorKind::missing_input, "missing checkpoint " + p.string());
  return {ref, p};
}

std::vector<ModelRef> models_from(const Run& run, const Options& o) {
  std::vector<ModelRef> out;
  if (o.checkpoints.empty())
    out.push_back(resolve_model(run, o.tag.empty() ? ablation_tag(run.config.train) : o.tag));
  for (const auto& ref : o.checkpoints) out.push_back(resolve_model(run, ref));
  return out;
}

fusion::FusionNetwork load_model(const Run& run, const ModelRef& ref) {
  Rng init(0);
  fusion::FusionNetwork net(run.config.model, init);
  try {
    fusion::load_network(ref.path.string(), net);
  } catch (const std::exception& e) {
    throw CliError(ErrorKind::io, ref.path.string() + ": " + e.what());
  }
  return net;
}

}  // namespace

Run open_run(const Options& o) {
  Run run;
  try {
    if (o.config_path.empty()) {
      run.config = config::default_config();
    } else {
      if (!fs::exists(o.config_path)) throw CliError(ErrorKind::missing_input, "missing config " + o.config_path);
      run.config = config::load_config(o.config_path);
    }
    if (o.seed) {
      run.config.seed = *o.seed;
      run.config.uscg.net.seed = *o.seed;
    }
    run.config.validate();
  } catch (const config::ConfigError& e) {
    throw CliError(ErrorKind::config, e.what());
  }
  run.dir = o.run_dir.empty() ? o.runs_root / config::run_name(run.config) : o.run_dir;
  fs::create_directories(run.dir);
  const std::string text = config::to_json(run.config) + "\n";
  const fs::path cfg = run.dir / "config.json";
  if (fs::exists(cfg) && read_file(cfg) != text && !o.force)
    throw CliError(ErrorKind::exists, cfg.string() + " holds a different config (pass --force to replace it)");
  write_file(cfg, text);
  return run;
}

std::string ablation_tag(const fusion::TrainConfig& t) {
  std::string tag = t.switches.use_2d ? "2d" : "no2d";
  if (t.switches.use_adv) tag += "+adv";
  if (t.switches.use_smpl_constraints) tag += "+smpl";
  if (t.switches.use_drc) tag += "+rank";
  if (t.switches.use_3d_joint_loss) tag += "+3D";
  if (!t.dropout_training) tag += "-nodrop";
  return tag;
}

fs::path data_dir(const Run& run) { return run.dir / "data"; }
fs::path constraints_path(const Run& run, const std::string& dataset) {
  return run.dir / "uscg" / "constraints" / (dataset + ".jsonl");
}
fs::path model_dir(const Run& run, const std::string& tag) { return run.dir / "train" / tag; }
fs::path model_checkpoint(const Run& run, const std::string& tag) { return model_dir(run, tag) / "model.ckpt"; }

void cmd_gen_data(const Options& o) {
  const Run run = open_run(o);
  const config::ExperimentConfig& c = run.config;
  const Log log(o.quiet);
  const body::SmplLayer layer = make_layer(c);
  fs::create_directories(data_dir(run));
  body::save_body_model((run.dir / "body_model.json").string(), layer.model());

  data::GenerationContext ctx;
  ctx.layer = &layer;
  ctx.camera = c.camera;
  ctx.seed = derive_seed(c.seed, fnv1a("data"));
  ctx.threads = c.threads;
  for (const auto& spec : c.datasets) claim_dir(data_dir(run) / spec.name, o.force);
  for (const auto& spec : c.datasets) {
    const data::Dataset d = data::make_dataset(data_dir(run), spec, ctx);
    log(spec.name, ": ", d.train.size(), " train, ", d.test.size(), " test (", spec.rgbd ? "rgbd" : "rgb only",
        ", frame ", spec.frame, ")");
  }
  log("data written to ", data_dir(run).string());
}

void cmd_train_uscg(const Options& o) {
  const Run run = open_run(o);
  const config::ExperimentConfig& c = run.config;
  const Log log(o.quiet);
  const body::SmplLayer layer = make_layer(c);
  const data::PosePrior prior = data::PosePrior::standard();

  std::vector<data::Dataset> sets;
  for (const auto& spec : c.datasets)
    if (spec.has_3d) sets.push_back(load_dataset(run, spec.name));

  const fs::path out = run.dir / "uscg";
  claim_dir(out, o.force);
  fs::create_directories(out / "constraints");

  const auto train = data::make_pairs(layer, prior, c.uscg.pairs, derive_seed(c.seed, fnv1a("uscg-pairs")));
  const auto val = data::make_pairs(layer, prior, c.uscg.validation_pairs, derive_seed(c.seed, fnv1a("uscg-val")));
  Rng init(derive_seed(c.seed, fnv1a("uscg-init")));
  uscg::UscgNetwork net(c.uscg.net, init);
  log("training constraint generator on ", train.size(), " pairs for ", c.uscg.net.steps, " steps");
  const uscg::TrainCurve curve = uscg::uscg_train(net, layer, train, val, c.uscg.net);

  std::string csv = "step,train_loss,val_loss\n";
  for (std::size_t i = 0; i < curve.steps.size(); ++i)
    csv += std::to_string(curve.steps[i]) + "," + fmt(curve.train_loss[i]) + "," + fmt(curve.val_loss[i]) + "\n";
  write_file(out / "curve.csv", csv);
  nn::save_checkpoint((out / "uscg.ckpt").string(), nn::state_dict(net.parameters()));

  const double gate = c.uscg.net.threshold_mm;
  std::string report = "dataset,samples,valid,accepted,acceptance_rate,median_cycle_mm\n";
  auto row = [&](const std::string& name, std::vector<double> errs, std::size_t valid, std::size_t accepted) {
    const std::size_t n = errs.size();
    double median = std::numeric_limits<double>::quiet_NaN();
    if (!errs.empty()) {
      std::nth_element(errs.begin(), errs.begin() + static_cast<std::ptrdiff_t>(n / 2), errs.end());
      median = errs[n / 2];
    }
    const double rate = n ? static_cast<double>(accepted) / static_cast<double>(n) : 0.0;
    report += name + "," + std::to_string(n) + "," + std::to_string(valid) + "," + std::to_string(accepted) + "," +
              fmt(rate) + "," + fmt(median) + "\n";
    log(name, ": ", accepted, "/", n, " accepted (", fmt(100.0 * rate), "%), median cycle error ", fmt(median), " mm");
  };

  {
    const std::vector<double> errs = uscg::cycle_errors(net, layer, val, c.uscg.net.root_index);
    const auto ok = static_cast<std::size_t>(std::count_if(errs.begin(), errs.end(), [&](double e) { return e <= gate; }));
    row("heldout-clean", errs, errs.size(), ok);
  }
  for (const auto& d : sets) {
    const data::DatasetFrame frame = data::builtin_frame(d.spec.frame);
    std::vector<uscg::GeneratedConstraint> records;
    std::vector<double> errs;
    std::size_t valid = 0, accepted = 0;
    for (const auto& s : d.train) {
      if (!s.kp3d) continue;
      uscg::GeneratedConstraint g = uscg::generate_constraint(net, layer, *s.kp3d, frame, gate, c.uscg.net.root_index);
      g.sample_id = s.sample_id;
      errs.push_back(g.cycle_error_mm);
      valid += g.valid;
      accepted += g.accepted;
      records.push_back(std::move(g));
    }
    uscg::write_constraints(constraints_path(run, d.spec.name), records);
    row(d.spec.name, errs, valid, accepted);
  }
  write_file(out / "report.csv", report);
}

void cmd_train(const Options& o) {
  const Run run = open_run(o);
  const config::ExperimentConfig& c = run.config;
  const Log log(o.quiet);
  const body::SmplLayer layer = make_layer(c);
  const std::string tag = o.tag.empty() ? ablation_tag(c.train) : o.tag;

  std::vector<data::Dataset> sets;
  for (const auto& name : c.training_names()) sets.push_back(load_dataset(run, name));

  uscg::ConstraintTable table;
  if (c.train.switches.use_smpl_constraints) {
    for (const auto& d : sets) {
      if (!d.spec.has_3d) continue;
      const fs::path p = constraints_path(run, d.spec.name);
      if (!fs::exists(p))
        throw CliError(ErrorKind::missing_input,
                       "missing constraints " + p.string() + " (run train-uscg first, or disable use_smpl_constraints)");
      const uscg::ConstraintTable t = uscg::accepted_table(uscg::read_constraints(p));
      table.insert(t.begin(), t.end());
    }
  }

  const fs::path out = model_dir(run, tag);
  claim_dir(out, o.force);
  fs::create_directories(out / "checkpoints");

  std::vector<std::vector<const data::Sample*>> rgbd;
  std::vector<const data::Sample*> rgb_only;
  for (const auto& d : sets) {
    if (d.spec.rgbd)
      rgbd.push_back(pointers(d.train));
    else
      for (const auto& s : d.train) rgb_only.push_back(&s);
  }
  fusion::Trainer trainer(c.model, c.train, layer, data::PosePrior::standard(), derive_seed(c.seed, fnv1a("train")));
  if (c.train.switches.use_smpl_constraints) trainer.set_constraints(&table);
  fusion::BatchSampler sampler(std::move(rgbd), std::move(rgb_only), c.train.batch, c.train.rgb_only_batch,
                               derive_seed(c.seed, fnv1a("train")));

  const auto& sw = c.train.switches;
  std::ofstream metrics(out / "metrics.csv");
  metrics << "step,total";
  if (sw.use_2d) metrics << ",l2d";
  if (sw.use_smpl_constraints) metrics << ",smpl";
  if (sw.use_drc) metrics << ",drc";
  if (sw.use_adv) metrics << ",adv,disc";
  if (sw.use_3d_joint_loss) metrics << ",joints3d";
  metrics << "\n";
  auto cell = [&](const std::optional<double>& v) { metrics << "," << (v ? fmt(*v) : std::string()); };

  log("training ", tag, " for ", c.train.steps, " steps");
  fusion::train_loop(trainer, sampler, c.train.steps, [&](std::size_t step, const fusion::StepLosses& l) {
    metrics << step << "," << fmt(l.total);
    if (sw.use_2d) cell(l.l2d);
    if (sw.use_smpl_constraints) cell(l.smpl);
    if (sw.use_drc) cell(l.drc);
    if (sw.use_adv) {
      cell(l.adv);
      cell(l.disc);
    }
    if (sw.use_3d_joint_loss) cell(l.joints3d);
    metrics << "\n";
    if (step % c.checkpoint_every == 0 && step != c.train.steps)
      fusion::save_network((out / "checkpoints" / ("step-" + std::to_string(step) + ".ckpt")).string(),
                           trainer.network());
    if (step % 100 == 0 || step == c.train.steps) log("  step ", step, "  total ", fmt(l.total));
  });
  metrics.close();
  if (!metrics) throw CliError(ErrorKind::io, "cannot write " + (out / "metrics.csv").string());
  fusion::save_network(model_checkpoint(run, tag).string(), trainer.network());
  log("model written to ", model_checkpoint(run, tag).string());
}

void cmd_eval(const Options& o) {
  const Run run = open_run(o);
  const config::ExperimentConfig& c = run.config;
  const Log log(o.quiet);
  eval::InputMode mode;
  try {
    mode = eval::parse_input_mode(o.mode);
  } catch (const std::invalid_argument& e) {
    throw CliError(ErrorKind::config, std::string("--mode: ") + e.what());
  }
  const std::vector<ModelRef> models = models_from(run, o);
  const body::SmplLayer layer = make_layer(c);
  std::vector<data::Dataset> sets;
  for (const auto& name : c.evaluation_names()) sets.push_back(load_dataset(run, name));

  for (const ModelRef& m : models) {
    const fs::path file = run.dir / "eval" / (m.label + "-" + eval::to_string(mode) + ".csv");
    claim_file(file, o.force);
    fusion::FusionNetwork net = load_model(run, m);
    std::string header = "model,mode";
    std::string line = m.label + "," + eval::to_string(mode);
    log(m.label, " [", eval::to_string(mode), "]");
    for (const auto& d : sets) {
      const eval::EvalReport r = eval::evaluate(net, layer, pointers(d.test), mode, c.train.tie_tolerance, c.align);
      header += "," + d.spec.name + "_recon_mm," + d.spec.name + "_ordinal," + d.spec.name + "_samples";
      line += "," + fmt(r.reconstruction_error_mm) + "," + fmt(r.ordinal_accuracy) + "," + std::to_string(r.samples);
      log("  ", d.spec.name, ": reconstruction ", fmt(r.reconstruction_error_mm), " mm, ordinal ",
          fmt(r.ordinal_accuracy), " (", r.samples, " samples)");
    }
    write_file(file, header + "\n" + line + "\n");
  }
}

void cmd_sweep(const Options& o) {
  const Run run = open_run(o);
  const config::ExperimentConfig& c = run.config;
  const Log log(o.quiet);
  const std::vector<ModelRef> models = models_from(run, o);
  if (models.size() > 2) throw CliError(ErrorKind::config, "sweep takes one or two checkpoints");
  const body::SmplLayer layer = make_layer(c);

  std::vector<data::Dataset> sets;
  for (const auto& name : c.evaluation_names())
    if (c.dataset(name).rgbd) sets.push_back(load_dataset(run, name));
  std::vector<const data::Sample*> samples;
  for (const auto& d : sets)
    for (const auto& s : d.test) samples.push_back(&s);
  if (samples.empty()) throw CliError(ErrorKind::missing_input, "sweep needs at least one RGB-D evaluation dataset");

  std::vector<metrics::SweepGrid> grids;
  std::vector<fs::path> files;
  for (const ModelRef& m : models) files.push_back(run.dir / "sweep" / (m.label + ".csv"));
  if (models.size() == 2) files.push_back(run.dir / "sweep" / (models[0].label + "-minus-" + models[1].label + ".csv"));
  for (const auto& f : files) claim_file(f, o.force);

  for (const ModelRef& m : models) {
    fusion::FusionNetwork net = load_model(run, m);
    grids.push_back(eval::noise_sweep(net, layer, samples, c.sweep_levels, c.sweep_levels,
                                      derive_seed(c.seed, fnv1a("sweep")), c.align));
    metrics::write_sweep_csv(files[grids.size() - 1].string(), grids.back());
    log(m.label, ": grid written to ", files[grids.size() - 1].string());
  }
  if (grids.size() == 2) {
    metrics::write_sweep_csv(files[2].string(), metrics::grid_difference(grids[0], grids[1]));
    log("difference grid written to ", files[2].string());
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"RGB-D human mesh recovery experiments"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::string runs_root = o.runs_root.string();
  std::string run_dir;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "experiment config (JSON); defaults when omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--runs-root", runs_root, "parent of the run directory");
    sub->add_option("--run-dir", run_dir, "explicit run directory");
    sub->add_flag("--force", o.force, "overwrite existing outputs");
    sub->add_flag("-q,--quiet", o.quiet, "no progress output");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic sub-datasets");
  CLI::App* uscg_cmd = app.add_subcommand("train-uscg", "train the constraint generator and emit constraints");
  CLI::App* train = app.add_subcommand("train", "train the fusion regressor");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a trained model on the held-out splits");
  CLI::App* sweep = app.add_subcommand("sweep", "stream-voiding noise sweep for one or two models");
  for (CLI::App* sub : {gen, uscg_cmd, train, ev, sweep}) common(sub);
  for (CLI::App* sub : {train, ev, sweep}) sub->add_option("--tag", o.tag, "model tag (default from ablation switches)");
  ev->add_option("--mode", o.mode, "rgb, depth or rgbd")->check(CLI::IsMember({"rgb", "depth", "rgbd"}));
  ev->add_option("--checkpoint", o.checkpoints, "model tags or checkpoint files");
  sweep->add_option("--checkpoint", o.checkpoints, "one or two model tags or checkpoint files")->expected(1, 2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return 2;
  }
  if (app.get_subcommands().front()->count("--seed")) o.seed = seed;
  o.runs_root = runs_root;
  o.run_dir = run_dir;

  try {
    if (*gen) cmd_gen_data(o);
    if (*uscg_cmd) cmd_train_uscg(o);
    if (*train) cmd_train(o);
    if (*ev) cmd_eval(o);
    if (*sweep) cmd_sweep(o);
  } catch (const CliError& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const config::ConfigError& e) {
    std::cerr << "error[config]: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::config);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::other);
  }
  return 0;
}

}  // namespace hmr::cli
