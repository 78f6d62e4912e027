#include "hmr/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace hmr::config {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + "wrong type (" + e.what() + ")");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + child(item.key()) + "'");
  }

 private:
  std::string where(const std::string& key = {}) const {
    const std::string p = key.empty() ? path_ : child(key);
    return p.empty() ? std::string() : p + ": ";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_profile(ExperimentConfig& c) {
  if (c.profile == "desk") {
    c.model.feature_dim = 128;
    c.model.encoder_hidden = 128;
    c.model.fusion_hidden = 0;
    c.model.fusion_out = 0;
    c.model.regressor_hidden = 256;
    c.train.lr = 1e-3;
    c.train.batch = 16;
    c.train.weights.lambda_drc = 0.05;
  } else if (c.profile == "full") {
    c.model.feature_dim = 2048;
    c.model.encoder_hidden = 2048;
    c.model.fusion_hidden = 4086;
    c.model.fusion_out = 2048;
    c.model.regressor_hidden = 1024;
    c.train.lr = 1e-5;
    c.train.batch = 40;
    c.train.weights.lambda_drc = 1.0;
  } else {
    throw ConfigError("profile: must be \"desk\" or \"full\" (got \"" + c.profile + "\")");
  }
}

void read_noise(const json& j, const std::string& path, data::NoiseConfig& n) {
  Section s(j, path);
  s.get("kp2d_sigma", n.kp2d_sigma);
  s.get("depth_sigma", n.depth_sigma);
  s.get("hole_rate", n.hole_rate);
  s.get("occlusion_rate", n.occlusion_rate);
  s.finish();
}

data::DatasetSpec read_dataset(const json& j, const std::string& path) {
  Section s(j, path);
  data::DatasetSpec d;
  s.get("name", d.name);
  s.get("frame", d.frame);
  s.get("train_size", d.train_size);
  s.get("test_size", d.test_size);
  s.get("rgbd", d.rgbd);
  d.has_3d = d.rgbd;
  s.get("has_3d", d.has_3d);
  if (const json* n = s.sub("noise")) read_noise(*n, s.child("noise"), d.noise);
  s.finish();
  return d;
}

json noise_json(const data::NoiseConfig& n) {
  return {{"kp2d_sigma", n.kp2d_sigma},
          {"depth_sigma", n.depth_sigma},
          {"hole_rate", n.hole_rate},
          {"occlusion_rate", n.occlusion_rate}};
}

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError(key + ": " + rule);
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::vector<data::DatasetSpec> default_datasets() {
  data::DatasetSpec pku;
  pku.name = "synth-pku";
  pku.frame = "frame-a";
  pku.train_size = 3000;
  pku.test_size = 500;
  data::DatasetSpec cad;
  cad.name = "synth-cad";
  cad.frame = "frame-b";
  cad.train_size = 3000;
  cad.test_size = 500;
  data::DatasetSpec coco;
  coco.name = "synth-coco";
  coco.frame = "common";
  coco.train_size = 3000;
  coco.test_size = 500;
  coco.rgbd = false;
  coco.has_3d = false;
  return {pku, cad, coco};
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.datasets = default_datasets();
  c.train.switches.use_smpl_constraints = true;
  c.train.switches.use_drc = true;
  apply_profile(c);
  return c;
}

void ExperimentConfig::validate() const {
  require(profile == "desk" || profile == "full", "profile", "must be \"desk\" or \"full\"");
  require(threads >= 1, "threads", "must be >= 1");
  require(n_vertices >= body::kNumJoints, "body_model.n_vertices", "must be >= 24");
  require(!datasets.empty(), "datasets", "at least one dataset is required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const data::DatasetSpec& d = datasets[i];
    const std::string key = "datasets[" + std::to_string(i) + "]";
    require(!d.name.empty(), key + ".name", "must be non-empty");
    require(d.name.find_first_of("/\\ ") == std::string::npos, key + ".name", "must not contain '/', '\\' or spaces");
    require(names.insert(d.name).second, key + ".name", "duplicate dataset name '" + d.name + "'");
    try {
      data::builtin_frame(d.frame);
    } catch (const std::invalid_argument&) {
      throw ConfigError(key + ".frame: must be one of common, frame-a, frame-b (got \"" + d.frame + "\")");
    }
    require(d.train_size + d.test_size > 0, key, "train_size + test_size must be > 0");
    require(d.rgbd || !d.has_3d, key + ".has_3d", "RGB-only datasets cannot carry 3D annotations");
    require(d.noise.kp2d_sigma >= 0.0 && d.noise.depth_sigma >= 0.0, key + ".noise", "sigmas must be >= 0");
    require(d.noise.hole_rate >= 0.0 && d.noise.hole_rate <= 1.0, key + ".noise.hole_rate", "must lie in [0, 1]");
    require(d.noise.occlusion_rate >= 0.0 && d.noise.occlusion_rate <= 1.0, key + ".noise.occlusion_rate",
            "must lie in [0, 1]");
  }
  for (const auto& n : train_datasets) require(names.count(n) > 0, "train_datasets", "unknown dataset '" + n + "'");
  for (const auto& n : eval_datasets) require(names.count(n) > 0, "eval_datasets", "unknown dataset '" + n + "'");
  require(camera.yaw_range >= 0.0 && camera.pitch_std >= 0.0 && camera.translation_std >= 0.0, "camera",
          "ranges and deviations must be >= 0");
  require(camera.scale_min > 0.0 && camera.scale_max >= camera.scale_min, "camera.scale_min",
          "need 0 < scale_min <= scale_max");
  require(camera.distance_max >= camera.distance_min, "camera.distance_min", "need distance_min <= distance_max");

  require(std::isfinite(train.p_miss) && train.p_miss >= 0.0 && train.p_miss < 0.5, "p_miss",
          "must satisfy 0 <= p_miss < 0.5 (got " + num(train.p_miss) + ")");
  require(train.tie_tolerance >= 0.0, "tie_tolerance", "must be >= 0 (got " + num(train.tie_tolerance) + ")");
  const std::pair<const char*, double> lambdas[] = {{"lambda_2d", train.weights.lambda_2d},
                                                    {"lambda_smpl", train.weights.lambda_smpl},
                                                    {"lambda_drc", train.weights.lambda_drc},
                                                    {"lambda_adv", train.weights.lambda_adv},
                                                    {"lambda_3d", train.weights.lambda_3d}};
  for (auto [name, v] : lambdas)
    require(std::isfinite(v) && v >= 0.0, std::string("loss_weights.") + name, "must be >= 0 (got " + num(v) + ")");
  require(train.lr > 0.0, "optimizer.lr", "must be > 0");
  require(train.disc_lr > 0.0, "optimizer.disc_lr", "must be > 0");
  require(train.batch > 0, "optimizer.batch", "must be > 0");
  require(train.disc_hidden > 0, "optimizer.disc_hidden", "must be > 0");
  require(checkpoint_every > 0, "optimizer.checkpoint_every", "must be > 0");
  require(model.feature_dim > 0 && model.encoder_hidden > 0 && model.regressor_hidden > 0, "model",
          "widths must be > 0");
  require(model.n_iterations >= 1, "model.n_iterations", "must be >= 1");
  try {
    uscg.net.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(uscg.pairs > 0, "uscg.pairs", "must be > 0");
  require(!sweep_levels.empty(), "eval.sweep_levels", "must list at least one level");
  for (double p : sweep_levels) require(p >= 0.0 && p <= 1.0, "eval.sweep_levels", "levels must lie in [0, 1]");
}

std::vector<std::string> ExperimentConfig::training_names() const {
  if (!train_datasets.empty()) return train_datasets;
  std::vector<std::string> out;
  for (const auto& d : datasets) out.push_back(d.name);
  return out;
}

std::vector<std::string> ExperimentConfig::evaluation_names() const {
  if (!eval_datasets.empty()) return eval_datasets;
  std::vector<std::string> out;
  for (const auto& d : datasets) out.push_back(d.name);
  return out;
}

const data::DatasetSpec& ExperimentConfig::dataset(const std::string& name) const {
  for (const auto& d : datasets)
    if (d.name == name) return d;
  throw ConfigError("unknown dataset '" + name + "'");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = default_config();
  Section top(root, "");
  top.get("profile", c.profile);
  apply_profile(c);
  top.get("seed", c.seed);
  top.get("threads", c.threads);

  if (const json* j = top.sub("body_model")) {
    Section s(*j, "body_model");
    s.get("seed", c.body_model_seed);
    s.get("n_vertices", c.n_vertices);
    s.finish();
  }
  if (const json* j = top.sub("datasets")) {
    if (!j->is_array()) throw ConfigError("datasets: expected an array");
    c.datasets.clear();
    for (std::size_t i = 0; i < j->size(); ++i)
      c.datasets.push_back(read_dataset((*j)[i], "datasets[" + std::to_string(i) + "]"));
  }
  if (const json* j = top.sub("camera")) {
    Section s(*j, "camera");
    s.get("yaw_range", c.camera.yaw_range);
    s.get("pitch_std", c.camera.pitch_std);
    s.get("scale_min", c.camera.scale_min);
    s.get("scale_max", c.camera.scale_max);
    s.get("translation_std", c.camera.translation_std);
    s.get("distance_min", c.camera.distance_min);
    s.get("distance_max", c.camera.distance_max);
    s.finish();
  }
  if (const json* j = top.sub("model")) {
    Section s(*j, "model");
    s.get("feature_dim", c.model.feature_dim);
    s.get("encoder_hidden", c.model.encoder_hidden);
    s.get("fusion_hidden", c.model.fusion_hidden);
    s.get("fusion_out", c.model.fusion_out);
    s.get("regressor_hidden", c.model.regressor_hidden);
    s.get("n_iterations", c.model.n_iterations);
    s.get("regressor_output_gain", c.model.regressor_output_gain);
    s.finish();
  }
  if (const json* j = top.sub("loss_weights")) {
    Section s(*j, "loss_weights");
    s.get("lambda_2d", c.train.weights.lambda_2d);
    s.get("lambda_smpl", c.train.weights.lambda_smpl);
    s.get("lambda_drc", c.train.weights.lambda_drc);
    s.get("lambda_adv", c.train.weights.lambda_adv);
    s.get("lambda_3d", c.train.weights.lambda_3d);
    s.finish();
  }
  top.get("p_miss", c.train.p_miss);
  top.get("tie_tolerance", c.train.tie_tolerance);
  if (const json* j = top.sub("ablation")) {
    Section s(*j, "ablation");
    s.get("use_smpl_constraints", c.train.switches.use_smpl_constraints);
    s.get("use_drc", c.train.switches.use_drc);
    s.get("use_3d_joint_loss", c.train.switches.use_3d_joint_loss);
    s.get("use_adv", c.train.switches.use_adv);
    s.get("dropout_training", c.train.dropout_training);
    s.finish();
  }
  if (const json* j = top.sub("optimizer")) {
    Section s(*j, "optimizer");
    s.get("lr", c.train.lr);
    s.get("batch", c.train.batch);
    s.get("rgb_only_batch", c.train.rgb_only_batch);
    s.get("steps", c.train.steps);
    s.get("disc_lr", c.train.disc_lr);
    s.get("disc_hidden", c.train.disc_hidden);
    s.get("checkpoint_every", c.checkpoint_every);
    s.finish();
  }
  if (const json* j = top.sub("uscg")) {
    Section s(*j, "uscg");
    s.get("layers", c.uscg.net.layers);
    s.get("width", c.uscg.net.width);
    s.get("root_index", c.uscg.net.root_index);
    s.get("threshold_mm", c.uscg.net.threshold_mm);
    s.get("lr", c.uscg.net.lr);
    s.get("batch", c.uscg.net.batch);
    s.get("steps", c.uscg.net.steps);
    s.get("param_weight", c.uscg.net.param_weight);
    s.get("cycle_weight", c.uscg.net.cycle_weight);
    s.get("rotation_matrix_params", c.uscg.net.rotation_matrix_params);
    s.get("eval_every", c.uscg.net.eval_every);
    s.get("pairs", c.uscg.pairs);
    s.get("validation_pairs", c.uscg.validation_pairs);
    s.finish();
  }
  top.get("train_datasets", c.train_datasets);
  top.get("eval_datasets", c.eval_datasets);
  if (const json* j = top.sub("eval")) {
    Section s(*j, "eval");
    std::string align = "similarity";
    s.get("align", align);
    if (align == "similarity")
      c.align = metrics::AlignMode::similarity;
    else if (align == "rigid")
      c.align = metrics::AlignMode::rigid;
    else
      throw ConfigError("eval.align: must be \"similarity\" or \"rigid\" (got \"" + align + "\")");
    s.get("sweep_levels", c.sweep_levels);
    s.finish();
  }
  top.finish();
  c.train.root_index = c.uscg.net.root_index;
  c.uscg.net.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json d = json::array();
  for (const auto& s : c.datasets)
    d.push_back({{"name", s.name},
                 {"frame", s.frame},
                 {"train_size", s.train_size},
                 {"test_size", s.test_size},
                 {"rgbd", s.rgbd},
                 {"has_3d", s.has_3d},
                 {"noise", noise_json(s.noise)}});
  const auto& w = c.train.weights;
  const auto& u = c.uscg.net;
  json j = {
      {"seed", c.seed},
      {"profile", c.profile},
      {"threads", c.threads},
      {"body_model", {{"seed", c.body_model_seed}, {"n_vertices", c.n_vertices}}},
      {"datasets", d},
      {"camera",
       {{"yaw_range", c.camera.yaw_range},
        {"pitch_std", c.camera.pitch_std},
        {"scale_min", c.camera.scale_min},
        {"scale_max", c.camera.scale_max},
        {"translation_std", c.camera.translation_std},
        {"distance_min", c.camera.distance_min},
        {"distance_max", c.camera.distance_max}}},
      {"model",
       {{"feature_dim", c.model.feature_dim},
        {"encoder_hidden", c.model.encoder_hidden},
        {"fusion_hidden", c.model.fusion_hidden},
        {"fusion_out", c.model.fusion_out},
        {"regressor_hidden", c.model.regressor_hidden},
        {"n_iterations", c.model.n_iterations},
        {"regressor_output_gain", c.model.regressor_output_gain}}},
      {"loss_weights",
       {{"lambda_2d", w.lambda_2d},
        {"lambda_smpl", w.lambda_smpl},
        {"lambda_drc", w.lambda_drc},
        {"lambda_adv", w.lambda_adv},
        {"lambda_3d", w.lambda_3d}}},
      {"p_miss", c.train.p_miss},
      {"tie_tolerance", c.train.tie_tolerance},
      {"ablation",
       {{"use_smpl_constraints", c.train.switches.use_smpl_constraints},
        {"use_drc", c.train.switches.use_drc},
        {"use_3d_joint_loss", c.train.switches.use_3d_joint_loss},
        {"use_adv", c.train.switches.use_adv},
        {"dropout_training", c.train.dropout_training}}},
      {"optimizer",
       {{"lr", c.train.lr},
        {"batch", c.train.batch},
        {"rgb_only_batch", c.train.rgb_only_batch},
        {"steps", c.train.steps},
        {"disc_lr", c.train.disc_lr},
        {"disc_hidden", c.train.disc_hidden},
        {"checkpoint_every", c.checkpoint_every}}},
      {"uscg",
       {{"layers", u.layers},
        {"width", u.width},
        {"root_index", u.root_index},
        {"threshold_mm", u.threshold_mm},
        {"lr", u.lr},
        {"batch", u.batch},
        {"steps", u.steps},
        {"param_weight", u.param_weight},
        {"cycle_weight", u.cycle_weight},
        {"rotation_matrix_params", u.rotation_matrix_params},
        {"eval_every", u.eval_every},
        {"pairs", c.uscg.pairs},
        {"validation_pairs", c.uscg.validation_pairs}}},
      {"train_datasets", c.train_datasets},
      {"eval_datasets", c.eval_datasets},
      {"eval",
       {{"align", c.align == metrics::AlignMode::similarity ? "similarity" : "rigid"},
        {"sweep_levels", c.sweep_levels}}},
  };
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  copy.seed = 0;
  copy.uscg.net.seed = 0;
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json(copy));
  return os.str().substr(0, 12);
}

std::string run_name(const ExperimentConfig& c) { return config_hash(c) + "-seed" + std::to_string(c.seed); }

}  // namespace hmr::config
