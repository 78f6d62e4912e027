#include "hmr/synth_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hmr::data {

using nlohmann::json;

void DatasetFrame::validate() const {
  if (!(unit_scale > 0.0) || !std::isfinite(unit_scale)) throw std::invalid_argument("frame unit_scale must be > 0");
  const double orth = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
  if (orth > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("frame rotation must be a proper rotation");
  if (!translation.allFinite()) throw std::invalid_argument("frame translation must be finite");
}

Points DatasetFrame::apply(const Points& common) const {
  Points out = (common * rotation.transpose()).rowwise() + translation.transpose();
  return unit_scale * out;
}

Points DatasetFrame::to_common(const Points& native) const {
  Points shifted = (native / unit_scale).rowwise() - translation.transpose();
  return shifted * rotation;
}

DatasetFrame builtin_frame(const std::string& name) {
  DatasetFrame f;
  f.name = name;
  if (name == "common" || name == "frame-b") return f;
  if (name == "frame-a") {
    f.rotation = body::rodrigues(Eigen::Vector3d(std::numbers::pi / 2.0, 0.0, 0.0));
    f.translation = Eigen::Vector3d(0.0, 0.0, 1.5);
    f.unit_scale = 1000.0;
    return f;
  }
  throw std::invalid_argument("unknown dataset frame '" + name + "'");
}

PosePrior PosePrior::standard() {
  PosePrior p;
  p.joint_std.assign(body::kNumJoints, 0.15);
  const std::pair<std::size_t, double> wide[] = {
      {0, 0.15}, {1, 0.45}, {2, 0.45}, {4, 0.5},  {5, 0.5},  {7, 0.15},  {8, 0.15},  {10, 0.1}, {11, 0.1},
      {13, 0.1}, {14, 0.1}, {15, 0.2}, {16, 0.5}, {17, 0.5}, {18, 0.5}, {19, 0.5}, {20, 0.2}, {21, 0.2},
      {22, 0.1}, {23, 0.1}};
  for (auto [j, s] : wide) p.joint_std[j] = s;
  p.shape_std = 1.0;
  return p;
}

void PosePrior::validate() const {
  if (joint_std.size() != body::kNumJoints) throw std::invalid_argument("pose prior needs 24 joint deviations");
  for (double s : joint_std)
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("pose prior deviations must be >= 0");
  if (!(shape_std >= 0.0) || !std::isfinite(shape_std)) throw std::invalid_argument("shape deviation must be >= 0");
}

PoseShape sample_pose_shape(Rng& rng, const PosePrior& prior) {
  prior.validate();
  PoseShape out;
  out.beta.resize(body::kNumBetas);
  out.theta.resize(body::kNumPose);
  for (double& b : out.beta) b = prior.shape_std * normal(rng);
  for (std::size_t j = 0; j < body::kNumJoints; ++j)
    for (std::size_t c = 0; c < 3; ++c)
      out.theta[3 * j + c] = std::clamp(prior.joint_std[j] * normal(rng), -std::numbers::pi, std::numbers::pi);
  return out;
}

camera::CameraParams sample_camera(Rng& rng, const CameraPrior& prior) {
  camera::CameraParams cam;
  const double yaw = uniform(rng, -prior.yaw_range, prior.yaw_range);
  const double pitch = prior.pitch_std * normal(rng);
  cam.global_rotation = Eigen::Vector3d(pitch, yaw, 0.0);
  cam.scale = uniform(rng, prior.scale_min, prior.scale_max);
  cam.translation = Eigen::Vector2d(prior.translation_std * normal(rng), prior.translation_std * normal(rng));
  return cam;
}

std::vector<double> encode_rgb(const Points& kp2d, const std::vector<std::uint8_t>& visibility) {
  std::vector<double> out(kRgbObsDim, 0.0);
  for (std::size_t j = 0; j < body::kNumKeypoints; ++j) {
    if (!visibility[j]) continue;
    out[3 * j] = kp2d(static_cast<Eigen::Index>(j), 0);
    out[3 * j + 1] = kp2d(static_cast<Eigen::Index>(j), 1);
    out[3 * j + 2] = 1.0;
  }
  return out;
}

std::vector<double> encode_depth(const Points& kp2d, const std::vector<double>& depths) {
  std::vector<double> out(kDepthObsDim, 0.0);
  double mean = 0.0;
  std::size_t valid = 0;
  for (double z : depths)
    if (std::isfinite(z)) {
      mean += z;
      ++valid;
    }
  if (valid > 0) mean /= static_cast<double>(valid);
  for (std::size_t j = 0; j < body::kNumKeypoints; ++j) {
    out[4 * j] = kp2d(static_cast<Eigen::Index>(j), 0);
    out[4 * j + 1] = kp2d(static_cast<Eigen::Index>(j), 1);
    if (std::isfinite(depths[j])) {
      out[4 * j + 2] = depths[j] - mean;
      out[4 * j + 3] = 1.0;
    }
  }
  return out;
}

Sample make_sample(const body::SmplLayer& layer, const PoseShape& params, const camera::CameraParams& cam,
                   const DatasetFrame& frame, const NoiseConfig& noise, const SampleOptions& options, Rng& rng,
                   std::string sample_id) {
  cam.validate();
  frame.validate();
  const Points joints = body::smpl_keypoints(layer, params.beta, params.theta);

  Sample s;
  s.sample_id = std::move(sample_id);
  s.frame = frame.name;
  s.annotations = options.annotations;
  if (!options.depth_stream) s.annotations.has_depth = false;
  s.truth = {params.beta, params.theta, cam};

  s.kp2d = camera::project(joints, cam);
  if (noise.kp2d_sigma > 0.0)
    for (Eigen::Index i = 0; i < s.kp2d.size(); ++i) s.kp2d.data()[i] += noise.kp2d_sigma * normal(rng);
  s.visibility.assign(body::kNumKeypoints, 1);
  if (noise.occlusion_rate > 0.0)
    for (auto& v : s.visibility) v = uniform(rng) < noise.occlusion_rate ? 0 : 1;

  if (s.annotations.has_3d) s.kp3d = frame.apply(joints);

  s.rgb_obs = {StreamKind::rgb, encode_rgb(s.kp2d, s.visibility), true};
  s.depth_obs = {StreamKind::depth, std::vector<double>(kDepthObsDim, 0.0), false};
  if (options.depth_stream) {
    const Eigen::VectorXd z = camera::camera_depths(joints, cam);
    std::vector<double> readings(body::kNumKeypoints);
    for (std::size_t j = 0; j < body::kNumKeypoints; ++j) {
      double r = z[static_cast<Eigen::Index>(j)] + options.sensor_distance;
      if (noise.depth_sigma > 0.0) r += noise.depth_sigma * normal(rng);
      if (noise.hole_rate > 0.0 && uniform(rng) < noise.hole_rate) r = std::numeric_limits<double>::quiet_NaN();
      readings[j] = r;
    }
    s.depth_obs = {StreamKind::depth, encode_depth(s.kp2d, readings), true};
    if (s.annotations.has_depth) s.kp_depths = std::move(readings);
  }
  return s;
}

losses::Relations build_relations(const std::vector<double>& depths, double tie_tolerance) {
  losses::Relations out;
  for (std::size_t p = 0; p < depths.size(); ++p) {
    if (!std::isfinite(depths[p])) continue;
    for (std::size_t q = p + 1; q < depths.size(); ++q) {
      if (!std::isfinite(depths[q])) continue;
      out.push_back({p, q, losses::rank_relation(depths[p], depths[q], tie_tolerance)});
    }
  }
  return out;
}

losses::Relations build_relations(const Sample& sample, double tie_tolerance) {
  if (!sample.annotations.has_depth || !sample.kp_depths) return {};
  return build_relations(*sample.kp_depths, tie_tolerance);
}

namespace {

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) && std::isnan(b[i])) continue;
    if (a[i] != b[i]) return false;
  }
  return true;
}

bool same_points(const Points& a, const Points& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

json points_json(const Points& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Points points_from(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto& data = j.at("data");
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw std::runtime_error("malformed point array");
  Points m(shape[0], shape[1]);
  for (Eigen::Index r = 0; r < shape[0]; ++r)
    for (Eigen::Index c = 0; c < shape[1]; ++c) m(r, c) = data[static_cast<std::size_t>(r * shape[1] + c)].get<double>();
  return m;
}

json vector_json(const std::vector<double>& v) {
  json data = json::array();
  for (double x : v) {
    if (std::isfinite(x))
      data.push_back(x);
    else
      data.push_back(nullptr);
  }
  return {{"shape", {v.size()}}, {"data", std::move(data)}};
}

std::vector<double> vector_from(const json& j) {
  const auto& data = j.at("data");
  std::vector<double> v;
  v.reserve(data.size());
  for (const auto& x : data) v.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  if (j.at("shape").get<std::vector<std::size_t>>() != std::vector<std::size_t>{v.size()})
    throw std::runtime_error("malformed vector array");
  return v;
}

json stream_json(const StreamObservation& o) {
  return {{"stream", o.stream == StreamKind::rgb ? "rgb" : "depth"}, {"present", o.present}, {"data", vector_json(o.data)}};
}

StreamObservation stream_from(const json& j) {
  StreamObservation o;
  o.stream = j.at("stream").get<std::string>() == "rgb" ? StreamKind::rgb : StreamKind::depth;
  o.present = j.at("present").get<bool>();
  o.data = vector_from(j.at("data"));
  return o;
}

json spec_json(const DatasetSpec& s) {
  return {{"name", s.name},
          {"frame", s.frame},
          {"train_size", s.train_size},
          {"test_size", s.test_size},
          {"rgbd", s.rgbd},
          {"has_3d", s.has_3d},
          {"noise",
           {{"kp2d_sigma", s.noise.kp2d_sigma},
            {"depth_sigma", s.noise.depth_sigma},
            {"hole_rate", s.noise.hole_rate},
            {"occlusion_rate", s.noise.occlusion_rate}}}};
}

DatasetSpec spec_from(const json& j) {
  DatasetSpec s;
  s.name = j.at("name").get<std::string>();
  s.frame = j.at("frame").get<std::string>();
  s.train_size = j.at("train_size").get<std::size_t>();
  s.test_size = j.at("test_size").get<std::size_t>();
  s.rgbd = j.at("rgbd").get<bool>();
  s.has_3d = j.at("has_3d").get<bool>();
  const json& n = j.at("noise");
  s.noise.kp2d_sigma = n.at("kp2d_sigma").get<double>();
  s.noise.depth_sigma = n.at("depth_sigma").get<double>();
  s.noise.hole_rate = n.at("hole_rate").get<double>();
  s.noise.occlusion_rate = n.at("occlusion_rate").get<double>();
  return s;
}

std::string sample_name(const std::string& dataset, const std::string& split, std::size_t i) {
  std::ostringstream id;
  id << dataset << '-' << split << '-' << std::setw(6) << std::setfill('0') << i;
  return id.str();
}

std::vector<Sample> generate_split(const DatasetSpec& spec, const GenerationContext& ctx, const std::string& split,
                                   std::size_t count) {
  const DatasetFrame frame = builtin_frame(spec.frame);
  SampleOptions options;
  options.depth_stream = spec.rgbd;
  options.annotations.has_2d = true;
  options.annotations.has_3d = spec.rgbd && spec.has_3d;
  options.annotations.has_depth = spec.rgbd;
  const std::uint64_t stream = fnv1a(spec.name + "/" + split);

  std::vector<Sample> out(count);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(ctx.seed, stream, i));
      const PoseShape params = sample_pose_shape(rng, ctx.prior);
      const camera::CameraParams cam = sample_camera(rng, ctx.camera);
      SampleOptions local = options;
      local.sensor_distance = uniform(rng, ctx.camera.distance_min, ctx.camera.distance_max);
      out[i] = make_sample(*ctx.layer, params, cam, frame, spec.noise, local, rng, sample_name(spec.name, split, i));
      out[i].dataset = spec.name;
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(ctx.threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    work(0, count);
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(count, t * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Sample& s : samples) out << sample_to_json(s) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Sample> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

bool structurally_equal(const Sample& a, const Sample& b) {
  if (a.sample_id != b.sample_id || a.dataset != b.dataset || a.frame != b.frame) return false;
  if (!(a.annotations == b.annotations) || !(a.rgb_obs == b.rgb_obs) || !(a.depth_obs == b.depth_obs)) return false;
  if (!same_points(a.kp2d, b.kp2d) || a.visibility != b.visibility) return false;
  if (a.kp3d.has_value() != b.kp3d.has_value() || (a.kp3d && !same_points(*a.kp3d, *b.kp3d))) return false;
  if (a.kp_depths.has_value() != b.kp_depths.has_value() || (a.kp_depths && !same_values(*a.kp_depths, *b.kp_depths)))
    return false;
  return a.truth.beta == b.truth.beta && a.truth.theta == b.truth.theta &&
         a.truth.cam.global_rotation == b.truth.cam.global_rotation &&
         a.truth.cam.translation == b.truth.cam.translation && a.truth.cam.scale == b.truth.cam.scale;
}

std::string sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.sample_id;
  j["dataset"] = s.dataset;
  j["frame"] = s.frame;
  j["annotations"] = {{"has_2d", s.annotations.has_2d}, {"has_3d", s.annotations.has_3d},
                      {"has_depth", s.annotations.has_depth}};
  j["kp2d"] = points_json(s.kp2d);
  j["visibility"] = s.visibility;
  j["kp3d"] = s.kp3d ? points_json(*s.kp3d) : json(nullptr);
  j["kp_depths"] = s.kp_depths ? vector_json(*s.kp_depths) : json(nullptr);
  j["rgb_obs"] = stream_json(s.rgb_obs);
  j["depth_obs"] = stream_json(s.depth_obs);
  const auto& c = s.truth.cam;
  j["truth"] = {{"beta", s.truth.beta},
                {"theta", s.truth.theta},
                {"cam_rotation", {c.global_rotation[0], c.global_rotation[1], c.global_rotation[2]}},
                {"cam_translation", {c.translation[0], c.translation[1]}},
                {"cam_scale", c.scale}};
  return j.dump();
}

Sample sample_from_json(const std::string& line) {
  const json j = json::parse(line);
  Sample s;
  s.sample_id = j.at("id").get<std::string>();
  s.dataset = j.at("dataset").get<std::string>();
  s.frame = j.at("frame").get<std::string>();
  const json& a = j.at("annotations");
  s.annotations = {a.at("has_2d").get<bool>(), a.at("has_3d").get<bool>(), a.at("has_depth").get<bool>()};
  s.kp2d = points_from(j.at("kp2d"));
  s.visibility = j.at("visibility").get<std::vector<std::uint8_t>>();
  if (!j.at("kp3d").is_null()) s.kp3d = points_from(j.at("kp3d"));
  if (!j.at("kp_depths").is_null()) s.kp_depths = vector_from(j.at("kp_depths"));
  s.rgb_obs = stream_from(j.at("rgb_obs"));
  s.depth_obs = stream_from(j.at("depth_obs"));
  const json& t = j.at("truth");
  s.truth.beta = t.at("beta").get<std::vector<double>>();
  s.truth.theta = t.at("theta").get<std::vector<double>>();
  const auto r = t.at("cam_rotation").get<std::vector<double>>();
  const auto tr = t.at("cam_translation").get<std::vector<double>>();
  if (r.size() != 3 || tr.size() != 2) throw std::runtime_error("malformed camera block");
  s.truth.cam.global_rotation = Eigen::Vector3d(r[0], r[1], r[2]);
  s.truth.cam.translation = Eigen::Vector2d(tr[0], tr[1]);
  s.truth.cam.scale = t.at("cam_scale").get<double>();
  if (s.kp2d.rows() != static_cast<Eigen::Index>(body::kNumKeypoints) || s.kp2d.cols() != 2 ||
      s.visibility.size() != body::kNumKeypoints)
    throw std::runtime_error("sample " + s.sample_id + " has malformed 2D keypoints");
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec, const GenerationContext& ctx) {
  if (ctx.layer == nullptr) throw std::invalid_argument("generate_dataset needs a body model");
  if (spec.name.empty()) throw std::invalid_argument("dataset spec needs a name");
  Dataset d;
  d.spec = spec;
  d.train = generate_split(spec, ctx, "train", spec.train_size);
  d.test = generate_split(spec, ctx, "test", spec.test_size);
  return d;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  const std::filesystem::path root = dir / dataset.spec.name;
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw std::runtime_error("cannot create " + root.string() + ": " + ec.message());
  write_lines(root / "train.jsonl", dataset.train);
  write_lines(root / "test.jsonl", dataset.test);
  json manifest = spec_json(dataset.spec);
  manifest["files"] = {{"train", "train.jsonl"}, {"test", "test.jsonl"}};
  manifest["counts"] = {{"train", dataset.train.size()}, {"test", dataset.test.size()}};
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (root / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir, const std::string& name) {
  const std::filesystem::path root = dir / name;
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::runtime_error("missing dataset manifest " + (root / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error((root / "manifest.json").string() + ": " + e.what());
  }
  Dataset d;
  d.spec = spec_from(manifest);
  d.train = read_lines(root / manifest.at("files").at("train").get<std::string>());
  d.test = read_lines(root / manifest.at("files").at("test").get<std::string>());
  if (d.train.size() != manifest.at("counts").at("train").get<std::size_t>() ||
      d.test.size() != manifest.at("counts").at("test").get<std::size_t>())
    throw std::runtime_error(root.string() + ": sample count does not match the manifest");
  return d;
}

Dataset make_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, const GenerationContext& ctx) {
  Dataset d = generate_dataset(spec, ctx);
  write_dataset(dir, d);
  return d;
}

std::vector<PairedSample> make_pairs(const body::SmplLayer& layer, const PosePrior& prior, std::size_t count,
                                     std::uint64_t seed) {
  std::vector<PairedSample> out;
  out.reserve(count);
  const std::uint64_t stream = fnv1a("pairs");
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, stream, i));
    PoseShape p = sample_pose_shape(rng, prior);
    Points joints = body::smpl_keypoints(layer, p.beta, p.theta);
    out.push_back({std::move(joints), std::move(p.beta), std::move(p.theta)});
  }
  return out;
}

Points truth_joints(const body::SmplLayer& layer, const Sample& sample) {
  return body::smpl_keypoints(layer, sample.truth.beta, sample.truth.theta);
}

}  // namespace hmr::data
