#include "hmr/body_model.hpp"

#include "hmr/nn.hpp"
#include "hmr/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hmr::body {

const std::array<int, kNumJoints> kSmplParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                                  9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

const std::array<std::pair<std::size_t, std::size_t>, 13> kKeypointBones = {{
    {kRightAnkle, kRightKnee},
    {kRightKnee, kRightHip},
    {kLeftAnkle, kLeftKnee},
    {kLeftKnee, kLeftHip},
    {kRightHip, kLeftHip},
    {kRightHip, kNeck},
    {kLeftHip, kNeck},
    {kRightWrist, kRightElbow},
    {kRightElbow, kRightShoulder},
    {kLeftWrist, kLeftElbow},
    {kLeftElbow, kLeftShoulder},
    {kRightShoulder, kLeftShoulder},
    {kNeck, kHead},
}};

namespace {

constexpr std::size_t kBlock = 4 * kNumJoints;  // rows of the stacked affine transforms

// Rest joints of an SMPL-like T-pose, y up, facing +z (converted on use).
constexpr double kRestJointsYUp[kNumJoints][3] = {
    {0.00, 0.00, 0.00},   {0.07, -0.09, 0.00},  {-0.07, -0.09, 0.00}, {0.00, 0.11, -0.02},
    {0.10, -0.47, 0.00},  {-0.10, -0.47, 0.00}, {0.00, 0.24, 0.00},   {0.09, -0.87, -0.04},
    {-0.09, -0.87, -0.04}, {0.00, 0.30, 0.02},  {0.11, -0.93, 0.08},  {-0.11, -0.93, 0.08},
    {0.00, 0.51, -0.01},  {0.08, 0.42, 0.00},   {-0.08, 0.42, 0.00},  {0.00, 0.58, 0.05},
    {0.19, 0.44, -0.01},  {-0.19, 0.44, -0.01}, {0.45, 0.43, -0.03},  {-0.45, 0.43, -0.03},
    {0.70, 0.44, -0.01},  {-0.70, 0.44, -0.01}, {0.78, 0.43, -0.01},  {-0.78, 0.43, -0.01},
};

// End points for the leaf joints (head, feet, hands), same convention.
struct LeafTip {
  std::size_t joint;
  double tip[3];
};
constexpr LeafTip kLeafTips[] = {
    {15, {0.00, 0.78, 0.02}}, {10, {0.11, -0.95, 0.16}}, {11, {-0.11, -0.95, 0.16}},
    {22, {0.88, 0.43, -0.01}}, {23, {-0.88, 0.43, -0.01}},
};

// Rig joint (or head tip) each LSP keypoint is regressed around.
constexpr std::size_t kKeypointJoint[kNumKeypoints] = {8, 5, 2, 1, 4, 7, 21, 19, 17, 16, 18, 20, 12, 15};

Eigen::Vector3d to_model_frame(const double* p) { return {p[0], -p[1], -p[2]}; }

struct Segment {
  Eigen::Vector3d a;
  Eigen::Vector3d b;
  std::size_t owner;  // joint whose transform drives the segment
  double radius;
};

double segment_distance(const Segment& s, const Eigen::Vector3d& p) {
  const Eigen::Vector3d ab = s.b - s.a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - s.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (s.a + t * ab - p).norm();
}

double segment_radius(std::size_t owner, std::size_t child) {
  if (owner == 0 || owner == 3 || owner == 6 || owner == 9) return 0.11;  // pelvis and spine
  if (owner == 15 || child == 15) return 0.08;                            // head and neck
  if (owner == 1 || owner == 2 || owner == 4 || owner == 5) return 0.06;  // legs
  return 0.04;
}

struct Coefficients {
  double a, b, da, db;  // sin(t)/t, (1-cos t)/t^2 and their derivatives w.r.t. t^2
};

Coefficients rotation_coefficients(double s) {
  if (s < 1e-4) {
    return {1.0 - s / 6.0 + s * s / 120.0 - s * s * s / 5040.0,
            0.5 - s / 24.0 + s * s / 720.0 - s * s * s / 40320.0,
            -1.0 / 6.0 + s / 60.0 - s * s / 1680.0,
            -1.0 / 24.0 + s / 360.0 - s * s / 13440.0};
  }
  const double t = std::sqrt(s);
  const double st = std::sin(t);
  const double ct = std::cos(t);
  return {st / t, (1.0 - ct) / s, (t * ct - st) / (2.0 * s * t), (t * st - 2.0 * (1.0 - ct)) / (2.0 * s * s)};
}

void cross_matrix(const double* w, double k[9]) {
  k[0] = 0;     k[1] = -w[2]; k[2] = w[1];
  k[3] = w[2];  k[4] = 0;     k[5] = -w[0];
  k[6] = -w[1]; k[7] = w[0];  k[8] = 0;
}

void rotation_from(const double* w, double r[9]) {
  const double s = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  const Coefficients c = rotation_coefficients(s);
  double k[9];
  cross_matrix(w, k);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double k2 = w[i] * w[j] - (i == j ? s : 0.0);
      r[3 * i + j] = (i == j ? 1.0 : 0.0) + c.a * k[3 * i + j] + c.b * k2;
    }
}

}  // namespace

void BodyModel::validate() const {
  const std::size_t n = num_vertices();
  if (n < kNumJoints) throw std::invalid_argument("body model needs at least 24 vertices");
  auto expect = [](const Array& a, const ad::Shape& s, const char* name) {
    if (a.shape != s) throw std::invalid_argument(std::string("body model ") + name + " has shape " + ad::shape_string(a.shape));
  };
  expect(template_vertices, {n, 3}, "template_vertices");
  expect(shape_dirs, {n, 3, kNumBetas}, "shape_dirs");
  expect(skinning_weights, {n, kNumJoints}, "skinning_weights");
  expect(joint_regressor_rest, {kNumJoints, n}, "joint_regressor_rest");
  expect(keypoint_regressor, {kNumKeypoints, n}, "keypoint_regressor");
  for (std::size_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double w = skinning_weights[v * kNumJoints + j];
      if (w < 0.0) throw std::invalid_argument("negative skinning weight at vertex " + std::to_string(v));
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("skinning row " + std::to_string(v) + " does not sum to 1");
  }
  if (parents[0] != -1) throw std::invalid_argument("parents[0] must be the root sentinel -1");
  for (std::size_t j = 1; j < kNumJoints; ++j)
    if (parents[j] < 0 || parents[j] >= static_cast<int>(j))
      throw std::invalid_argument("parents must satisfy 0 <= parents[j] < j");
  for (double v : template_vertices.data)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite template vertex");
}

BodyModel synth_model(std::uint64_t seed, std::size_t n_vertices) {
  if (n_vertices < kNumJoints)
    throw std::invalid_argument("synth_model: n_vertices must be >= 24, got " + std::to_string(n_vertices));
  Rng rng(derive_seed(seed, 0x626f6479));

  std::array<Eigen::Vector3d, kNumJoints> joints;
  for (std::size_t j = 0; j < kNumJoints; ++j) joints[j] = to_model_frame(kRestJointsYUp[j]);

  std::vector<Segment> segments;
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    const auto p = static_cast<std::size_t>(kSmplParents[j]);
    segments.push_back({joints[p], joints[j], p, segment_radius(p, j)});
  }
  for (const LeafTip& leaf : kLeafTips)
    segments.push_back({joints[leaf.joint], to_model_frame(leaf.tip), leaf.joint, segment_radius(leaf.joint, leaf.joint)});

  // The first 24 vertices sit on the rig joints; the rest are scattered around segments.
  std::vector<Eigen::Vector3d> verts(joints.begin(), joints.end());
  std::vector<double> lengths;
  for (const Segment& s : segments) lengths.push_back((s.b - s.a).norm() + 0.02);
  std::discrete_distribution<std::size_t> pick(lengths.begin(), lengths.end());
  for (std::size_t v = kNumJoints; v < n_vertices; ++v) {
    const std::size_t k = (v - kNumJoints < segments.size()) ? v - kNumJoints : pick(rng);
    const Segment& s = segments[k];
    const Eigen::Vector3d axis = (s.b - s.a).normalized();
    Eigen::Vector3d dir(normal(rng), normal(rng), normal(rng));
    dir -= dir.dot(axis) * axis;
    if (dir.norm() < 1e-9) dir = axis.unitOrthogonal();
    dir.normalize();
    const double t = uniform(rng);
    const double r = s.radius * uniform(rng, 0.6, 1.0);
    verts.push_back(s.a + t * (s.b - s.a) + r * dir);
  }

  BodyModel m;
  const std::size_t n = n_vertices;
  m.template_vertices = Array({n, 3});
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < 3; ++c) m.template_vertices[v * 3 + c] = verts[v][c];

  // Skinning: inverse distance to the two nearest segments, accumulated per owning joint.
  m.skinning_weights = Array({n, kNumJoints});
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t k = 0; k < segments.size(); ++k) d.emplace_back(segment_distance(segments[k], verts[v]), k);
    std::partial_sort(d.begin(), d.begin() + 2, d.end());
    double total = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double w = 1.0 / (d[i].first + 0.01);
      m.skinning_weights[v * kNumJoints + segments[d[i].second].owner] += w;
      total += w;
    }
    for (std::size_t j = 0; j < kNumJoints; ++j) m.skinning_weights[v * kNumJoints + j] /= total;
  }

  auto nearest = [&](const Eigen::Vector3d& p, std::size_t count, std::size_t skip) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t v = 0; v < n; ++v)
      if (v != skip) d.emplace_back((verts[v] - p).norm(), v);
    count = std::min(count, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(count), d.end());
    d.resize(count);
    return d;
  };

  // Rest joints: mostly the joint's own vertex, blended with its neighbours.
  m.joint_regressor_rest = Array({kNumJoints, n});
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const auto near = nearest(joints[j], 3, j);
    double total = 0.0;
    for (const auto& [dist, v] : near) total += 1.0 / (dist + 0.01);
    m.joint_regressor_rest[j * n + j] = near.empty() ? 1.0 : 0.7;
    for (const auto& [dist, v] : near) m.joint_regressor_rest[j * n + v] += 0.3 / (dist + 0.01) / total;
  }

  m.keypoint_regressor = Array({kNumKeypoints, n});
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    Eigen::Vector3d target = joints[kKeypointJoint[k]];
    if (k == kHead) target = 0.5 * (target + to_model_frame(kLeafTips[0].tip));
    const auto near = nearest(target, 4, n);
    double total = 0.0;
    for (const auto& [dist, v] : near) total += 1.0 / (dist + 0.005);
    for (const auto& [dist, v] : near) m.keypoint_regressor[k * n + v] = 1.0 / (dist + 0.005) / total;
  }

  // Shape directions: a smooth random linear deformation per coefficient plus small jitter.
  m.shape_dirs = Array({n, 3, kNumBetas});
  for (std::size_t k = 0; k < kNumBetas; ++k) {
    Eigen::Matrix3d a;
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = normal(rng);
    for (std::size_t v = 0; v < n; ++v) {
      const Eigen::Vector3d d = 0.01 * (a * verts[v]);
      for (std::size_t c = 0; c < 3; ++c)
        m.shape_dirs[(v * 3 + c) * kNumBetas + k] = d[c] + 0.002 * normal(rng);
    }
  }
  m.validate();
  return m;
}

void save_body_model(const std::string& path, const BodyModel& model) {
  nn::StateDict state;
  state["template_vertices"] = model.template_vertices;
  state["shape_dirs"] = model.shape_dirs;
  state["skinning_weights"] = model.skinning_weights;
  state["joint_regressor_rest"] = model.joint_regressor_rest;
  state["keypoint_regressor"] = model.keypoint_regressor;
  Array parents({kNumJoints});
  for (std::size_t j = 0; j < kNumJoints; ++j) parents[j] = model.parents[j];
  state["parents"] = parents;
  nn::save_checkpoint(path, state);
}

BodyModel load_body_model(const std::string& path) {
  const nn::StateDict state = nn::load_checkpoint(path);
  auto get = [&](const char* key) {
    auto it = state.find(key);
    if (it == state.end()) throw std::runtime_error(path + ": body model is missing '" + key + "'");
    return it->second;
  };
  BodyModel m;
  m.template_vertices = get("template_vertices");
  m.shape_dirs = get("shape_dirs");
  m.skinning_weights = get("skinning_weights");
  m.joint_regressor_rest = get("joint_regressor_rest");
  m.keypoint_regressor = get("keypoint_regressor");
  const Array parents = get("parents");
  if (parents.size() != kNumJoints) throw std::runtime_error(path + ": parents must have 24 entries");
  for (std::size_t j = 0; j < kNumJoints; ++j) m.parents[j] = static_cast<int>(parents[j]);
  m.validate();
  return m;
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
  double r[9];
  rotation_from(axis_angle.data(), r);
  Eigen::Matrix3d out;
  for (int i = 0; i < 9; ++i) out(i / 3, i % 3) = r[i];
  return out;
}

Var rodrigues(const Var& axis_angle) {
  const Array& w = axis_angle.value();
  if (w.rank() != 2 || w.shape[1] != 3) throw ad::ShapeError("rodrigues", w.shape, "expected [M, 3]");
  const std::size_t m = w.shape[0];
  Array out({m, 3, 3});
  for (std::size_t i = 0; i < m; ++i) rotation_from(w.data.data() + 3 * i, out.data.data() + 9 * i);
  Graph::BackwardFn fn = [pa = axis_angle.id(), m](Graph& g, std::size_t self) {
    const Array& gr = g.node(self).grad;
    const Array& wv = g.node(pa).value;
    Array& gw = g.grad_buffer(pa);
    for (std::size_t i = 0; i < m; ++i) {
      const double* x = wv.data.data() + 3 * i;
      const double* G = gr.data.data() + 9 * i;
      const double s = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
      const Coefficients c = rotation_coefficients(s);
      double k[9];
      cross_matrix(x, k);
      double gk = 0.0;
      double gk2 = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int q = 0; q < 3; ++q) {
          gk += G[3 * r + q] * k[3 * r + q];
          gk2 += G[3 * r + q] * (x[r] * x[q] - (r == q ? s : 0.0));
        }
      const double tr = G[0] + G[4] + G[8];
      const double ge[3] = {G[7] - G[5], G[2] - G[6], G[3] - G[1]};
      const double common = 2.0 * (c.da * gk + c.db * gk2 - c.b * tr);
      for (int q = 0; q < 3; ++q) {
        double g_w = 0.0;  // (G w)_q + (G^T w)_q
        for (int r = 0; r < 3; ++r) g_w += G[3 * q + r] * x[r] + G[3 * r + q] * x[r];
        gw[3 * i + q] += x[q] * common + c.a * ge[q] + c.b * g_w;
      }
    }
  };
  return axis_angle.graph()->record("rodrigues", std::move(out), {axis_angle.id()}, std::move(fn));
}

SmplLayer::SmplLayer(const BodyModel& model) : model_(model) {
  model_.validate();
  const std::size_t n = model_.num_vertices();
  const Array& tmpl = model_.template_vertices;
  const Array& sd = model_.shape_dirs;
  const Array& w = model_.skinning_weights;
  const Array& jreg = model_.joint_regressor_rest;
  const Array& kreg = model_.keypoint_regressor;

  rest_shape_ = Array({kNumBetas, n * 3});
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < kNumBetas; ++k) rest_shape_[k * n * 3 + v * 3 + c] = sd[(v * 3 + c) * kNumBetas + k];

  joint_base_ = Array({1, kNumJoints * 3});
  joint_shape_ = Array({kNumBetas, kNumJoints * 3});
  for (std::size_t j = 0; j < kNumJoints; ++j)
    for (std::size_t v = 0; v < n; ++v) {
      const double r = jreg[j * n + v];
      if (r == 0.0) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        joint_base_[j * 3 + c] += r * tmpl[v * 3 + c];
        for (std::size_t k = 0; k < kNumBetas; ++k)
          joint_shape_[k * kNumJoints * 3 + j * 3 + c] += r * sd[(v * 3 + c) * kNumBetas + k];
      }
    }

  vertex_base_ = Array({1, n * kBlock});
  vertex_shape_ = Array({kNumBetas, n * kBlock});
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double wv = w[v * kNumJoints + j];
      if (wv == 0.0) continue;
      const std::size_t col = v * kBlock + 4 * j;
      for (std::size_t c = 0; c < 3; ++c) {
        vertex_base_[col + c] = wv * tmpl[v * 3 + c];
        for (std::size_t k = 0; k < kNumBetas; ++k)
          vertex_shape_[k * n * kBlock + col + c] = wv * sd[(v * 3 + c) * kNumBetas + k];
      }
      vertex_base_[col + 3] = wv;
    }

  keypoint_base_ = Array({1, kNumKeypoints * kBlock});
  keypoint_shape_ = Array({kNumBetas, kNumKeypoints * kBlock});
  for (std::size_t q = 0; q < kNumKeypoints; ++q)
    for (std::size_t v = 0; v < n; ++v) {
      const double r = kreg[q * n + v];
      if (r == 0.0) continue;
      for (std::size_t col = 0; col < kBlock; ++col) {
        keypoint_base_[q * kBlock + col] += r * vertex_base_[v * kBlock + col];
        for (std::size_t k = 0; k < kNumBetas; ++k)
          keypoint_shape_[k * kNumKeypoints * kBlock + q * kBlock + col] +=
              r * vertex_shape_[k * n * kBlock + v * kBlock + col];
      }
    }
}

namespace {

Var affine_blend(Graph& g, const Var& beta, const Array& base, const Array& shape_part) {
  const std::size_t batch = beta.shape()[0];
  const std::size_t cols = base.shape[1];
  return ad::matmul(beta, g.constant(shape_part)) + ad::expand(g.constant(base), {batch, cols});
}

void check_beta(const Var& beta) {
  if (beta.shape().size() != 2 || beta.shape()[1] != kNumBetas)
    throw ad::ShapeError("smpl beta", beta.shape(), "expected [B, 10]");
}

}  // namespace

Var SmplLayer::rest_joints(Graph& g, const Var& beta) const {
  check_beta(beta);
  const std::size_t batch = beta.shape()[0];
  return ad::reshape(affine_blend(g, beta, joint_base_, joint_shape_), {batch, kNumJoints, 3});
}

ShapedRest SmplLayer::shaped_rest(Graph& g, const Var& beta) const {
  check_beta(beta);
  const std::size_t batch = beta.shape()[0];
  const std::size_t n = num_vertices();
  Array tmpl = model_.template_vertices;
  tmpl.shape = {1, n * 3};
  Var verts = ad::reshape(affine_blend(g, beta, tmpl, rest_shape_), {batch, n, 3});
  return {verts, rest_joints(g, beta)};
}

WorldTransforms SmplLayer::forward_kinematics(Graph& g, const Var& joints_rest, const Var& theta) const {
  (void)g;
  const ad::Shape& js = joints_rest.shape();
  if (js.size() != 3 || js[1] != kNumJoints || js[2] != 3)
    throw ad::ShapeError("forward_kinematics", js, "joints_rest must be [B, 24, 3]");
  const std::size_t batch = js[0];
  if (theta.shape() != ad::Shape{batch, kNumPose}) throw ad::ShapeError("forward_kinematics", js, theta.shape());

  WorldTransforms out;
  Var local = rodrigues(ad::reshape(theta, {batch * kNumJoints, 3}));
  out.local_rotations = ad::reshape(local, {batch, kNumJoints * 9});
  Var flat = ad::reshape(joints_rest, {batch, kNumJoints * 3});
  std::vector<Var> rest(kNumJoints);
  for (std::size_t j = 0; j < kNumJoints; ++j) rest[j] = ad::slice_last(flat, 3 * j, 3 * j + 3);

  out.rotations.resize(kNumJoints);
  out.translations.resize(kNumJoints);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    Var rot = ad::reshape(ad::slice_last(out.local_rotations, 9 * j, 9 * j + 9), {batch, 3, 3});
    const int p = model_.parents[j];
    if (p < 0) {
      out.rotations[j] = rot;
      out.translations[j] = rest[j];
      continue;
    }
    const auto pp = static_cast<std::size_t>(p);
    out.rotations[j] = ad::bmm(out.rotations[pp], rot);
    Var offset = ad::reshape(rest[j] - rest[pp], {batch, 3, 1});
    out.translations[j] = ad::reshape(ad::bmm(out.rotations[pp], offset), {batch, 3}) + out.translations[pp];
  }
  return out;
}

Var SmplLayer::skinning_blocks(const WorldTransforms& world, const Var& joints_rest) const {
  const std::size_t batch = joints_rest.shape()[0];
  Var flat = ad::reshape(joints_rest, {batch, kNumJoints * 3});
  std::vector<Var> blocks;
  blocks.reserve(kNumJoints);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const Var& rot = world.rotations[j];
    Var rest = ad::reshape(ad::slice_last(flat, 3 * j, 3 * j + 3), {batch, 3, 1});
    Var shift = world.translations[j] - ad::reshape(ad::bmm(rot, rest), {batch, 3});
    blocks.push_back(ad::concat({ad::reshape(ad::transpose_last2(rot), {batch, 9}), shift}));
  }
  return ad::reshape(ad::concat(blocks), {batch, kBlock, 3});
}

SmplOutput SmplLayer::forward(Graph& g, const Var& beta, const Var& theta) const {
  const std::size_t batch = beta.shape()[0];
  const std::size_t n = num_vertices();
  Var jrest = rest_joints(g, beta);
  SmplOutput out;
  out.transforms = forward_kinematics(g, jrest, theta);
  Var blocks = skinning_blocks(out.transforms, jrest);
  Var weights = ad::reshape(affine_blend(g, beta, vertex_base_, vertex_shape_), {batch, n, kBlock});
  out.vertices = ad::bmm(weights, blocks);
  Array kreg = model_.keypoint_regressor;
  kreg.shape = {1, kNumKeypoints, n};
  out.joints = ad::bmm(ad::expand(g.constant(std::move(kreg)), {batch, kNumKeypoints, n}), out.vertices);
  return out;
}

Var SmplLayer::keypoints(Graph& g, const Var& beta, const Var& theta, WorldTransforms* transforms) const {
  const std::size_t batch = beta.shape()[0];
  Var jrest = rest_joints(g, beta);
  WorldTransforms world = forward_kinematics(g, jrest, theta);
  Var blocks = skinning_blocks(world, jrest);
  Var weights = ad::reshape(affine_blend(g, beta, keypoint_base_, keypoint_shape_), {batch, kNumKeypoints, kBlock});
  Var kp = ad::bmm(weights, blocks);
  if (transforms != nullptr) *transforms = std::move(world);
  return kp;
}

namespace {

Eigen::MatrixXd to_matrix(const Array& a, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = a[r * cols + c];
  return m;
}

std::pair<Var, Var> single_inputs(Graph& g, const std::vector<double>& beta, const std::vector<double>& theta) {
  if (beta.size() != kNumBetas || theta.size() != kNumPose)
    throw std::invalid_argument("smpl_forward expects 10 shape and 72 pose values");
  return {g.constant(Array({1, kNumBetas}, beta)), g.constant(Array({1, kNumPose}, theta))};
}

}  // namespace

PosedBody smpl_forward(const SmplLayer& layer, const std::vector<double>& beta, const std::vector<double>& theta) {
  Graph g;
  auto [b, t] = single_inputs(g, beta, theta);
  SmplOutput out = layer.forward(g, b, t);
  return {to_matrix(out.vertices.value(), layer.num_vertices(), 3), to_matrix(out.joints.value(), kNumKeypoints, 3)};
}

Eigen::MatrixXd smpl_keypoints(const SmplLayer& layer, const std::vector<double>& beta,
                               const std::vector<double>& theta) {
  Graph g;
  auto [b, t] = single_inputs(g, beta, theta);
  return to_matrix(layer.keypoints(g, b, t).value(), kNumKeypoints, 3);
}

}  // namespace hmr::body
