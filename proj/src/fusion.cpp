#include "hmr/fusion.hpp"

#include "hmr/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace hmr::fusion {

StreamMask select_streams(Rng& rng, double p_miss) {
  if (!(p_miss >= 0.0 && p_miss < 0.5)) throw std::invalid_argument("p_miss must lie in [0, 0.5)");
  const double u = uniform(rng);
  if (u < p_miss) return StreamMask::rgb;
  if (u < 2.0 * p_miss) return StreamMask::depth;
  return StreamMask::none;
}

void FusionConfig::validate() const {
  if (feature_dim == 0 || encoder_hidden == 0 || regressor_hidden == 0)
    throw std::invalid_argument("fusion widths must be > 0");
  if (n_iterations == 0) throw std::invalid_argument("fusion.n_iterations must be >= 1");
  if (!(regressor_output_gain >= 0.0)) throw std::invalid_argument("fusion.regressor_output_gain must be >= 0");
}

PoseState PoseState::from_row(const Array& states, std::size_t row) {
  if (states.rank() != 2 || states.shape[1] != kStateDim || row >= states.shape[0])
    throw std::out_of_range("PoseState::from_row: bad state array or row");
  const double* s = states.data.data() + row * kStateDim;
  PoseState p;
  p.theta.assign(s + kPoseOffset, s + kShapeOffset);
  p.beta.assign(s + kShapeOffset, s + kRotationOffset);
  p.rotation = Eigen::Vector3d(s[kRotationOffset], s[kRotationOffset + 1], s[kRotationOffset + 2]);
  p.translation = Eigen::Vector2d(s[kTranslationOffset], s[kTranslationOffset + 1]);
  p.scale = s[kScaleOffset];
  return p;
}

FusionNetwork::FusionNetwork(const FusionConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.feature_dim;
  const std::size_t h = config_.encoder_hidden;
  encoder_rgb_ = nn::Mlp("encoder_rgb", {data::kRgbObsDim, h, h, d}, rng, true);
  encoder_depth_ = nn::Mlp("encoder_depth", {data::kDepthObsDim, h, h, d}, rng, true);
  fusion_ = nn::Mlp("fusion", {2 * d, config_.fusion_hidden_width(), config_.fusion_out_width()}, rng, true);
  const std::size_t rh = config_.regressor_hidden;
  regressor_ = nn::Mlp("regressor", {config_.fusion_out_width() + kStateDim, rh, rh, kStateDim}, rng, false,
                       config_.regressor_output_gain);
  mean_theta_ = Array({1, kStateDim});
  mean_theta_[kScaleOffset] = 1.0;
}

Var FusionNetwork::encode(Graph& g, StreamKind stream, const Var& obs) {
  return encoder(stream).forward(g, obs);
}

Var FusionNetwork::fuse(Graph& g, const Var& f_rgb, const Var& f_depth) {
  if (f_rgb.shape() != f_depth.shape()) throw ad::ShapeError("fuse", f_rgb.shape(), f_depth.shape());
  return fusion_.forward(g, ad::concat({f_rgb, f_depth}));
}

Var FusionNetwork::regress(Graph& g, const Var& phi, std::size_t n_iterations) {
  if (n_iterations == 0) throw std::invalid_argument("regress needs n_iterations >= 1");
  const std::size_t batch = phi.shape()[0];
  Var state = ad::expand(g.constant(mean_theta_), {batch, kStateDim});
  for (std::size_t k = 0; k < n_iterations; ++k) state = state + regressor_.forward(g, ad::concat({phi, state}));
  return state;
}

Var FusionNetwork::forward(Graph& g, const Var& rgb_obs, const Var& depth_obs) {
  Var phi = fuse(g, encode(g, StreamKind::rgb, rgb_obs), encode(g, StreamKind::depth, depth_obs));
  return regress(g, phi, config_.n_iterations);
}

std::vector<ad::Parameter*> FusionNetwork::parameters() {
  std::vector<ad::Parameter*> out;
  encoder_rgb_.collect(out);
  encoder_depth_.collect(out);
  fusion_.collect(out);
  regressor_.collect(out);
  return out;
}

void TrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("train.batch must be > 0");
  if (!(lr > 0.0) || !(disc_lr > 0.0)) throw std::invalid_argument("learning rates must be > 0");
  if (!(p_miss >= 0.0 && p_miss < 0.5)) throw std::invalid_argument("p_miss must lie in [0, 0.5)");
  if (!(tie_tolerance >= 0.0)) throw std::invalid_argument("tie_tolerance must be >= 0");
  if (disc_hidden == 0) throw std::invalid_argument("train.disc_hidden must be > 0");
  weights.validate();
}

BatchInputs batch_inputs(const std::vector<const data::Sample*>& batch, const std::vector<StreamMask>& masks) {
  if (masks.size() != batch.size()) throw std::invalid_argument("one stream mask per sample");
  const std::size_t n = batch.size();
  BatchInputs in{Array({n, data::kRgbObsDim}), Array({n, data::kDepthObsDim}), masks};
  for (std::size_t b = 0; b < n; ++b) {
    const data::Sample& s = *batch[b];
    if (s.rgb_obs.present && masks[b] != StreamMask::rgb) {
      if (s.rgb_obs.data.size() != data::kRgbObsDim) throw std::invalid_argument(s.sample_id + ": bad rgb observation");
      std::copy(s.rgb_obs.data.begin(), s.rgb_obs.data.end(),
                in.rgb.data.begin() + static_cast<std::ptrdiff_t>(b * data::kRgbObsDim));
    }
    if (s.depth_obs.present && masks[b] != StreamMask::depth) {
      if (s.depth_obs.data.size() != data::kDepthObsDim)
        throw std::invalid_argument(s.sample_id + ": bad depth observation");
      std::copy(s.depth_obs.data.begin(), s.depth_obs.data.end(),
                in.depth.data.begin() + static_cast<std::ptrdiff_t>(b * data::kDepthObsDim));
    }
  }
  return in;
}

namespace {

std::vector<ad::Parameter*> all_params(FusionNetwork& net) { return net.parameters(); }

std::vector<ad::Parameter*> disc_params(losses::Discriminator& d) {
  std::vector<ad::Parameter*> out;
  d.collect(out);
  return out;
}

Rng seeded(std::uint64_t seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }

FusionNetwork make_net(const FusionConfig& c, std::uint64_t seed) {
  Rng rng = seeded(seed, 1);
  return FusionNetwork(c, rng);
}

losses::Discriminator make_disc(std::size_t hidden, std::uint64_t seed) {
  Rng rng = seeded(seed, 2);
  return losses::Discriminator(hidden, rng);
}

Var root_relative(const Var& kp, std::size_t root) {
  const std::size_t batch = kp.shape()[0];
  const std::size_t k = kp.shape()[1];
  Var flat = ad::reshape(kp, {batch, 3 * k});
  Var r = ad::reshape(ad::slice_last(flat, 3 * root, 3 * root + 3), {batch, 1, 3});
  return kp - ad::expand(r, {batch, k, 3});
}

std::vector<double> mean_weights(const std::vector<bool>& eligible) {
  std::size_t n = 0;
  for (bool e : eligible) n += e ? 1 : 0;
  std::vector<double> w(eligible.size(), 0.0);
  if (n == 0) return w;
  for (std::size_t i = 0; i < eligible.size(); ++i)
    if (eligible[i]) w[i] = 1.0 / static_cast<double>(n);
  return w;
}

bool any(const std::vector<bool>& v) {
  for (bool b : v)
    if (b) return true;
  return false;
}

}  // namespace

Trainer::Trainer(const FusionConfig& fusion, const TrainConfig& train, const body::SmplLayer& layer,
                 const data::PosePrior& prior, std::uint64_t seed)
    : fusion_config_(fusion),
      train_(train),
      layer_(&layer),
      prior_(prior),
      rng_(seeded(seed, 3)),
      net_(make_net(fusion, seed)),
      disc_(make_disc(train.disc_hidden, seed)),
      gen_params_(all_params(net_)),
      disc_params_(disc_params(disc_)),
      opt_gen_(gen_params_, {train.lr}),
      opt_disc_(disc_params_, {train.disc_lr}) {
  train_.validate();
  prior_.validate();
}

std::vector<StreamMask> Trainer::draw_masks(const std::vector<const data::Sample*>& batch) {
  std::vector<StreamMask> masks(batch.size(), StreamMask::none);
  if (!train_.dropout_training) return masks;
  for (std::size_t b = 0; b < batch.size(); ++b)
    if (batch[b]->depth_obs.present && batch[b]->rgb_obs.present) masks[b] = select_streams(rng_, train_.p_miss);
  return masks;
}

losses::LossComponents Trainer::components(Graph& g, const std::vector<const data::Sample*>& batch,
                                           const std::vector<StreamMask>& masks, Var* local_rotations, Var* beta_out) {
  const std::size_t n = batch.size();
  const std::size_t k = body::kNumKeypoints;
  BatchInputs in = batch_inputs(batch, masks);
  Var state = net_.forward(g, g.constant(std::move(in.rgb)), g.constant(std::move(in.depth)));
  Var theta = ad::slice_last(state, kPoseOffset, kShapeOffset);
  Var beta = ad::slice_last(state, kShapeOffset, kRotationOffset);
  Var rot = ad::slice_last(state, kRotationOffset, kTranslationOffset);
  Var trans = ad::slice_last(state, kTranslationOffset, kScaleOffset);
  Var scale = ad::slice_last(state, kScaleOffset, kStateDim);
  body::WorldTransforms world;
  Var kp = layer_->keypoints(g, beta, theta, &world);
  if (local_rotations != nullptr) *local_rotations = world.local_rotations;
  if (beta_out != nullptr) *beta_out = beta;

  const LossSwitches& sw = train_.switches;
  losses::LossComponents c;

  if (sw.use_2d) {
    Array gt({n, k, 2});
    std::vector<std::uint8_t> vis(n * k, 0);
    for (std::size_t b = 0; b < n; ++b) {
      const data::Sample& s = *batch[b];
      for (std::size_t j = 0; j < k; ++j) {
        gt[(b * k + j) * 2] = s.kp2d(static_cast<Eigen::Index>(j), 0);
        gt[(b * k + j) * 2 + 1] = s.kp2d(static_cast<Eigen::Index>(j), 1);
        vis[b * k + j] = s.annotations.has_2d && s.visibility[j] ? 1 : 0;
      }
    }
    losses::MaskedLoss l = losses::loss_2d(camera::project(kp, rot, trans, scale), gt, vis);
    c.l2d = {l.value, l.contributes};
  }

  if (sw.use_drc) {
    std::vector<losses::Relations> rel(n);
    std::vector<bool> eligible(n, false);
    for (std::size_t b = 0; b < n; ++b) {
      rel[b] = data::build_relations(*batch[b], train_.tie_tolerance);
      for (const auto& r : rel[b])
        if (r.r != 0) eligible[b] = true;
    }
    if (any(eligible)) {
      const std::vector<double> w = mean_weights(eligible);
      c.drc = {losses::loss_drc(camera::camera_depths(kp, rot), rel, w), true};
    }
  }

  if (sw.use_smpl_constraints && constraints_ != nullptr) {
    Array target({n, body::kNumBetas + body::kNumPose});
    std::vector<bool> eligible(n, false);
    for (std::size_t b = 0; b < n; ++b) {
      auto it = constraints_->find(batch[b]->sample_id);
      if (it == constraints_->end() || !it->second.accepted) continue;
      eligible[b] = true;
      const std::size_t off = b * (body::kNumBetas + body::kNumPose);
      std::copy(it->second.beta_tilde.begin(), it->second.beta_tilde.end(),
                target.data.begin() + static_cast<std::ptrdiff_t>(off));
      std::copy(it->second.theta_tilde.begin(), it->second.theta_tilde.end(),
                target.data.begin() + static_cast<std::ptrdiff_t>(off + body::kNumBetas));
    }
    if (any(eligible)) {
      const std::vector<double> w = mean_weights(eligible);
      c.smpl = {losses::loss_smpl(ad::concat({beta, theta}), target, w), true};
    }
  }

  if (sw.use_3d_joint_loss) {
    Array gt({n, k, 3});
    std::vector<bool> eligible(n, false);
    for (std::size_t b = 0; b < n; ++b) {
      const data::Sample& s = *batch[b];
      if (!s.annotations.has_3d || !s.kp3d) continue;
      eligible[b] = true;
      const double unit = data::builtin_frame(s.frame).unit_scale;
      const Eigen::MatrixXd rel = uscg::root_relativize(*s.kp3d / unit, train_.root_index);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t a = 0; a < 3; ++a)
          gt[(b * k + j) * 3 + a] = rel(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a));
    }
    if (any(eligible)) {
      const std::vector<double> w = mean_weights(eligible);
      c.joints3d = {losses::loss_joints3d(root_relative(kp, train_.root_index), gt, w), true};
    }
  }

  if (sw.use_adv) {
    Var fake = disc_.forward(g, beta, world.local_rotations);
    c.adv = {losses::loss_adv(true, fake, fake), true};
  }
  return c;
}

StepLosses Trainer::train_step(const std::vector<const data::Sample*>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const std::vector<StreamMask> masks = draw_masks(batch);
  StepLosses out;
  Var local_rot;
  Var beta;
  {
    Graph g;
    losses::LossComponents c = components(g, batch, masks, &local_rot, &beta);
    Var total = losses::loss_total(g, c, train_.weights);
    auto read = [](const losses::LossTerm& t) -> std::optional<double> {
      if (!t.available) return std::nullopt;
      return t.value.item();
    };
    out.l2d = read(c.l2d);
    out.smpl = read(c.smpl);
    out.drc = read(c.drc);
    out.adv = read(c.adv);
    out.joints3d = read(c.joints3d);
    out.total = total.item();
    if (!std::isfinite(out.total)) throw std::runtime_error("train_step: non-finite loss");
    g.backward(total);
    opt_gen_.step();

    if (train_.switches.use_adv) {
      for (ad::Parameter* p : disc_params_) p->zero_grad();
      const std::size_t n = batch.size();
      Array real_theta({n * body::kNumJoints, 3});
      Array real_beta({n, body::kNumBetas});
      for (std::size_t b = 0; b < n; ++b) {
        const data::PoseShape ps = data::sample_pose_shape(rng_, prior_);
        std::copy(ps.beta.begin(), ps.beta.end(), real_beta.data.begin() + static_cast<std::ptrdiff_t>(b * body::kNumBetas));
        std::copy(ps.theta.begin(), ps.theta.end(),
                  real_theta.data.begin() + static_cast<std::ptrdiff_t>(b * body::kNumPose));
      }
      Graph gd;
      Var fake = disc_.forward(gd, gd.constant(beta.value()), gd.constant(local_rot.value()));
      Var real_rot = ad::reshape(body::rodrigues(gd.constant(std::move(real_theta))), {n, body::kNumJoints * 9});
      Var real = disc_.forward(gd, gd.constant(std::move(real_beta)), real_rot);
      Var dloss = losses::loss_adv(false, fake, real);
      out.disc = dloss.item();
      gd.backward(dloss);
      opt_disc_.step();
    }
  }
  return out;
}

BatchSampler::BatchSampler(std::vector<std::vector<const data::Sample*>> rgbd_pools,
                           std::vector<const data::Sample*> rgb_only, std::size_t batch, std::size_t rgb_only_batch,
                           std::uint64_t seed)
    : rgbd_(std::move(rgbd_pools)),
      rgb_only_(std::move(rgb_only)),
      batch_(batch),
      rgb_only_batch_(rgb_only_batch),
      rng_(derive_seed(seed, fnv1a("batches"))) {
  std::erase_if(rgbd_, [](const auto& pool) { return pool.empty(); });
  if (rgbd_.empty() && rgb_only_.empty()) throw std::invalid_argument("BatchSampler: no training samples");
  if (rgb_only_.empty()) rgb_only_batch_ = 0;
  if (rgbd_.empty()) {
    rgb_only_batch_ = rgb_only_batch_ + batch_;
    batch_ = 0;
  }
}

std::vector<const data::Sample*> BatchSampler::next() {
  std::vector<const data::Sample*> out;
  out.reserve(batch_ + rgb_only_batch_);
  auto draw = [&](const std::vector<const data::Sample*>& pool) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    out.push_back(pool[pick(rng_)]);
  };
  for (std::size_t i = 0; i < batch_; ++i) draw(rgbd_[i % rgbd_.size()]);
  for (std::size_t i = 0; i < rgb_only_batch_; ++i) draw(rgb_only_);
  return out;
}

void train_loop(Trainer& trainer, BatchSampler& sampler, std::size_t steps,
                const std::function<void(std::size_t, const StepLosses&)>& on_step) {
  for (std::size_t step = 1; step <= steps; ++step) {
    StepLosses l = trainer.train_step(sampler.next());
    if (on_step) on_step(step, l);
  }
}

Array predict_states(FusionNetwork& net, const std::vector<const data::Sample*>& samples,
                     const std::vector<StreamMask>& masks, const std::vector<bool>& void_both) {
  if (masks.size() != samples.size() || (!void_both.empty() && void_both.size() != samples.size()))
    throw std::invalid_argument("predict_states: one mask per sample");
  const std::size_t n = samples.size();
  Array out({n, kStateDim});
  const std::size_t chunk = 512;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    std::vector<const data::Sample*> part(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                          samples.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<StreamMask> part_masks(masks.begin() + static_cast<std::ptrdiff_t>(begin),
                                       masks.begin() + static_cast<std::ptrdiff_t>(end));
    BatchInputs in = batch_inputs(part, part_masks);
    if (!void_both.empty())
      for (std::size_t b = 0; b < part.size(); ++b)
        if (void_both[begin + b]) {
          std::fill_n(in.rgb.data.begin() + static_cast<std::ptrdiff_t>(b * data::kRgbObsDim), data::kRgbObsDim, 0.0);
          std::fill_n(in.depth.data.begin() + static_cast<std::ptrdiff_t>(b * data::kDepthObsDim), data::kDepthObsDim,
                      0.0);
        }
    Graph g;
    Var state = net.forward(g, g.constant(std::move(in.rgb)), g.constant(std::move(in.depth)));
    std::copy(state.value().data.begin(), state.value().data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(begin * kStateDim));
  }
  return out;
}

PoseState infer(FusionNetwork& net, const data::Sample& sample, bool rgb_available, bool depth_available) {
  const bool rgb = rgb_available && sample.rgb_obs.present;
  const bool depth = depth_available && sample.depth_obs.present;
  if (!rgb && !depth) throw std::invalid_argument("infer: no stream available for " + sample.sample_id);
  const StreamMask mask = !rgb ? StreamMask::rgb : (!depth ? StreamMask::depth : StreamMask::none);
  return PoseState::from_row(predict_states(net, {&sample}, {mask}), 0);
}

Eigen::MatrixXd state_keypoints(const body::SmplLayer& layer, const PoseState& state) {
  return body::smpl_keypoints(layer, state.beta, state.theta);
}

Eigen::VectorXd state_depths(const body::SmplLayer& layer, const PoseState& state) {
  const Eigen::Matrix3d r = body::rodrigues(state.rotation);
  return state_keypoints(layer, state) * r.row(2).transpose();
}

void save_network(const std::string& path, FusionNetwork& net) {
  nn::save_checkpoint(path, nn::state_dict(net.parameters()));
}

void load_network(const std::string& path, FusionNetwork& net) {
  nn::load_state_dict(nn::load_checkpoint(path), net.parameters());
}

}  // namespace hmr::fusion
