#include "dgnerf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "dgnerf/log.hpp"
#include "dgnerf/rendering.hpp"
#include "dgnerf/scenegen.hpp"

namespace dgnerf {

namespace fs = std::filesystem;

const char* constraint_name(PointConstraint c) {
  switch (c) {
    case PointConstraint::Gpc: return "gpc";
    case PointConstraint::Chamfer: return "chamfer";
    case PointConstraint::None: return "none";
  }
  return "?";
}

PointConstraint constraint_from_name(const std::string& name) {
  if (name == "gpc") return PointConstraint::Gpc;
  if (name == "chamfer") return PointConstraint::Chamfer;
  if (name == "none") return PointConstraint::None;
  throw TrainerError("unknown point constraint: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw TrainerError("config: epochs must be >= 0");
  if (rays_per_batch < 1) throw TrainerError("config: rays_per_batch must be >= 1");
  if (!(lr_field > 0 && lr_pose >= 0 && lr_undistort >= 0))
    throw TrainerError("config: learning rates must be positive");
  if (!(phase1 > 0 && phase1 < phase2 && phase2 < 1))
    throw TrainerError("config: need 0 < phase1 < phase2 < 1");
  sampling.validate();
  gpc.validate();
}

int TrainConfig::resolved_cloud_stride(int w, int h) const {
  if (cloud_stride > 0) return cloud_stride;
  int stride = 1;
  while ((w / stride) * (h / stride) > 1024) ++stride;
  return stride;
}

std::vector<int> TrainConfig::holdout_frames(int n_frames) const {
  std::vector<int> out;
  if (holdout_every <= 0) return out;
  for (int i = holdout_every; i < n_frames; i += holdout_every) out.push_back(i);
  return out;
}

std::vector<int> TrainConfig::trainable_frames(int n_frames) const {
  std::vector<int> hold = holdout_frames(n_frames);
  std::vector<int> out;
  for (int i = 0; i < n_frames; ++i)
    if (std::find(hold.begin(), hold.end(), i) == hold.end()) out.push_back(i);
  return out;
}

LossWeights phase_weights(int epoch, const TrainConfig& cfg) {
  double e1 = cfg.phase1 * cfg.epochs;
  double e2 = cfg.phase2 * cfg.epochs;
  LossWeights w = cfg.weights;
  if (epoch < e1) return w;
  if (epoch < e2) {
    double f = 1.0 - (epoch - e1) / (e2 - e1);
    w.lambda1 *= f;
    w.lambda2 *= f;
    w.lambda3 *= f;
    return w;
  }
  return {0.0, 0.0, 0.0};
}

double lr_multiplier(int epoch, const TrainConfig& cfg) {
  double e1 = cfg.phase1 * cfg.epochs;
  if (epoch < e1) return 1.0;
  double u = (epoch - e1) / (cfg.epochs - e1);
  return 0.1 + 0.9 * (0.5 + 0.5 * std::cos(M_PI * u));
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamMoments& mom,
               double lr, double beta1, double beta2, double eps, int64_t t) {
  if (params.size() != grads.size()) throw TrainerError("adam: size mismatch");
  if (t < 1) throw TrainerError("adam: step counter must be >= 1");
  if (!grads.allFinite()) throw TrainerError("adam: non-finite gradient");
  if (mom.m.size() != params.size()) {
    mom.m = Eigen::VectorXd::Zero(params.size());
    mom.v = Eigen::VectorXd::Zero(params.size());
  }
  mom.m = beta1 * mom.m + (1.0 - beta1) * grads;
  mom.v = beta2 * mom.v.array().matrix() +
          (1.0 - beta2) * grads.array().square().matrix();
  double bc1 = 1.0 - std::pow(beta1, double(t));
  double bc2 = 1.0 - std::pow(beta2, double(t));
  params.array() -=
      lr * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + eps);
}

// ---- flat parameter packing -------------------------------------------------

namespace {

size_t field_flat_size(const FieldParams& f) {
  size_t n = 0;
  for (size_t i = 0; i < f.weights.size(); ++i)
    n += size_t(f.weights[i].size()) + size_t(f.biases[i].size());
  return n;
}

void field_to_flat(const FieldParams& f, Eigen::VectorXd& out) {
  out.resize(Eigen::Index(field_flat_size(f)));
  Eigen::Index o = 0;
  for (size_t i = 0; i < f.weights.size(); ++i) {
    const auto& w = f.weights[i];
    std::memcpy(out.data() + o, w.data(), size_t(w.size()) * sizeof(double));
    o += w.size();
    const auto& b = f.biases[i];
    std::memcpy(out.data() + o, b.data(), size_t(b.size()) * sizeof(double));
    o += b.size();
  }
}

void flat_to_field(const Eigen::VectorXd& in, FieldParams& f) {
  Eigen::Index o = 0;
  for (size_t i = 0; i < f.weights.size(); ++i) {
    auto& w = f.weights[i];
    std::memcpy(w.data(), in.data() + o, size_t(w.size()) * sizeof(double));
    o += w.size();
    auto& b = f.biases[i];
    std::memcpy(b.data(), in.data() + o, size_t(b.size()) * sizeof(double));
    o += b.size();
  }
}

// per-frame tape bundle shared by all rays of that frame within a chunk
struct FrameVars {
  PoseVars pose;
  RotationVars rot;
  ad::Var s_raw;
  ad::Var k;
  ad::Var s;  // softplus(s_raw)
};

struct EpochGrads {
  Eigen::VectorXd field;
  std::map<int, Eigen::Matrix<double, 6, 1>> pose;   // omega, t per frame
  std::map<int, Eigen::Vector2d> undist;             // s_raw, k per frame

  void init(size_t field_size) { field = Eigen::VectorXd::Zero(Eigen::Index(field_size)); }

  void add_field(ad::Tape& tape, const FieldVars& fv, double scale) {
    Eigen::Index o = 0;
    for (size_t i = 0; i < fv.weights.size(); ++i) {
      Eigen::MatrixXd gw = tape.grad_or_zero(fv.weights[i]);
      field.segment(o, gw.size()) +=
          scale * Eigen::Map<Eigen::VectorXd>(gw.data(), gw.size());
      o += gw.size();
      Eigen::MatrixXd gb = tape.grad_or_zero(fv.biases[i]);
      field.segment(o, gb.size()) +=
          scale * Eigen::Map<Eigen::VectorXd>(gb.data(), gb.size());
      o += gb.size();
    }
  }

  void add_frame(ad::Tape& tape, int frame, const FrameVars& f, double scale,
                 bool pose_trainable) {
    if (pose_trainable) {
      Eigen::MatrixXd go = tape.grad_or_zero(f.pose.omega);
      Eigen::MatrixXd gt = tape.grad_or_zero(f.pose.t);
      auto [it, fresh] = pose.try_emplace(frame, Eigen::Matrix<double, 6, 1>::Zero());
      it->second.head<3>() += scale * Eigen::Map<Eigen::Vector3d>(go.data());
      it->second.tail<3>() += scale * Eigen::Map<Eigen::Vector3d>(gt.data());
    }
    auto [it, fresh] = undist.try_emplace(frame, Eigen::Vector2d::Zero());
    it->second[0] += scale * tape.grad_or_zero(f.s_raw)(0, 0);
    it->second[1] += scale * tape.grad_or_zero(f.k)(0, 0);
  }
};

FrameVars make_frame_vars(ad::Tape& tape, const TrainState& state, int frame,
                          bool pose_trainable) {
  FrameVars f;
  f.pose = pose_leaves(tape, state.poses[size_t(frame)], pose_trainable);
  f.rot = rotation_pair_on_tape(tape, f.pose.omega);
  const auto& u = state.undistort[size_t(frame)];
  f.s_raw = tape.leaf(u.s_raw);
  f.k = tape.leaf(u.k);
  f.s = tape.softplus(f.s_raw);
  return f;
}

struct RayDraw {
  int frame, px, py;
};

}  // namespace

Trajectory state_trajectory(const TrainState& state, const std::vector<int>& frames) {
  Trajectory t;
  for (int f : frames) t.emplace_back(f, state.poses[size_t(f)]);
  return t;
}

Trajectory dataset_trajectory(const Dataset& ds, const std::vector<int>& frames) {
  Trajectory t;
  for (int f : frames) t.emplace_back(f, ds.gt_poses[size_t(f)]);
  return t;
}

EpochRecord train_epoch(TrainState& state, const Dataset& ds, const TrainConfig& cfg,
                        Rng& rng, AnchorPolicy anchor) {
  cfg.validate();
  if (ds.n_frames() == 0) throw TrainerError("train_epoch: empty dataset");

  std::vector<int> trainable = cfg.trainable_frames(ds.n_frames());
  int anchor_frame = anchor == AnchorPolicy::FixFrame0 ? trainable.front() : -1;

  SamplingConfig scfg = cfg.sampling;
  scfg.near = ds.near;
  scfg.far = ds.far;
  scfg.t_s = cfg.resolved_t_s();
  Strategy strat = select_strategy(state.epoch, scfg);
  SamplingConfig ray_cfg = scfg;
  ray_cfg.strategy = strat == Strategy::Tdbs ? Strategy::Tdbs : Strategy::Uniform;

  LossWeights w_now = phase_weights(state.epoch, cfg);
  double mult = lr_multiplier(state.epoch, cfg);

  // ray batch, drawn from the caller's stream
  uint64_t epoch_salt = rng.next_u64();
  std::vector<RayDraw> rays(size_t(cfg.rays_per_batch));
  for (auto& r : rays) {
    r.frame = trainable[size_t(rng.uniform_int(int(trainable.size())))];
    r.px = rng.uniform_int(ds.K.width);
    r.py = rng.uniform_int(ds.K.height);
  }

  int n_chunks = cfg.resolved_chunks();
  int chunk_size = (cfg.rays_per_batch + n_chunks - 1) / n_chunks;

  struct ChunkWork {
    ad::Tape tape;
    FieldVars field;
    std::map<int, FrameVars> frames;
    ad::Var rgb_sum, depth_sum;
    int depth_count = 0;
  };

  // stage A: forwards (chunks are independent; reduction stays chunk-ordered)
  std::vector<ChunkWork> chunks{size_t(n_chunks)};
  double rgb_total = 0.0;
  int depth_count_total = 0;
  double sigma_abs = cfg.sigma_bar * (ds.far - ds.near);
  Strategy per_ray_strategy = ray_cfg.strategy;
  for (int c = 0; c < n_chunks; ++c) {
    ChunkWork& cw = chunks[size_t(c)];
    cw.field = field_leaves(cw.tape, state.field, true);
    cw.rgb_sum = cw.tape.constant(0.0);
    cw.depth_sum = cw.tape.constant(0.0);
    int lo = c * chunk_size;
    int hi = std::min(cfg.rays_per_batch, lo + chunk_size);
    if (lo >= hi) continue;

    std::vector<RayVars> ray_vars;
    std::vector<RaySampleSet> ray_samples;
    ray_vars.reserve(size_t(hi - lo));
    for (int i = lo; i < hi; ++i) {
      const RayDraw& r = rays[size_t(i)];
      auto it = cw.frames.find(r.frame);
      if (it == cw.frames.end())
        it = cw.frames
                 .emplace(r.frame,
                          make_frame_vars(cw.tape, state, r.frame, r.frame != anchor_frame))
                 .first;
      FrameVars& fv = it->second;
      ray_vars.push_back(
          generate_ray_on_tape(cw.tape, ds.K, fv.pose, fv.rot.R, r.px, r.py));
      // sampling centers on the raw prior: tying it to the learned
      // undistortion feeds the sampler's own depth bias back into (s, k)
      double prior_raw = ds.priors[size_t(r.frame)].at(r.px, r.py);
      Rng ray_rng(Rng::mix(epoch_salt, uint64_t(i)));
      ray_samples.push_back(per_ray_strategy == Strategy::Tdbs
                                ? sample_tdbs(prior_raw, ray_cfg, sigma_abs, ray_rng)
                                : sample_uniform(ray_cfg, ray_rng));
    }
    std::vector<RenderedPixelVars> pixels =
        render_rays_on_tape(cw.tape, cw.field, ray_vars, ray_samples);

    for (int i = lo; i < hi; ++i) {
      const RayDraw& r = rays[size_t(i)];
      const RenderedPixelVars& px = pixels[size_t(i - lo)];
      FrameVars& fv = cw.frames.at(r.frame);
      double prior_raw = ds.priors[size_t(r.frame)].at(r.px, r.py);
      double s_val = state.undistort[size_t(r.frame)].s();
      double und = s_val * prior_raw + state.undistort[size_t(r.frame)].k;

      Eigen::MatrixXd target(1, 3);
      target << ds.images[size_t(r.frame)].at(r.px, r.py, 0),
          ds.images[size_t(r.frame)].at(r.px, r.py, 1),
          ds.images[size_t(r.frame)].at(r.px, r.py, 2);
      ad::Var res = cw.tape.sub(px.color, cw.tape.constant(target));
      cw.rgb_sum = cw.tape.add(cw.rgb_sum, cw.tape.sum(cw.tape.mul(res, res)));

      bool prior_valid = und > ds.near;
      if (prior_valid && cw.tape.scalar_val(px.opacity) > cfg.opacity_mask_threshold) {
        ad::Var undist =
            cw.tape.add(cw.tape.mul(cw.tape.constant(prior_raw), fv.s), fv.k);
        ad::Var dres = cw.tape.sub(undist, px.depth);
        ad::Var term = cfg.depth_loss_l1
                           ? cw.tape.add(cw.tape.clamp_min(dres, 0.0),
                                         cw.tape.clamp_min(cw.tape.neg(dres), 0.0))
                           : cw.tape.mul(dres, dres);
        cw.depth_sum = cw.tape.add(cw.depth_sum, term);
        ++cw.depth_count;
      }
    }
    rgb_total += cw.tape.scalar_val(cw.rgb_sum);
    depth_count_total += cw.depth_count;
  }

  double l_rgb = rgb_total / (3.0 * cfg.rays_per_batch);
  double depth_total = 0.0;
  for (auto& cw : chunks) depth_total += cw.tape.scalar_val(cw.depth_sum);
  double l_depth = depth_count_total > 0 ? depth_total / depth_count_total : 0.0;
  if (depth_count_total == 0)
    log::debug("epoch %d: no depth-supervised rays in this batch", state.epoch);

  // stage B: one backward per chunk with the global normalizers
  size_t fsize = field_flat_size(state.field);
  EpochGrads grads;
  grads.init(fsize);
  double c_rgb = 1.0 / (3.0 * cfg.rays_per_batch);
  double c_depth =
      depth_count_total > 0 ? w_now.lambda1 / depth_count_total : 0.0;
  for (int c = 0; c < n_chunks; ++c) {
    ChunkWork& cw = chunks[size_t(c)];
    ad::Var root = cw.tape.mul(cw.rgb_sum, cw.tape.constant(c_rgb));
    if (c_depth > 0.0 && cw.depth_count > 0)
      root = cw.tape.add(root,
                         cw.tape.mul(cw.depth_sum, cw.tape.constant(c_depth)));
    cw.tape.backward(root);
    grads.add_field(cw.tape, cw.field, 1.0);
    for (auto& [frame, fv] : cw.frames)
      grads.add_frame(cw.tape, frame, fv, 1.0, frame != anchor_frame);
    cw.tape = ad::Tape();  // release this chunk's memory before the next
  }
  chunks.clear();

  // inter-frame constraints on consecutive trainable pairs
  double l_gpc = 0.0, l_reproj = 0.0;
  int n_pairs = int(trainable.size()) - 1;
  int stride = cfg.resolved_cloud_stride(ds.K.width, ds.K.height);
  if (n_pairs > 0) {
    double pair_w2 = w_now.lambda2 / n_pairs;
    double pair_w3 = w_now.lambda3 / n_pairs;
    for (int pi = 0; pi < n_pairs; ++pi) {
      int fm = trainable[size_t(pi)], fn = trainable[size_t(pi) + 1];
      ad::Tape tape;
      FrameVars vm = make_frame_vars(tape, state, fm, fm != anchor_frame);
      FrameVars vn = make_frame_vars(tape, state, fn, fn != anchor_frame);
      TapeCloud cm = build_prior_cloud_on_tape(
          tape, ds.K, vm.rot.Rt, vm.pose.t, ds.priors[size_t(fm)], vm.s, vm.k, stride,
          ds.near, &ds.images[size_t(fm)]);
      TapeCloud cn = build_prior_cloud_on_tape(tape, ds.K, vn.rot.Rt, vn.pose.t,
                                               ds.priors[size_t(fn)], vn.s, vn.k,
                                               stride, ds.near);
      if (!cm.points.valid() || !cn.points.valid()) {
        log::warn("pair (%d,%d): empty prior cloud, skipping constraints", fm, fn);
        continue;
      }
      ad::Var pc;
      bool have_pc = cfg.constraint != PointConstraint::None;
      if (cfg.constraint == PointConstraint::Gpc)
        pc = loss_gpc_on_tape(tape, cm.points, cn.points, cfg.gpc);
      else if (cfg.constraint == PointConstraint::Chamfer)
        pc = loss_chamfer_on_tape(tape, cm.points, cn.points);
      ReprojTerm rp = loss_reproj_on_tape(tape, cm.points, cm.colors,
                                          ds.images[size_t(fn)], ds.K, vn.rot.R,
                                          vn.pose.t);
      if (have_pc) l_gpc += tape.scalar_val(pc) / n_pairs;
      l_reproj += tape.scalar_val(rp.loss) / n_pairs;

      bool back_pc = have_pc && pair_w2 > 0.0;
      bool back_rp = pair_w3 > 0.0 && rp.n_valid > 0;
      if (!back_pc && !back_rp) continue;
      ad::Var root = tape.constant(0.0);
      if (back_pc) root = tape.add(root, tape.mul(pc, tape.constant(pair_w2)));
      if (back_rp) root = tape.add(root, tape.mul(rp.loss, tape.constant(pair_w3)));
      tape.backward(root);
      grads.add_frame(tape, fm, vm, 1.0, fm != anchor_frame);
      grads.add_frame(tape, fn, vn, 1.0, fn != anchor_frame);
    }
  }

  // gauge tether on non-anchor translations (see TrainConfig::pose_tether)
  if (cfg.pose_tether > 0 && !state.initial_poses.empty()) {
    for (int f : trainable) {
      if (f == anchor_frame) continue;
      Eigen::Vector3d d = state.poses[size_t(f)].t - state.initial_poses[size_t(f)].t;
      auto [it, fresh] = grads.pose.try_emplace(f, Eigen::Matrix<double, 6, 1>::Zero());
      it->second.tail<3>() += 2.0 * cfg.pose_tether * d;
    }
  }

  double total = total_loss(l_rgb, l_depth, l_gpc, l_reproj, w_now);
  if (!std::isfinite(total))
    throw TrainerError("non-finite loss at epoch " + std::to_string(state.epoch));

  // parameter updates, one Adam step per group
  int64_t t = state.epoch + 1;
  Eigen::VectorXd field_flat;
  field_to_flat(state.field, field_flat);
  adam_step(field_flat, grads.field, state.field_mom, cfg.lr_field * mult, 0.9, 0.999,
            1e-8, t);
  flat_to_field(field_flat, state.field);

  std::vector<int> pose_frames, undist_frames;
  for (int f : trainable) {
    if (f != anchor_frame) pose_frames.push_back(f);
    undist_frames.push_back(f);
  }
  Eigen::VectorXd pose_flat(6 * Eigen::Index(pose_frames.size()));
  Eigen::VectorXd pose_grad = Eigen::VectorXd::Zero(pose_flat.size());
  for (size_t i = 0; i < pose_frames.size(); ++i) {
    const PoseSE3& p = state.poses[size_t(pose_frames[i])];
    pose_flat.segment<3>(Eigen::Index(6 * i)) = p.omega;
    pose_flat.segment<3>(Eigen::Index(6 * i) + 3) = p.t;
    auto it = grads.pose.find(pose_frames[i]);
    if (it != grads.pose.end()) pose_grad.segment<6>(Eigen::Index(6 * i)) = it->second;
  }
  adam_step(pose_flat, pose_grad, state.pose_mom, cfg.lr_pose * mult, 0.9, 0.999, 1e-8,
            t);
  for (size_t i = 0; i < pose_frames.size(); ++i) {
    PoseSE3& p = state.poses[size_t(pose_frames[i])];
    p.omega = pose_flat.segment<3>(Eigen::Index(6 * i));
    p.t = pose_flat.segment<3>(Eigen::Index(6 * i) + 3);
  }

  Eigen::VectorXd u_flat(2 * Eigen::Index(undist_frames.size()));
  Eigen::VectorXd u_grad = Eigen::VectorXd::Zero(u_flat.size());
  for (size_t i = 0; i < undist_frames.size(); ++i) {
    const UndistortParams& u = state.undistort[size_t(undist_frames[i])];
    u_flat[Eigen::Index(2 * i)] = u.s_raw;
    u_flat[Eigen::Index(2 * i) + 1] = u.k;
    auto it = grads.undist.find(undist_frames[i]);
    if (it != grads.undist.end()) u_grad.segment<2>(Eigen::Index(2 * i)) = it->second;
  }
  adam_step(u_flat, u_grad, state.undistort_mom, cfg.lr_undistort * mult, 0.9, 0.999,
            1e-8, t);
  for (size_t i = 0; i < undist_frames.size(); ++i) {
    UndistortParams& u = state.undistort[size_t(undist_frames[i])];
    u.s_raw = u_flat[Eigen::Index(2 * i)];
    u.k = u_flat[Eigen::Index(2 * i) + 1];
  }

  EpochRecord rec;
  rec.epoch = state.epoch;
  rec.l_rgb = l_rgb;
  rec.l_depth = l_depth;
  rec.l_gpc = l_gpc;
  rec.l_reproj = l_reproj;
  rec.total = total;
  rec.strategy = strat;
  Trajectory est = state_trajectory(state, trainable);
  Trajectory ref = dataset_trajectory(ds, trainable);
  rec.ate = ate(est, ref, false);
  RpeResult rp = rpe(est, ref, 1);
  rec.rpe_t = rp.rpe_t;
  rec.rpe_r = rp.rpe_r;

  state.epoch += 1;
  return rec;
}

TrainResult run_training(const TrainConfig& cfg, const Dataset& ds, AnchorPolicy anchor,
                         const std::string& out_dir, const TrainState* resume) {
  cfg.validate();
  if (ds.n_frames() == 0) throw TrainerError("run_training: empty dataset");

  TrainResult result;
  std::vector<int> trainable = cfg.trainable_frames(ds.n_frames());

  if (resume) {
    result.state = *resume;
  } else {
    TrainState& st = result.state;
    st.seed = cfg.seed;
    st.field = FieldParams::init(cfg.field, Rng::mix(cfg.seed, 0xF1E1D));
    st.poses = ds.gt_poses;
    if (cfg.perturb_rot_deg > 0 || cfg.perturb_trans > 0) {
      Rng prng(Rng::mix(cfg.seed, 0xBE27));
      std::vector<PoseSE3> all = perturb_poses(ds.gt_poses, cfg.perturb_rot_deg,
                                               cfg.perturb_trans, prng);
      for (int f : trainable) st.poses[size_t(f)] = all[size_t(f)];
      if (anchor == AnchorPolicy::FixFrame0)
        st.poses[size_t(trainable.front())] = ds.gt_poses[size_t(trainable.front())];
    }
    st.undistort.assign(size_t(ds.n_frames()), UndistortParams::from_s(1.0, 0.0));
    st.initial_poses = st.poses;
    st.epoch = 0;
  }

  result.initial_ate = ate(state_trajectory(result.state, trainable),
                           dataset_trajectory(ds, trainable), false);

  if (!out_dir.empty()) fs::create_directories(out_dir);

  for (int e = result.state.epoch; e < cfg.epochs; ++e) {
    Rng rng(Rng::mix(cfg.seed, 0xE0, uint64_t(e)));
    EpochRecord rec;
    try {
      rec = train_epoch(result.state, ds, cfg, rng, anchor);
    } catch (const LossError& err) {
      throw TrainerError(std::string(err.what()) + " (epoch " + std::to_string(e) +
                         ", seed " + std::to_string(cfg.seed) + ")");
    }
    result.log.push_back(rec);
    if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
        (e + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(out_dir + "/checkpoint.bin", result.state);
  }
  if (!out_dir.empty()) save_checkpoint(out_dir + "/checkpoint.bin", result.state);
  return result;
}

// ---- checkpoint io ----------------------------------------------------------

namespace {

void put_u64(std::ofstream& f, uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }
void put_i32(std::ofstream& f, int32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void put_doubles(std::ofstream& f, const double* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), std::streamsize(n * sizeof(double)));
}
uint64_t get_u64(std::ifstream& f) {
  uint64_t v;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
int32_t get_i32(std::ifstream& f) {
  int32_t v;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
void get_doubles(std::ifstream& f, double* p, size_t n) {
  f.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(double)));
}

void put_moments(std::ofstream& f, const AdamMoments& m) {
  put_u64(f, uint64_t(m.m.size()));
  put_doubles(f, m.m.data(), size_t(m.m.size()));
  put_doubles(f, m.v.data(), size_t(m.v.size()));
}

AdamMoments get_moments(std::ifstream& f) {
  AdamMoments m;
  uint64_t n = get_u64(f);
  m.m.resize(Eigen::Index(n));
  m.v.resize(Eigen::Index(n));
  get_doubles(f, m.m.data(), n);
  get_doubles(f, m.v.data(), n);
  return m;
}

constexpr uint64_t kCheckpointMagic = 0x44474e46434b5031ULL;  // "DGNFCKP1"

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw TrainerError("cannot open for write: " + tmp);
    put_u64(f, kCheckpointMagic);
    put_i32(f, state.epoch);
    put_u64(f, state.seed);
    put_i32(f, state.field.cfg.hidden_layers);
    put_i32(f, state.field.cfg.hidden_width);
    put_i32(f, state.field.cfg.l_pos);
    put_i32(f, state.field.cfg.l_dir);
    put_i32(f, state.field.cfg.use_view_dirs ? 1 : 0);
    put_u64(f, state.field.weights.size());
    for (size_t i = 0; i < state.field.weights.size(); ++i) {
      const auto& w = state.field.weights[i];
      put_u64(f, uint64_t(w.rows()));
      put_u64(f, uint64_t(w.cols()));
      put_doubles(f, w.data(), size_t(w.size()));
      put_doubles(f, state.field.biases[i].data(), size_t(state.field.biases[i].size()));
    }
    put_u64(f, state.poses.size());
    for (const auto& p : state.poses) {
      put_doubles(f, p.omega.data(), 3);
      put_doubles(f, p.t.data(), 3);
    }
    put_u64(f, state.initial_poses.size());
    for (const auto& p : state.initial_poses) {
      put_doubles(f, p.omega.data(), 3);
      put_doubles(f, p.t.data(), 3);
    }
    put_u64(f, state.undistort.size());
    for (const auto& u : state.undistort) {
      double d[2] = {u.s_raw, u.k};
      put_doubles(f, d, 2);
    }
    put_moments(f, state.field_mom);
    put_moments(f, state.pose_mom);
    put_moments(f, state.undistort_mom);
    if (!f) throw TrainerError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TrainerError("cannot open: " + path);
  if (get_u64(f) != kCheckpointMagic) throw TrainerError("not a checkpoint: " + path);
  TrainState st;
  st.epoch = get_i32(f);
  st.seed = get_u64(f);
  st.field.cfg.hidden_layers = get_i32(f);
  st.field.cfg.hidden_width = get_i32(f);
  st.field.cfg.l_pos = get_i32(f);
  st.field.cfg.l_dir = get_i32(f);
  st.field.cfg.use_view_dirs = get_i32(f) != 0;
  uint64_t n_layers = get_u64(f);
  for (uint64_t i = 0; i < n_layers; ++i) {
    uint64_t rows = get_u64(f), cols = get_u64(f);
    Eigen::MatrixXd w;
    w.resize(Eigen::Index(rows), Eigen::Index(cols));
    get_doubles(f, w.data(), rows * cols);
    Eigen::VectorXd b;
    b.resize(Eigen::Index(cols));
    get_doubles(f, b.data(), cols);
    st.field.weights.push_back(std::move(w));
    st.field.biases.push_back(std::move(b));
  }
  uint64_t n_poses = get_u64(f);
  for (uint64_t i = 0; i < n_poses; ++i) {
    PoseSE3 p;
    get_doubles(f, p.omega.data(), 3);
    get_doubles(f, p.t.data(), 3);
    st.poses.push_back(p);
  }
  uint64_t n_init = get_u64(f);
  for (uint64_t i = 0; i < n_init; ++i) {
    PoseSE3 p;
    get_doubles(f, p.omega.data(), 3);
    get_doubles(f, p.t.data(), 3);
    st.initial_poses.push_back(p);
  }
  uint64_t n_und = get_u64(f);
  for (uint64_t i = 0; i < n_und; ++i) {
    double d[2];
    get_doubles(f, d, 2);
    UndistortParams u;
    u.s_raw = d[0];
    u.k = d[1];
    st.undistort.push_back(u);
  }
  st.field_mom = get_moments(f);
  st.pose_mom = get_moments(f);
  st.undistort_mom = get_moments(f);
  if (!f) throw TrainerError("truncated checkpoint: " + path);
  return st;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochRecord>& log) {
  std::ofstream f(path);
  if (!f) throw TrainerError("cannot open for write: " + path);
  f << "epoch,l_rgb,l_depth,l_gpc,l_reproj,total,strategy,ate,rpe_t,rpe_r\n";
  char line[512];
  for (const auto& r : log) {
    std::snprintf(line, sizeof(line),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%.17g,%.17g,%.17g\n", r.epoch,
                  r.l_rgb, r.l_depth, r.l_gpc, r.l_reproj, r.total,
                  strategy_name(r.strategy), r.ate, r.rpe_t, r.rpe_r);
    f << line;
  }
}

std::vector<EpochRecord> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TrainerError("cannot open: " + path);
  std::string header;
  std::getline(f, header);
  std::vector<EpochRecord> log;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    char strat[64];
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%63[^,],%lf,%lf,%lf",
                    &r.epoch, &r.l_rgb, &r.l_depth, &r.l_gpc, &r.l_reproj, &r.total,
                    strat, &r.ate, &r.rpe_t, &r.rpe_r) != 10)
      throw TrainerError("bad metrics row: " + line);
    r.strategy = strategy_from_name(strat);
    log.push_back(r);
  }
  return log;
}

Image render_frame(const FieldParams& field, const CameraIntrinsics& K,
                   const PoseSE3& pose, double near, double far, int n_samples) {
  Image img(K.width, K.height);
  SamplingConfig cfg;
  cfg.n_samples = n_samples;
  cfg.near = near;
  cfg.far = far;
  cfg.strategy = Strategy::Uniform;
  cfg.stratified_jitter = false;
  Rng rng(0);
  for (int y = 0; y < K.height; ++y) {
    // one tape per row keeps memory flat
    ad::Tape tape;
    FieldVars fv = field_leaves(tape, field, false);
    std::vector<RayVars> ray_vars;
    std::vector<RaySampleSet> ray_samples;
    for (int x = 0; x < K.width; ++x) {
      Ray ray = generate_ray(K, pose, x, y);
      RayVars rv;
      rv.origin = tape.constant(Eigen::MatrixXd(ray.origin.transpose()));
      rv.dir = tape.constant(Eigen::MatrixXd(ray.dir.transpose()));
      ray_vars.push_back(rv);
      ray_samples.push_back(sample_uniform(cfg, rng));
    }
    std::vector<RenderedPixelVars> pixels =
        render_rays_on_tape(tape, fv, ray_vars, ray_samples);
    for (int x = 0; x < K.width; ++x)
      img.set_pixel(x, y, tape.val(pixels[size_t(x)].color).row(0));
  }
  return img;
}

}  // namespace dgnerf
