#include "dgnerf/run_commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dgnerf/log.hpp"

namespace dgnerf {

namespace fs = std::filesystem;

namespace {

void quantize_to_8bit(Image& img) {
  for (double& v : img.px) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

TrajectoryKind trajectory_from_name(const std::string& name) {
  if (name == "orbit") return TrajectoryKind::Orbit;
  if (name == "forward_facing") return TrajectoryKind::ForwardFacing;
  throw ConfigError("unknown trajectory kind: " + name);
}

}  // namespace

Dataset generate_dataset(const RunConfig& cfg) {
  Dataset ds;
  ds.K = default_intrinsics(cfg.width, cfg.height);
  ds.near = cfg.near;
  ds.far = cfg.far;
  ds.seed = cfg.seed;
  ds.prior_cfg = cfg.prior;
  ds.prior_cfg.rng_seed = Rng::mix(cfg.seed, 0xD072);

  AnalyticScene scene = default_desk_scene();
  scene.near = cfg.near;
  scene.far = cfg.far;
  ds.gt_poses = make_trajectory(trajectory_from_name(cfg.trajectory), cfg.n_frames,
                                cfg.radius);
  for (int i = 0; i < cfg.n_frames; ++i) {
    auto [img, depth] = render_ground_truth(scene, ds.K, ds.gt_poses[size_t(i)]);
    quantize_to_8bit(img);
    ds.images.push_back(std::move(img));
    ds.priors.push_back(make_coarse_depth(depth, ds.prior_cfg, i));
    ds.depth_gt.push_back(std::move(depth));
  }
  return ds;
}

void cmd_gen(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.ini");
  Dataset ds = generate_dataset(cfg);
  save_dataset(out_dir, ds);
  log::info("gen: wrote %d frames to %s", ds.n_frames(), out_dir.c_str());
}

TrainResult cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.ini");
  Dataset ds = load_dataset(dataset_dir);
  TrainConfig tcfg = cfg.train_config();
  tcfg.sampling.near = ds.near;
  tcfg.sampling.far = ds.far;
  TrainResult result = run_training(tcfg, ds, AnchorPolicy::FixFrame0, out_dir);
  write_metrics_csv(out_dir + "/metrics.csv", result.log);
  {
    std::ofstream f(out_dir + "/initial_ate.txt");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g\n", result.initial_ate);
    f << buf;
  }
  log::info("train: %d epochs done, final ate %.5f", int(result.log.size()),
            result.log.empty() ? 0.0 : result.log.back().ate);
  return result;
}

namespace {

PoseSE3 interpolate_pose(const PoseSE3& a, const PoseSE3& b, double f) {
  Eigen::Matrix3d Ra = a.rotation(), Rb = b.rotation();
  Eigen::Vector3d w = so3_log(Ra.transpose() * Rb);
  PoseSE3 out;
  out.omega = so3_log(Ra * so3_exp(f * w));
  out.t = (1.0 - f) * a.t + f * b.t;
  return out;
}

PoseSE3 holdout_pose(const RunConfig& cfg, const TrainState& state, const Dataset& ds,
                     const std::vector<int>& trainable, int frame) {
  if (cfg.holdout_poses == "gt") return ds.gt_poses[size_t(frame)];
  if (cfg.holdout_poses != "interp")
    throw ConfigError("holdout_poses must be gt or interp");
  // geodesic interpolation between the nearest trained neighbors; at the
  // sequence ends this extrapolates from the last trained pair
  int lo = -1, hi = -1;
  for (int f : trainable) {
    if (f < frame) lo = f;
    if (f > frame && hi < 0) hi = f;
  }
  if (lo < 0) {
    lo = trainable[0];
    hi = trainable[1];
  } else if (hi < 0) {
    hi = lo;
    lo = trainable[trainable.size() - 2];
  }
  double f = double(frame - lo) / double(hi - lo);
  return interpolate_pose(state.poses[size_t(lo)], state.poses[size_t(hi)], f);
}

}  // namespace

EvalReport evaluate(const RunConfig& cfg, const TrainState& state, const Dataset& ds) {
  TrainConfig tcfg = cfg.train_config();
  std::vector<int> trainable = tcfg.trainable_frames(ds.n_frames());
  std::vector<int> holdout = tcfg.holdout_frames(ds.n_frames());

  double psnr_acc = 0, ssim_acc = 0;
  int n_eval = 0;
  for (int frame : holdout) {
    PoseSE3 pose = holdout_pose(cfg, state, ds, trainable, frame);
    Image rendered = render_frame(state.field, ds.K, pose, ds.near, ds.far,
                                  cfg.eval_samples);
    psnr_acc += psnr(rendered, ds.images[size_t(frame)]);
    ssim_acc += ssim(rendered, ds.images[size_t(frame)]);
    ++n_eval;
  }
  if (n_eval == 0) log::warn("eval: no held-out frames at this dataset size");

  Trajectory est = state_trajectory(state, trainable);
  Trajectory ref = dataset_trajectory(ds, trainable);
  RpeResult rp = rpe(est, ref, 1);

  EvalReport report;
  report.rows = {{"psnr", n_eval ? psnr_acc / n_eval : 0.0},
                 {"ssim", n_eval ? ssim_acc / n_eval : 0.0},
                 {"ate_se3", ate(est, ref, false)},
                 {"ate_sim3", ate(est, ref, true)},
                 {"rpe_t", rp.rpe_t},
                 {"rpe_r", rp.rpe_r},
                 {"n_holdout", double(n_eval)}};
  return report;
}

EvalReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& dataset_dir, const std::string& out_dir) {
  Dataset ds = load_dataset(dataset_dir);
  TrainState state = load_checkpoint(checkpoint_path);
  fs::create_directories(out_dir);

  TrainConfig tcfg = cfg.train_config();
  std::vector<int> trainable = tcfg.trainable_frames(ds.n_frames());
  for (int frame : tcfg.holdout_frames(ds.n_frames())) {
    PoseSE3 pose = holdout_pose(cfg, state, ds, trainable, frame);
    Image rendered = render_frame(state.field, ds.K, pose, ds.near, ds.far,
                                  cfg.eval_samples);
    char name[64];
    std::snprintf(name, sizeof(name), "/render_%03d.ppm", frame);
    save_ppm(out_dir + name, rendered);
  }

  EvalReport report = evaluate(cfg, state, ds);
  report.write_csv(out_dir + "/eval_report.csv");
  std::ofstream f(out_dir + "/summary.txt");
  f << report.text_summary();
  log::info("eval: wrote report to %s", out_dir.c_str());
  return report;
}

std::vector<CompareRow> cmd_compare(const std::vector<std::string>& run_dirs,
                                    double ate_threshold, const std::string& out_csv) {
  if (run_dirs.size() < 2)
    throw ConfigError("compare: need at least two run directories");
  std::vector<CompareRow> rows;
  for (const std::string& dir : run_dirs) {
    CompareRow row;
    row.run = fs::path(dir).filename().string();
    if (row.run.empty()) row.run = dir;
    RunConfig rc = RunConfig::load(dir + "/config.ini");
    row.strategy = rc.strategy;
    row.constraint = rc.constraint;
    auto log_rows = read_metrics_csv(dir + "/metrics.csv");
    if (log_rows.empty()) throw ConfigError("compare: empty metrics in " + dir);
    row.ate = log_rows.back().ate;
    row.rpe_t = log_rows.back().rpe_t;
    row.rpe_r = log_rows.back().rpe_r;
    if (ate_threshold > 0) {
      for (const auto& r : log_rows)
        if (r.ate <= ate_threshold) {
          row.epochs_to_threshold = r.epoch;
          break;
        }
    }
    std::ifstream er(dir + "/eval_report.csv");
    if (!er) throw ConfigError("compare: missing eval_report.csv in " + dir);
    std::string line;
    std::getline(er, line);  // header
    while (std::getline(er, line)) {
      size_t comma = line.find(',');
      if (comma == std::string::npos) continue;
      std::string key = line.substr(0, comma);
      double value = std::stod(line.substr(comma + 1));
      if (key == "psnr") row.psnr = value;
      if (key == "ssim") row.ssim = value;
    }
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(),
            [](const CompareRow& a, const CompareRow& b) { return a.ate < b.ate; });

  if (!out_csv.empty()) {
    std::ofstream f(out_csv);
    if (!f) throw ConfigError("cannot open for write: " + out_csv);
    f << "run,strategy,constraint,psnr,ssim,rpe_t,rpe_r,ate,epochs_to_threshold\n";
    char line[512];
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%s,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                    r.run.c_str(), r.strategy.c_str(), r.constraint.c_str(), r.psnr,
                    r.ssim, r.rpe_t, r.rpe_r, r.ate, r.epochs_to_threshold);
      f << line;
    }
  }
  return rows;
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof(line), "%-20s %-15s %-9s %8s %7s %8s %8s %9s %8s\n", "run",
                "strategy", "constr", "psnr", "ssim", "rpe_t", "rpe_r", "ate",
                "ep_thr");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%-20s %-15s %-9s %8.3f %7.4f %8.5f %8.4f %9.6f %8d\n",
                  r.run.c_str(), r.strategy.c_str(), r.constraint.c_str(), r.psnr,
                  r.ssim, r.rpe_t, r.rpe_r, r.ate, r.epochs_to_threshold);
    out += line;
  }
  return out;
}

}  // namespace dgnerf
