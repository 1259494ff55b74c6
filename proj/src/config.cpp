#include "dgnerf/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dgnerf {

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.rays_per_batch = rays_per_batch;
  t.lr_field = lr_field;
  t.lr_pose = lr_pose;
  t.lr_undistort = lr_undistort;
  t.t_s = t_s;
  t.phase1 = phase1;
  t.phase2 = phase2;
  t.weights = {lambda1, lambda2, lambda3};
  t.sampling.n_samples = n_samples;
  t.sampling.strategy = strategy_from_name(strategy);
  t.sampling.t_s = t_s > 0 ? t_s : std::max(1, epochs / 12);
  t.sampling.near = near;
  t.sampling.far = far;
  t.sampling.stratified_jitter = stratified_jitter;
  t.sampling.iid_u = iid_u;
  t.sampling.rng_seed = seed;
  t.gpc.sigma_pc = sigma_pc;
  t.gpc.bidirectional = bidirectional_gpc;
  t.constraint = constraint_from_name(constraint);
  t.seed = seed;
  t.checkpoint_every = checkpoint_every;
  t.perturb_rot_deg = perturb_rot_deg;
  t.perturb_trans = perturb_trans;
  t.depth_loss_l1 = depth_loss_l1;
  t.cloud_stride = cloud_stride;
  t.opacity_mask_threshold = opacity_mask_threshold;
  t.sigma_bar = sigma_bar;
  t.field.hidden_layers = hidden_layers;
  t.field.hidden_width = hidden_width;
  t.field.l_pos = l_pos;
  t.field.l_dir = l_dir;
  t.field.use_view_dirs = use_view_dirs;
  t.holdout_every = holdout_every;
  t.pose_tether = pose_tether;
  return t;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct KvReader {
  std::map<std::string, std::string> kv;  // "section.key" -> value

  bool has(const std::string& k) const { return kv.count(k) > 0; }
  void need_known(const std::string& k) const {
    if (!has(k)) throw ConfigError("unknown config key: " + k);
  }

  template <typename T>
  void get(const std::string& k, T& out) const;
};

template <>
void KvReader::get(const std::string& k, double& out) const {
  auto it = kv.find(k);
  if (it == kv.end()) return;
  try {
    out = std::stod(it->second);
  } catch (...) {
    throw ConfigError("bad number for " + k + ": " + it->second);
  }
}

template <>
void KvReader::get(const std::string& k, int& out) const {
  auto it = kv.find(k);
  if (it == kv.end()) return;
  try {
    out = std::stoi(it->second);
  } catch (...) {
    throw ConfigError("bad integer for " + k + ": " + it->second);
  }
}

template <>
void KvReader::get(const std::string& k, uint64_t& out) const {
  auto it = kv.find(k);
  if (it == kv.end()) return;
  try {
    out = std::stoull(it->second);
  } catch (...) {
    throw ConfigError("bad integer for " + k + ": " + it->second);
  }
}

template <>
void KvReader::get(const std::string& k, bool& out) const {
  auto it = kv.find(k);
  if (it == kv.end()) return;
  if (it->second == "true" || it->second == "1")
    out = true;
  else if (it->second == "false" || it->second == "0")
    out = false;
  else
    throw ConfigError("bad boolean for " + k + ": " + it->second);
}

template <>
void KvReader::get(const std::string& k, std::string& out) const {
  auto it = kv.find(k);
  if (it != kv.end()) out = it->second;
}

}  // namespace

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for write: " + path);
  f << "[scene]\n";
  f << "n_frames = " << n_frames << "\n";
  f << "width = " << width << "\n";
  f << "height = " << height << "\n";
  f << "trajectory = " << trajectory << "\n";
  f << "radius = " << fmt_double(radius) << "\n";
  f << "near = " << fmt_double(near) << "\n";
  f << "far = " << fmt_double(far) << "\n";
  f << "\n[prior]\n";
  f << "s_true = " << fmt_double(prior.s_true) << "\n";
  f << "k_true = " << fmt_double(prior.k_true) << "\n";
  f << "noise_std = " << fmt_double(prior.noise_std) << "\n";
  f << "corruption_fraction = " << fmt_double(prior.corruption_fraction) << "\n";
  f << "corruption_patch = " << prior.corruption_patch << "\n";
  f << "\n[sampling]\n";
  f << "n_samples = " << n_samples << "\n";
  f << "strategy = " << strategy << "\n";
  f << "t_s = " << t_s << "\n";
  f << "stratified_jitter = " << (stratified_jitter ? "true" : "false") << "\n";
  f << "iid_u = " << (iid_u ? "true" : "false") << "\n";
  f << "sigma_bar = " << fmt_double(sigma_bar) << "\n";
  f << "\n[train]\n";
  f << "epochs = " << epochs << "\n";
  f << "rays_per_batch = " << rays_per_batch << "\n";
  f << "lr_field = " << fmt_double(lr_field) << "\n";
  f << "lr_pose = " << fmt_double(lr_pose) << "\n";
  f << "lr_undistort = " << fmt_double(lr_undistort) << "\n";
  f << "phase1 = " << fmt_double(phase1) << "\n";
  f << "phase2 = " << fmt_double(phase2) << "\n";
  f << "constraint = " << constraint << "\n";
  f << "checkpoint_every = " << checkpoint_every << "\n";
  f << "perturb_rot_deg = " << fmt_double(perturb_rot_deg) << "\n";
  f << "perturb_trans = " << fmt_double(perturb_trans) << "\n";
  f << "depth_loss_l1 = " << (depth_loss_l1 ? "true" : "false") << "\n";
  f << "opacity_mask_threshold = " << fmt_double(opacity_mask_threshold) << "\n";
  f << "cloud_stride = " << cloud_stride << "\n";
  f << "hidden_layers = " << hidden_layers << "\n";
  f << "hidden_width = " << hidden_width << "\n";
  f << "l_pos = " << l_pos << "\n";
  f << "l_dir = " << l_dir << "\n";
  f << "use_view_dirs = " << (use_view_dirs ? "true" : "false") << "\n";
  f << "holdout_every = " << holdout_every << "\n";
  f << "pose_tether = " << fmt_double(pose_tether) << "\n";
  f << "\n[loss]\n";
  f << "lambda1 = " << fmt_double(lambda1) << "\n";
  f << "lambda2 = " << fmt_double(lambda2) << "\n";
  f << "lambda3 = " << fmt_double(lambda3) << "\n";
  f << "sigma_pc = " << fmt_double(sigma_pc) << "\n";
  f << "bidirectional_gpc = " << (bidirectional_gpc ? "true" : "false") << "\n";
  f << "\n[eval]\n";
  f << "eval_samples = " << eval_samples << "\n";
  f << "holdout_poses = " << holdout_poses << "\n";
  f << "with_scale = " << (with_scale ? "true" : "false") << "\n";
  f << "\n[run]\n";
  f << "seed = " << seed << "\n";
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  KvReader r;
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    r.kv[section + "." + key] = value;
  }

  RunConfig c;
  r.get("scene.n_frames", c.n_frames);
  r.get("scene.width", c.width);
  r.get("scene.height", c.height);
  r.get("scene.trajectory", c.trajectory);
  r.get("scene.radius", c.radius);
  r.get("scene.near", c.near);
  r.get("scene.far", c.far);
  r.get("prior.s_true", c.prior.s_true);
  r.get("prior.k_true", c.prior.k_true);
  r.get("prior.noise_std", c.prior.noise_std);
  r.get("prior.corruption_fraction", c.prior.corruption_fraction);
  r.get("prior.corruption_patch", c.prior.corruption_patch);
  r.get("sampling.n_samples", c.n_samples);
  r.get("sampling.strategy", c.strategy);
  r.get("sampling.t_s", c.t_s);
  r.get("sampling.stratified_jitter", c.stratified_jitter);
  r.get("sampling.iid_u", c.iid_u);
  r.get("sampling.sigma_bar", c.sigma_bar);
  r.get("train.epochs", c.epochs);
  r.get("train.rays_per_batch", c.rays_per_batch);
  r.get("train.lr_field", c.lr_field);
  r.get("train.lr_pose", c.lr_pose);
  r.get("train.lr_undistort", c.lr_undistort);
  r.get("train.phase1", c.phase1);
  r.get("train.phase2", c.phase2);
  r.get("train.constraint", c.constraint);
  r.get("train.checkpoint_every", c.checkpoint_every);
  r.get("train.perturb_rot_deg", c.perturb_rot_deg);
  r.get("train.perturb_trans", c.perturb_trans);
  r.get("train.depth_loss_l1", c.depth_loss_l1);
  r.get("train.opacity_mask_threshold", c.opacity_mask_threshold);
  r.get("train.cloud_stride", c.cloud_stride);
  r.get("train.hidden_layers", c.hidden_layers);
  r.get("train.hidden_width", c.hidden_width);
  r.get("train.l_pos", c.l_pos);
  r.get("train.l_dir", c.l_dir);
  r.get("train.use_view_dirs", c.use_view_dirs);
  r.get("train.holdout_every", c.holdout_every);
  r.get("train.pose_tether", c.pose_tether);
  r.get("loss.lambda1", c.lambda1);
  r.get("loss.lambda2", c.lambda2);
  r.get("loss.lambda3", c.lambda3);
  r.get("loss.sigma_pc", c.sigma_pc);
  r.get("loss.bidirectional_gpc", c.bidirectional_gpc);
  r.get("eval.eval_samples", c.eval_samples);
  r.get("eval.holdout_poses", c.holdout_poses);
  r.get("eval.with_scale", c.with_scale);
  r.get("run.seed", c.seed);
  return c;
}

}  // namespace dgnerf
