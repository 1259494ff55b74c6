#pragma once

#include <string>

#include "dgnerf/scenegen.hpp"
#include "dgnerf/trainer.hpp"

namespace dgnerf {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat sectioned key=value configuration. Every field has a default; the
// resolved config is snapshotted into each run directory before any work.
struct RunConfig {
  // [scene]
  int n_frames = 9;
  int width = 48;
  int height = 48;
  std::string trajectory = "forward_facing";  // forward_facing | orbit
  double radius = 2.0;
  double near = 0.1;
  double far = 4.0;

  // [prior]
  PriorDepthConfig prior;

  // [sampling]
  int n_samples = 128;
  std::string strategy = "coarse_to_fine";
  int t_s = 0;  // 0: epochs/12
  bool stratified_jitter = true;
  bool iid_u = false;
  double sigma_bar = 0.1;

  // [train]
  int epochs = 3000;
  int rays_per_batch = 1024;
  double lr_field = 1e-3;
  double lr_pose = 5e-4;
  double lr_undistort = 5e-4;
  double phase1 = 0.5;
  double phase2 = 0.8;
  std::string constraint = "gpc";
  int checkpoint_every = 500;
  double perturb_rot_deg = 5.0;
  double perturb_trans = 0.1;
  bool depth_loss_l1 = true;
  double opacity_mask_threshold = 0.5;
  int cloud_stride = 0;
  int hidden_layers = 4;
  int hidden_width = 64;
  int l_pos = 6;
  int l_dir = 4;
  bool use_view_dirs = false;  // Lambertian desk scenes
  int holdout_every = 8;
  double pose_tether = 1e-3;

  // [loss]
  double lambda1 = 0.04;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double sigma_pc = 1.0;
  bool bidirectional_gpc = true;

  // [eval]
  int eval_samples = 128;
  std::string holdout_poses = "gt";  // gt | interp
  bool with_scale = false;

  // [run]
  uint64_t seed = 0;

  TrainConfig train_config() const;

  void save(const std::string& path) const;
  static RunConfig load(const std::string& path);
  static RunConfig defaults() { return RunConfig{}; }
};

}  // namespace dgnerf
