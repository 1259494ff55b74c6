#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "dgnerf/dataset_io.hpp"
#include "dgnerf/field.hpp"
#include "dgnerf/losses.hpp"
#include "dgnerf/metrics.hpp"
#include "dgnerf/sampling.hpp"

namespace dgnerf {

struct TrainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PointConstraint : uint8_t { Gpc, Chamfer, None };
enum class AnchorPolicy : uint8_t { FixFrame0, None };

const char* constraint_name(PointConstraint c);
PointConstraint constraint_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 3000;
  int rays_per_batch = 1024;
  double lr_field = 1e-3;
  double lr_pose = 5e-4;
  double lr_undistort = 5e-4;
  int t_s = 0;             // 0: proportional default epochs/12
  double phase1 = 0.5;     // phase boundaries, fractions of epochs
  double phase2 = 0.8;
  LossWeights weights;
  SamplingConfig sampling;
  GpcConfig gpc;
  PointConstraint constraint = PointConstraint::Gpc;
  uint64_t seed = 0;
  int checkpoint_every = 500;
  int n_chunks = 0;        // 0: one chunk per ~32 rays
  double perturb_rot_deg = 5.0;
  double perturb_trans = 0.1;
  bool depth_loss_l1 = true;
  int cloud_stride = 0;    // 0: smallest stride giving <= 1024 points
  double opacity_mask_threshold = 0.5;
  double sigma_bar = 0.1;  // truncated-normal std as a fraction of (far - near)
  // Joint pose/field/undistortion optimization has an exact global-scale
  // gauge (scaling about the anchor center with s_i, k_i co-scaling leaves
  // every loss unchanged). A weak quadratic pull of the non-anchor
  // translations toward their initial values pins that flat direction at
  // the initialization's scale without fighting real gradients.
  double pose_tether = 1e-3;
  FieldConfig field;
  int holdout_every = 8;   // every k-th frame held out (never frame 0)

  int resolved_t_s() const { return t_s > 0 ? t_s : std::max(1, epochs / 12); }
  int resolved_chunks() const {
    return n_chunks > 0 ? n_chunks : std::max(1, (rays_per_batch + 63) / 64);
  }
  int resolved_cloud_stride(int w, int h) const;
  std::vector<int> holdout_frames(int n_frames) const;
  std::vector<int> trainable_frames(int n_frames) const;
  void validate() const;
};

struct AdamMoments {
  Eigen::VectorXd m, v;
};

struct TrainState {
  FieldParams field;
  std::vector<PoseSE3> poses;
  std::vector<PoseSE3> initial_poses;  // gauge reference for the pose tether
  std::vector<UndistortParams> undistort;
  AdamMoments field_mom, pose_mom, undistort_mom;
  int epoch = 0;
  uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double l_rgb = 0, l_depth = 0, l_gpc = 0, l_reproj = 0, total = 0;
  Strategy strategy = Strategy::Uniform;
  double ate = 0, rpe_t = 0, rpe_r = 0;
};

// Loss-weight schedule: initial weights through phase 1, linear decay to
// zero across phase 2, all zero (RGB only) in phase 3.
LossWeights phase_weights(int epoch, const TrainConfig& cfg);

// Field learning-rate multiplier: 1 through phase 1, cosine decay to 0.1
// across phases 2 and 3.
double lr_multiplier(int epoch, const TrainConfig& cfg);

// Bias-corrected Adam update, in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamMoments& mom, double lr, double beta1, double beta2, double eps,
               int64_t t);

// One joint optimization step over a random ray batch plus the inter-frame
// point and reprojection constraints on consecutive trainable pairs.
EpochRecord train_epoch(TrainState& state, const Dataset& ds, const TrainConfig& cfg,
                        Rng& rng, AnchorPolicy anchor = AnchorPolicy::FixFrame0);

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> log;
  double initial_ate = 0.0;  // after pose perturbation, before any update
};

// Full loop: perturbed-pose initialization (anchor frame exempt), per-epoch
// records, optional periodic checkpoints into out_dir. Passing `resume`
// continues the run bit-exactly (the per-epoch RNG is derived from
// (seed, epoch), so no generator state needs carrying).
TrainResult run_training(const TrainConfig& cfg, const Dataset& ds,
                         AnchorPolicy anchor = AnchorPolicy::FixFrame0,
                         const std::string& out_dir = "",
                         const TrainState* resume = nullptr);

// Binary checkpoint (field, poses, undistortion, moments, epoch, seed).
// Writes are atomic: temp file then rename.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

// Per-epoch metrics log with the documented header.
void write_metrics_csv(const std::string& path, const std::vector<EpochRecord>& log);
std::vector<EpochRecord> read_metrics_csv(const std::string& path);

// Render one full frame with the trained field (uniform sampling, no
// jitter, deterministic).
Image render_frame(const FieldParams& field, const CameraIntrinsics& K,
                   const PoseSE3& pose, double near, double far, int n_samples);

// Trajectories over the listed frames (est from state, ref from dataset).
Trajectory state_trajectory(const TrainState& state, const std::vector<int>& frames);
Trajectory dataset_trajectory(const Dataset& ds, const std::vector<int>& frames);

}  // namespace dgnerf
