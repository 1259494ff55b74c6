#pragma once

#include <Eigen/Core>
#include <vector>

#include "dgnerf/autodiff.hpp"
#include "dgnerf/geometry.hpp"
#include "dgnerf/image.hpp"

namespace dgnerf {

struct LossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-frame depth undistortion, s kept positive through a softplus
// reparameterization of s_raw.
struct UndistortParams {
  double s_raw = 0.0;
  double k = 0.0;

  double s() const;
  static UndistortParams from_s(double s, double k = 0.0);
};

struct LossWeights {
  double lambda1 = 0.04;  // self-depth
  double lambda2 = 1.0;   // point constraint
  double lambda3 = 1.0;   // reprojection
};

struct GpcConfig {
  double sigma_pc = 1.0;
  bool bidirectional = true;

  void validate() const;
};

// Mean squared error over channels and pixels.
ad::Var loss_rgb_on_tape(ad::Tape& tape, ad::Var rendered,
                         const Eigen::MatrixX3d& target);
double loss_rgb(const Eigen::MatrixX3d& rendered, const Eigen::MatrixX3d& target);

// |s * prior + k - d_nerf| averaged over masked pixels (L1 by default, MSE
// behind the flag). Empty mask logs a warning and contributes 0.
ad::Var loss_self_depth_on_tape(ad::Tape& tape, ad::Var d_nerf,
                                const Eigen::VectorXd& d_prior, ad::Var s, ad::Var k,
                                const std::vector<uint8_t>& mask, bool l1 = true);
double loss_self_depth(const Eigen::VectorXd& d_nerf, const Eigen::VectorXd& d_prior,
                       const UndistortParams& u, const std::vector<uint8_t>& mask,
                       bool l1 = true);

double gaussian_weight(const Eigen::Vector3d& p_i, const Eigen::Vector3d& p_j,
                       double sigma_pc);

// Nearest-neighbor indices into `to` for each row of `from`; the grid hash
// is the production path and the brute force scan is the test oracle.
std::vector<int> nearest_neighbors_grid(const Eigen::MatrixX3d& from,
                                        const Eigen::MatrixX3d& to);
std::vector<int> nearest_neighbors_brute(const Eigen::MatrixX3d& from,
                                         const Eigen::MatrixX3d& to);

// Gaussian-weighted nearest-neighbor distance, averaged per point and over
// both directions when bidirectional. Correspondences are held fixed per
// evaluation; gradients flow through both the weight and the distance.
ad::Var loss_gpc_on_tape(ad::Tape& tape, ad::Var cloud_m, ad::Var cloud_n,
                         const GpcConfig& cfg);
double loss_gpc(const PointCloud& cloud_m, const PointCloud& cloud_n,
                const GpcConfig& cfg);

// Unweighted symmetric mean nearest-neighbor distance.
ad::Var loss_chamfer_on_tape(ad::Tape& tape, ad::Var cloud_m, ad::Var cloud_n);
double loss_chamfer(const PointCloud& cloud_m, const PointCloud& cloud_n);

struct ReprojTerm {
  ad::Var loss;      // mean |I_n(warp(p)) - I_m(p)| over valid points
  int n_valid = 0;   // points in front of the camera and inside image_n
};

// cloud_m: world points from frame m (n x 3 Var); colors_m: image_m values
// at the source pixels. Warps into frame n and samples image_n bilinearly.
// rot_n is the camera-to-world rotation of frame n: world rows map into the
// n-th camera as (x - t_n)^T R_n.
ReprojTerm loss_reproj_on_tape(ad::Tape& tape, ad::Var cloud_m,
                               const Eigen::MatrixX3d& colors_m, const Image& image_n,
                               const CameraIntrinsics& K, ad::Var rot_n, ad::Var t_n);

double loss_reproj(const Image& image_m, const Image& image_n, const DepthMap& depth_m,
                   const CameraIntrinsics& K, const PoseSE3& pose_m,
                   const PoseSE3& pose_n, int stride = 1);

// L_rgb + l1*L_self_depth + l2*L_gpc + l3*L_reproj; non-finite components
// fail loudly with the component name.
ad::Var total_loss_on_tape(ad::Tape& tape, ad::Var rgb, ad::Var self_depth,
                           ad::Var gpc, ad::Var reproj, const LossWeights& w);
double total_loss(double rgb, double self_depth, double gpc, double reproj,
                  const LossWeights& w);

// World-frame cloud from a prior depth map with the undistortion applied on
// tape: points = t + (s*prior + k) * unit(R * d_cam). Pixels whose
// undistorted prior is <= min_depth are dropped.
struct TapeCloud {
  ad::Var points;  // n x 3
  std::vector<int> pixel_ids;
  Eigen::MatrixX3d colors;  // source image values, when an image is given
};

TapeCloud build_prior_cloud_on_tape(ad::Tape& tape, const CameraIntrinsics& K,
                                    ad::Var rot_transpose, ad::Var t_col,
                                    const DepthMap& prior, ad::Var s, ad::Var k,
                                    int stride, double min_depth,
                                    const Image* image = nullptr);

}  // namespace dgnerf
