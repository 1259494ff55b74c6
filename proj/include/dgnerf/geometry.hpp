#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgnerf/autodiff.hpp"
#include "dgnerf/image.hpp"

namespace dgnerf {

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

// Camera-to-world pose: R = so3_exp(omega), camera center = t.
struct PoseSE3 {
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Matrix3d rotation() const;
};

struct PointCloud {
  Eigen::MatrixX3d points;             // world or camera frame
  std::vector<Eigen::Vector3d> colors; // optional, parallel to points
  std::vector<int> pixel_ids;          // optional source pixel index (y*w+x)
  int frame_id = -1;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;  // unit
};

struct Projection {
  double u = 0, v = 0, depth = 0;
  bool valid = false;
};

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& R);  // throws at angle pi

std::pair<Eigen::Matrix3d, Eigen::Vector3d> se3_exp(const Eigen::Vector3d& omega,
                                                    const Eigen::Vector3d& t);
std::pair<Eigen::Vector3d, Eigen::Vector3d> se3_log(const Eigen::Matrix3d& R,
                                                    const Eigen::Vector3d& t);

// Pixel centers sit at half-integer offsets: direction follows
// R * [(u+0.5-cx)/fx, (v+0.5-cy)/fy, 1], normalized. u, v may be fractional.
Ray generate_ray(const CameraIntrinsics& K, const PoseSE3& pose, double u, double v);

// Depth is distance along the ray, not z-depth. Zero-depth pixels are
// skipped; an all-zero map is an error.
PointCloud backproject(const DepthMap& depth, const CameraIntrinsics& K,
                       const PoseSE3& pose, const Image* colors = nullptr,
                       int stride = 1, double min_depth = 0.0);

Projection project(const CameraIntrinsics& K, const PoseSE3& pose,
                   const Eigen::Vector3d& world_point);

// (R^n_m, t^n_m): maps m-frame camera coordinates into n-frame camera
// coordinates.
std::pair<Eigen::Matrix3d, Eigen::Vector3d> relative_pose(const PoseSE3& pose_m,
                                                          const PoseSE3& pose_n);

Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& R);  // (x,y,z,w)

// Trajectory file: one line per frame, "frame_index tx ty tz qx qy qz qw".
void save_trajectory(const std::string& path,
                     const std::vector<std::pair<int, PoseSE3>>& traj);
std::vector<std::pair<int, PoseSE3>> load_trajectory(const std::string& path);

// --- tape-backed variants (differentiable w.r.t. pose parameters) ---

struct PoseVars {
  ad::Var omega;  // 3x1
  ad::Var t;      // 3x1
};

// Rodrigues rotation as a 3x3 Var; small angles switch to a series in
// theta^2 so there is no sqrt at zero. The transpose comes cheap as
// I - A K + B K^2, which several losses need for frame changes.
struct RotationVars {
  ad::Var R;
  ad::Var Rt;
};

RotationVars rotation_pair_on_tape(ad::Tape& tape, ad::Var omega);
ad::Var rotation_on_tape(ad::Tape& tape, ad::Var omega);

// 3x1 column Var rearranged as a 1x3 row via constant selectors.
ad::Var as_row3(ad::Tape& tape, ad::Var col3);

PoseVars pose_leaves(ad::Tape& tape, const PoseSE3& pose, bool trainable);

struct RayVars {
  ad::Var origin;  // 1x3
  ad::Var dir;     // 1x3, unit
};

RayVars generate_ray_on_tape(ad::Tape& tape, const CameraIntrinsics& K,
                             const PoseVars& pose, ad::Var rotation, double u,
                             double v);

}  // namespace dgnerf
