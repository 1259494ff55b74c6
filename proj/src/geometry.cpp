#include "dgnerf/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace dgnerf {

void CameraIntrinsics::validate() const {
  if (!(fx > 0 && fy > 0)) throw GeometryError("intrinsics: focal lengths must be > 0");
  if (!(cx > 0 && cx < width && cy > 0 && cy < height))
    throw GeometryError("intrinsics: principal point outside the image");
}

Eigen::Matrix3d PoseSE3::rotation() const { return so3_exp(omega); }

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  double theta2 = omega.squaredNorm();
  Eigen::Matrix3d K;
  K << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
  double A, B;
  if (theta2 < 1e-8) {
    A = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    B = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    double theta = std::sqrt(theta2);
    A = std::sin(theta) / theta;
    B = (1.0 - std::cos(theta)) / theta2;
  }
  return Eigen::Matrix3d::Identity() + A * K + B * K * K;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& R) {
  // quaternion route stays well conditioned all the way to the boundary
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  double vn = q.vec().norm();
  double angle = 2.0 * std::atan2(vn, q.w());
  if (angle > M_PI - 1e-9)
    throw GeometryError("so3_log: rotation angle at the chart boundary (pi)");
  if (vn < 1e-12) return 2.0 * q.vec();
  return (angle / vn) * q.vec();
}

std::pair<Eigen::Matrix3d, Eigen::Vector3d> se3_exp(const Eigen::Vector3d& omega,
                                                    const Eigen::Vector3d& t) {
  return {so3_exp(omega), t};
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> se3_log(const Eigen::Matrix3d& R,
                                                    const Eigen::Vector3d& t) {
  return {so3_log(R), t};
}

Ray generate_ray(const CameraIntrinsics& K, const PoseSE3& pose, double u, double v) {
  Eigen::Vector3d d_cam((u + 0.5 - K.cx) / K.fx, (v + 0.5 - K.cy) / K.fy, 1.0);
  Ray r;
  r.origin = pose.t;
  r.dir = (pose.rotation() * d_cam).normalized();
  return r;
}

PointCloud backproject(const DepthMap& depth, const CameraIntrinsics& K,
                       const PoseSE3& pose, const Image* colors, int stride,
                       double min_depth) {
  Eigen::Matrix3d R = pose.rotation();
  std::vector<Eigen::Vector3d> pts;
  PointCloud cloud;
  for (int y = 0; y < depth.height; y += stride) {
    for (int x = 0; x < depth.width; x += stride) {
      double d = depth.at(x, y);
      if (!(d > min_depth) || d <= 0.0) continue;
      Eigen::Vector3d d_cam((x + 0.5 - K.cx) / K.fx, (y + 0.5 - K.cy) / K.fy, 1.0);
      Eigen::Vector3d dir = (R * d_cam).normalized();
      pts.push_back(pose.t + d * dir);
      cloud.pixel_ids.push_back(y * depth.width + x);
      if (colors) cloud.colors.push_back(colors->pixel(x, y));
    }
  }
  if (pts.empty()) throw GeometryError("backproject: no valid depth pixels");
  cloud.points.resize(Eigen::Index(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) cloud.points.row(Eigen::Index(i)) = pts[i];
  return cloud;
}

Projection project(const CameraIntrinsics& K, const PoseSE3& pose,
                   const Eigen::Vector3d& world_point) {
  Eigen::Vector3d p_cam = pose.rotation().transpose() * (world_point - pose.t);
  Projection out;
  if (p_cam.z() <= 1e-9) return out;  // behind the camera: flagged, not thrown
  out.u = K.fx * p_cam.x() / p_cam.z() + K.cx - 0.5;
  out.v = K.fy * p_cam.y() / p_cam.z() + K.cy - 0.5;
  out.depth = p_cam.norm();  // distance along the ray
  out.valid = true;
  return out;
}

std::pair<Eigen::Matrix3d, Eigen::Vector3d> relative_pose(const PoseSE3& pose_m,
                                                          const PoseSE3& pose_n) {
  Eigen::Matrix3d Rm = pose_m.rotation(), Rn = pose_n.rotation();
  Eigen::Matrix3d R = Rn.transpose() * Rm;
  Eigen::Vector3d t = Rn.transpose() * (pose_m.t - pose_n.t);
  return {R, t};
}

Eigen::Vector4d quaternion_from_rotation(const Eigen::Matrix3d& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return {q.x(), q.y(), q.z(), q.w()};
}

void save_trajectory(const std::string& path,
                     const std::vector<std::pair<int, PoseSE3>>& traj) {
  std::ofstream f(path);
  if (!f) throw GeometryError("cannot open for write: " + path);
  char line[256];
  for (const auto& [idx, pose] : traj) {
    Eigen::Vector4d q = quaternion_from_rotation(pose.rotation());
    std::snprintf(line, sizeof(line),
                  "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", idx,
                  pose.t.x(), pose.t.y(), pose.t.z(), q[0], q[1], q[2], q[3]);
    f << line;
  }
}

std::vector<std::pair<int, PoseSE3>> load_trajectory(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw GeometryError("cannot open: " + path);
  std::vector<std::pair<int, PoseSE3>> traj;
  int idx;
  double tx, ty, tz, qx, qy, qz, qw;
  while (f >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw) {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    PoseSE3 pose;
    pose.omega = so3_log(q.normalized().toRotationMatrix());
    pose.t = {tx, ty, tz};
    traj.emplace_back(idx, pose);
  }
  return traj;
}

// --- tape-backed variants ---

RotationVars rotation_pair_on_tape(ad::Tape& tape, ad::Var omega) {
  ad::Var zero = tape.constant(0.0);
  // component extraction via constant selectors keeps omega a single leaf
  Eigen::MatrixXd ex(1, 3), ey(1, 3), ez(1, 3);
  ex << 1, 0, 0;
  ey << 0, 1, 0;
  ez << 0, 0, 1;
  ad::Var wx = tape.matvec(tape.constant(ex), omega);
  ad::Var wy = tape.matvec(tape.constant(ey), omega);
  ad::Var wz = tape.matvec(tape.constant(ez), omega);

  // K rows assembled from scalars
  auto row = [&](ad::Var a, ad::Var b, ad::Var c) {
    return tape.concat({a, b, c}, 1);
  };
  ad::Var K = tape.concat({row(zero, tape.neg(wz), wy),
                           row(wz, zero, tape.neg(wx)),
                           row(tape.neg(wy), wx, zero)},
                          0);
  ad::Var K2 = tape.matmul(K, K);

  ad::Var theta2 = tape.sum(tape.mul(omega, omega));
  double t2 = tape.scalar_val(theta2);
  ad::Var A, B;
  if (t2 < 1e-8) {
    // A = 1 - t2/6 + t2^2/120, B = 1/2 - t2/24 + t2^2/720
    ad::Var t4 = tape.mul(theta2, theta2);
    A = tape.add(tape.sub(tape.constant(1.0), tape.mul(theta2, tape.constant(1.0 / 6.0))),
                 tape.mul(t4, tape.constant(1.0 / 120.0)));
    B = tape.add(tape.sub(tape.constant(0.5), tape.mul(theta2, tape.constant(1.0 / 24.0))),
                 tape.mul(t4, tape.constant(1.0 / 720.0)));
  } else {
    ad::Var theta = tape.sqrt(theta2);
    A = tape.div(tape.sin(theta), theta);
    B = tape.div(tape.sub(tape.constant(1.0), tape.cos(theta)), theta2);
  }
  Eigen::MatrixXd eye = Eigen::Matrix3d::Identity();
  ad::Var AK = tape.mul(K, A);
  ad::Var BK2 = tape.mul(K2, B);
  RotationVars rv;
  rv.R = tape.add(tape.constant(eye), tape.add(AK, BK2));
  // K is skew and K^2 symmetric, so R^T = I - A K + B K^2
  rv.Rt = tape.add(tape.constant(eye), tape.add(tape.neg(AK), BK2));
  return rv;
}

ad::Var rotation_on_tape(ad::Tape& tape, ad::Var omega) {
  return rotation_pair_on_tape(tape, omega).R;
}

ad::Var as_row3(ad::Tape& tape, ad::Var col3) {
  std::vector<ad::Var> parts;
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(1, 3);
    e(0, i) = 1;
    parts.push_back(tape.matvec(tape.constant(e), col3));
  }
  return tape.concat(parts, 1);
}

PoseVars pose_leaves(ad::Tape& tape, const PoseSE3& pose, bool trainable) {
  PoseVars pv;
  if (trainable) {
    pv.omega = tape.leaf(Eigen::MatrixXd(pose.omega));
    pv.t = tape.leaf(Eigen::MatrixXd(pose.t));
  } else {
    pv.omega = tape.constant(Eigen::MatrixXd(pose.omega));
    pv.t = tape.constant(Eigen::MatrixXd(pose.t));
  }
  return pv;
}

RayVars generate_ray_on_tape(ad::Tape& tape, const CameraIntrinsics& K,
                             const PoseVars& pose, ad::Var rotation, double u,
                             double v) {
  Eigen::MatrixXd d_cam(3, 1);
  d_cam << (u + 0.5 - K.cx) / K.fx, (v + 0.5 - K.cy) / K.fy, 1.0;
  ad::Var d = tape.matvec(rotation, tape.constant(d_cam));  // 3x1
  ad::Var n2 = tape.sum(tape.mul(d, d));
  ad::Var inv_norm = tape.power(n2, -0.5);
  ad::Var d_unit = tape.mul(d, inv_norm);
  // lay out as rows for downstream (n x 3) point construction
  RayVars rv;
  rv.origin = as_row3(tape, pose.t);
  rv.dir = as_row3(tape, d_unit);
  return rv;
}

}  // namespace dgnerf
