#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dgnerf/geometry.hpp"
#include "dgnerf/image.hpp"

namespace dgnerf {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Trajectory = std::vector<std::pair<int, PoseSE3>>;  // ids strictly increasing

// 10 log10(peak^2 / MSE), capped at 99 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Standard single-scale SSIM on the channel-mean grayscale image: 11x11
// Gaussian window (sigma 1.5), C1=(0.01 peak)^2, C2=(0.03 peak)^2, averaged
// over valid window positions.
double ssim(const Image& a, const Image& b, double peak = 1.0);

struct Alignment {
  double scale = 1.0;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (R * p) + t; }
};

// Closed-form least-squares alignment of camera centers (orthogonal
// Procrustes, optional scale). Needs >= 3 non-collinear centers.
Alignment align_sim3(const Trajectory& est, const Trajectory& ref, bool with_scale);

// RMSE of camera-center distances after alignment.
double ate(const Trajectory& est, const Trajectory& ref, bool with_scale = false);

struct RpeResult {
  double rpe_t = 0.0;  // RMSE of relative translation error magnitude
  double rpe_r = 0.0;  // RMSE of relative rotation geodesic angle, degrees
};

// Per-step error E = rel_ref(i, i+delta)^-1 * rel_est(i, i+delta).
RpeResult rpe(const Trajectory& est, const Trajectory& ref, int delta = 1);

// Evaluation report: CSV rows "metric,value" plus a text summary.
struct EvalReport {
  std::vector<std::pair<std::string, double>> rows;

  void write_csv(const std::string& path) const;
  std::string text_summary() const;
};

}  // namespace dgnerf
