#include "dgnerf/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace dgnerf {

double psnr(const Image& a, const Image& b, double peak) {
  if (a.width != b.width || a.height != b.height)
    throw MetricError("psnr: image dimensions differ");
  if (a.px.empty()) throw MetricError("psnr: empty image");
  double mse = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = a.px[i] - b.px[i];
    mse += d * d;
  }
  mse /= double(a.px.size());
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> grayscale(const Image& img) {
  std::vector<double> g(size_t(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      g[size_t(y) * img.width + x] =
          (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
  return g;
}

}  // namespace

double ssim(const Image& a, const Image& b, double peak) {
  if (a.width != b.width || a.height != b.height)
    throw MetricError("ssim: image dimensions differ");
  const int win = 11;
  if (a.width < win || a.height < win)
    throw MetricError("ssim: image smaller than the 11x11 window");

  std::vector<double> ga = grayscale(a), gb = grayscale(b);
  // 11-tap Gaussian, sigma 1.5
  double kernel[win];
  double ksum = 0.0;
  for (int i = 0; i < win; ++i) {
    double x = i - (win - 1) / 2.0;
    kernel[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    ksum += kernel[i];
  }
  for (int i = 0; i < win; ++i) kernel[i] /= ksum;

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  int w = a.width, h = a.height;
  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + win <= h; ++y) {
    for (int x = 0; x + win <= w; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int j = 0; j < win; ++j) {
        for (int i = 0; i < win; ++i) {
          double wgt = kernel[i] * kernel[j];
          double va = ga[size_t(y + j) * w + (x + i)];
          double vb = gb[size_t(y + j) * w + (x + i)];
          mu_a += wgt * va;
          mu_b += wgt * vb;
          aa += wgt * va * va;
          bb += wgt * vb * vb;
          ab += wgt * va * vb;
        }
      }
      double var_a = aa - mu_a * mu_a;
      double var_b = bb - mu_b * mu_b;
      double cov = ab - mu_a * mu_b;
      double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      acc += s;
      ++count;
    }
  }
  return acc / count;
}

namespace {

void check_pair(const Trajectory& est, const Trajectory& ref, size_t min_len) {
  if (est.size() != ref.size()) throw MetricError("trajectories differ in length");
  if (est.size() < min_len)
    throw MetricError("trajectory too short: need >= " + std::to_string(min_len));
  for (size_t i = 0; i < est.size(); ++i)
    if (est[i].first != ref[i].first) throw MetricError("trajectory frame ids differ");
}

}  // namespace

Alignment align_sim3(const Trajectory& est, const Trajectory& ref, bool with_scale) {
  check_pair(est, ref, 3);
  Eigen::Index n = Eigen::Index(est.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = est[size_t(i)].second.t;
    dst.col(i) = ref[size_t(i)].second.t;
  }
  Eigen::Vector3d mu_s = src.rowwise().mean();
  Eigen::Vector3d mu_d = dst.rowwise().mean();
  Eigen::Matrix3Xd cs = src.colwise() - mu_s;
  Eigen::Matrix3Xd cd = dst.colwise() - mu_d;

  double var_s = cs.squaredNorm() / double(n);
  if (var_s < 1e-18) throw MetricError("align: degenerate trajectory (coincident centers)");

  Eigen::Matrix3d cov = cd * cs.transpose() / double(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 1e-15)
    throw MetricError("align: degenerate trajectory (collinear centers)");
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;

  Alignment out;
  out.R = svd.matrixU() * S * svd.matrixV().transpose();
  out.scale = with_scale
                  ? (svd.singularValues().asDiagonal() * S).trace() / var_s
                  : 1.0;
  out.t = mu_d - out.scale * out.R * mu_s;
  return out;
}

double ate(const Trajectory& est, const Trajectory& ref, bool with_scale) {
  Alignment a = align_sim3(est, ref, with_scale);
  double acc = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    Eigen::Vector3d e = a.apply(est[i].second.t) - ref[i].second.t;
    acc += e.squaredNorm();
  }
  return std::sqrt(acc / double(est.size()));
}

RpeResult rpe(const Trajectory& est, const Trajectory& ref, int delta) {
  if (delta < 1) throw MetricError("rpe: delta must be >= 1");
  check_pair(est, ref, size_t(delta) + 1);
  size_t m = est.size() - size_t(delta);
  double acc_t = 0.0, acc_r = 0.0;
  for (size_t i = 0; i < m; ++i) {
    auto [re, te] = relative_pose(est[i + size_t(delta)].second, est[i].second);
    auto [rr, tr] = relative_pose(ref[i + size_t(delta)].second, ref[i].second);
    Eigen::Matrix3d Re = rr.transpose() * re;
    Eigen::Vector3d Te = rr.transpose() * (te - tr);
    acc_t += Te.squaredNorm();
    double c = std::clamp((Re.trace() - 1.0) / 2.0, -1.0, 1.0);
    double ang = std::acos(c) * 180.0 / M_PI;
    acc_r += ang * ang;
  }
  RpeResult out;
  out.rpe_t = std::sqrt(acc_t / double(m));
  out.rpe_r = std::sqrt(acc_r / double(m));
  return out;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw MetricError("cannot open for write: " + path);
  f << "metric,value\n";
  char num[40];
  for (const auto& [name, value] : rows) {
    std::snprintf(num, sizeof(num), "%.17g", value);
    f << name << "," << num << "\n";
  }
}

std::string EvalReport::text_summary() const {
  std::string out;
  char line[128];
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof(line), "%-12s %12.6f\n", name.c_str(), value);
    out += line;
  }
  return out;
}

}  // namespace dgnerf
