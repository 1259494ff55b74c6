#include "dgnerf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dgnerf {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

// Acklam's rational approximation to the standard normal quantile.
double quantile_approx(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double stdnormal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double stdnormal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double stdnormal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw SamplingError("stdnormal_quantile: p must be in (0,1), got " + std::to_string(p));
  double x = quantile_approx(p);
  double pdf = stdnormal_pdf(x);
  if (pdf > 1e-300) x -= (stdnormal_cdf(x) - p) / pdf;  // one Newton step
  return x;
}

void TruncNormParams::validate() const {
  if (!(sigma > 0.0)) throw SamplingError("truncnorm: sigma must be > 0");
  if (!(a < b)) throw SamplingError("truncnorm: requires a < b");
  double za = (a - mu) / sigma, zb = (b - mu) / sigma;
  if (stdnormal_cdf(zb) - stdnormal_cdf(za) < 1e-300)
    throw SamplingError(
        "truncnorm: no probability mass in [a,b]; widen the interval or move mu");
}

namespace {

struct StandardizedBounds {
  double za, zb, phi_a, phi_b, mass;
};

StandardizedBounds standardize(const TruncNormParams& p) {
  p.validate();
  StandardizedBounds s;
  s.za = (p.a - p.mu) / p.sigma;
  s.zb = (p.b - p.mu) / p.sigma;
  s.phi_a = stdnormal_cdf(s.za);
  s.phi_b = stdnormal_cdf(s.zb);
  s.mass = s.phi_b - s.phi_a;
  return s;
}

}  // namespace

double truncnorm_pdf(const TruncNormParams& p, double x) {
  auto s = standardize(p);
  if (x <= p.a || x >= p.b) return 0.0;
  double z = (x - p.mu) / p.sigma;
  return stdnormal_pdf(z) / (p.sigma * s.mass);
}

double truncnorm_cdf(const TruncNormParams& p, double x) {
  auto s = standardize(p);
  if (x <= p.a) return 0.0;
  if (x >= p.b) return 1.0;
  double z = (x - p.mu) / p.sigma;
  return (stdnormal_cdf(z) - s.phi_a) / s.mass;
}

double truncnorm_inverse_cdf(const TruncNormParams& p, double u) {
  auto s = standardize(p);
  if (!(u > 0.0 && u < 1.0))
    throw SamplingError("truncnorm_inverse_cdf: u must be in (0,1)");
  double q = s.phi_a + u * s.mass;  // = (1-u)*phi_a + u*phi_b
  double x = p.mu + p.sigma * stdnormal_quantile(q);
  return std::clamp(x, std::nextafter(p.a, p.b), std::nextafter(p.b, p.a));
}

double truncnorm_mean(const TruncNormParams& p) {
  auto s = standardize(p);
  return p.mu + p.sigma * (stdnormal_pdf(s.za) - stdnormal_pdf(s.zb)) / s.mass;
}

double truncnorm_variance(const TruncNormParams& p) {
  auto s = standardize(p);
  double pa = stdnormal_pdf(s.za), pb = stdnormal_pdf(s.zb);
  double t1 = (s.za * pa - s.zb * pb) / s.mass;
  double t2 = (pa - pb) / s.mass;
  return p.sigma * p.sigma * (1.0 + t1 - t2 * t2);
}

void SamplingConfig::validate() const {
  if (!(near < far)) throw SamplingError("sampling: requires near < far");
  if (n_samples < 2) throw SamplingError("sampling: n_samples must be >= 2");
  if (strategy == Strategy::CoarseToFine && t_s < 1)
    throw SamplingError("sampling: coarse_to_fine requires t_s >= 1");
}

namespace {

RaySampleSet finalize(std::vector<double>& ts, double near, double far) {
  std::sort(ts.begin(), ts.end());
  // enforce strictly increasing in the face of duplicate draws
  for (size_t i = 1; i < ts.size(); ++i)
    if (ts[i] <= ts[i - 1]) ts[i] = std::nextafter(ts[i - 1], far + 1.0);
  RaySampleSet out;
  int n = int(ts.size());
  out.ts = Eigen::Map<Eigen::VectorXd>(ts.data(), n);
  out.deltas.resize(n);
  for (int i = 0; i + 1 < n; ++i) out.deltas[i] = ts[size_t(i) + 1] - ts[size_t(i)];
  out.deltas[n - 1] = (far - near) / n;
  return out;
}

double stratified_u(int k, int n, const SamplingConfig& cfg, Rng& rng) {
  double u;
  if (cfg.iid_u) {
    u = rng.uniform();
  } else {
    double jitter = cfg.stratified_jitter ? rng.uniform() : 0.5;
    u = (k + jitter) / n;
  }
  return std::clamp(u, 1e-12, 1.0 - 1e-12);
}

}  // namespace

RaySampleSet sample_tdbs(double prior_depth, const SamplingConfig& cfg,
                         double sigma_bar, Rng& rng) {
  cfg.validate();
  if (!std::isfinite(prior_depth))
    throw SamplingError("sample_tdbs: prior depth must be finite");
  double a = cfg.near, b = cfg.far;
  double eps = 1e-4 * (b - a);
  TruncNormParams p{std::clamp(prior_depth, a + eps, b - eps), sigma_bar, a, b};
  std::vector<double> ts(size_t(cfg.n_samples));
  for (int k = 0; k < cfg.n_samples; ++k)
    ts[size_t(k)] = truncnorm_inverse_cdf(p, stratified_u(k, cfg.n_samples, cfg, rng));
  return finalize(ts, a, b);
}

RaySampleSet sample_uniform(const SamplingConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<double> ts(size_t(cfg.n_samples));
  for (int k = 0; k < cfg.n_samples; ++k)
    ts[size_t(k)] = cfg.near + (cfg.far - cfg.near) * stratified_u(k, cfg.n_samples, cfg, rng);
  return finalize(ts, cfg.near, cfg.far);
}

Strategy select_strategy(int epoch, const SamplingConfig& cfg) {
  if (epoch < 0) throw SamplingError("select_strategy: epoch must be >= 0");
  switch (cfg.strategy) {
    case Strategy::Uniform: return Strategy::Uniform;
    case Strategy::Tdbs: return Strategy::Tdbs;
    case Strategy::CoarseToFine:
      return epoch < cfg.t_s ? Strategy::Tdbs : Strategy::Uniform;
  }
  return Strategy::Uniform;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Uniform: return "uniform";
    case Strategy::Tdbs: return "tdbs";
    case Strategy::CoarseToFine: return "coarse_to_fine";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "uniform") return Strategy::Uniform;
  if (name == "tdbs") return Strategy::Tdbs;
  if (name == "coarse_to_fine") return Strategy::CoarseToFine;
  throw SamplingError("unknown sampling strategy: " + name);
}

double Rng::normal() {
  double u = std::clamp(uniform(), 1e-12, 1.0 - 1e-12);
  return stdnormal_quantile(u);
}

}  // namespace dgnerf
