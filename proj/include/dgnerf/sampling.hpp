#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>

#include "dgnerf/rng.hpp"

namespace dgnerf {

struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parameters of a normal distribution truncated to [a, b].
struct TruncNormParams {
  double mu = 0.0;
  double sigma = 1.0;
  double a = 0.0;
  double b = 1.0;

  void validate() const;
};

enum class Strategy : uint8_t { Uniform, Tdbs, CoarseToFine };

struct SamplingConfig {
  int n_samples = 128;
  Strategy strategy = Strategy::CoarseToFine;
  int t_s = 1000;  // epoch threshold for the coarse-to-fine switch
  double near = 0.001;
  double far = 1.0;
  bool stratified_jitter = true;
  bool iid_u = false;  // draw u iid instead of stratified
  uint64_t rng_seed = 0;

  void validate() const;
};

// Sorted depths along one ray plus the compositing step sizes. The final
// delta is capped at (far-near)/n rather than an opaque backstop.
struct RaySampleSet {
  Eigen::VectorXd ts;
  Eigen::VectorXd deltas;
};

// Standard normal pdf/cdf and quantile. The quantile is a rational
// approximation polished with one Newton step on the cdf, good to ~1e-14.
double stdnormal_pdf(double x);
double stdnormal_cdf(double x);
double stdnormal_quantile(double p);

double truncnorm_pdf(const TruncNormParams& p, double x);
double truncnorm_cdf(const TruncNormParams& p, double x);
double truncnorm_inverse_cdf(const TruncNormParams& p, double u);

// Analytic mean/variance of the truncated distribution (test oracle).
double truncnorm_mean(const TruncNormParams& p);
double truncnorm_variance(const TruncNormParams& p);

// Depth-prior-centered samples: the prior is clamped into (near, far) and
// used as the truncated normal's mean.
RaySampleSet sample_tdbs(double prior_depth, const SamplingConfig& cfg,
                         double sigma_bar, Rng& rng);

RaySampleSet sample_uniform(const SamplingConfig& cfg, Rng& rng);

// Coarse-to-fine schedule: Tdbs before t_s, Uniform afterwards. Fixed
// strategies return themselves.
Strategy select_strategy(int epoch, const SamplingConfig& cfg);

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

}  // namespace dgnerf
