#pragma once

#include <Eigen/Core>

#include "dgnerf/autodiff.hpp"
#include "dgnerf/field.hpp"
#include "dgnerf/geometry.hpp"
#include "dgnerf/rng.hpp"
#include "dgnerf/sampling.hpp"

namespace dgnerf {

struct RenderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RenderedPixel {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double depth = 0.0;    // expected termination depth; 0 when opacity is 0
  double opacity = 0.0;  // accumulated alpha in [0,1]
};

struct RenderedPixelVars {
  ad::Var color;    // 1x3
  ad::Var depth;    // 1x1
  ad::Var opacity;  // 1x1
};

// alpha_i = 1 - exp(-sigma_i * delta_i); T_i = prod_{j<i}(1 - alpha_j)
// computed as exp of the exclusive prefix sum, which is exact here.
// Returns color = sum T_i alpha_i c_i, depth = sum T_i alpha_i t_i (not
// normalized by opacity), opacity = sum T_i alpha_i.
RenderedPixelVars composite(ad::Tape& tape, ad::Var sigmas, ad::Var colors,
                            ad::Var ts, ad::Var deltas);

// Spec-level conveniences over constant inputs.
Eigen::Vector3d composite_color(const Eigen::VectorXd& sigmas,
                                const Eigen::MatrixX3d& colors,
                                const RaySampleSet& samples);
double composite_depth(const Eigen::VectorXd& sigmas, const RaySampleSet& samples);

// Debug-only variant of the depth integral without the t factor (it equals
// accumulated opacity); kept for side-by-side comparison.
double composite_depth_literal(const Eigen::VectorXd& sigmas,
                               const RaySampleSet& samples);

// Full differentiable per-ray render, sampling by the epoch-gated strategy.
RenderedPixelVars render_ray_on_tape(ad::Tape& tape, const FieldVars& field,
                                     const RayVars& ray, const SamplingConfig& cfg,
                                     double prior_depth, double sigma_bar,
                                     int epoch, Rng& rng);

// Batched render: all rays share one field evaluation (one set of GEMMs per
// layer), then compositing slices the outputs back per ray. Sample sets are
// provided by the caller.
std::vector<RenderedPixelVars> render_rays_on_tape(
    ad::Tape& tape, const FieldVars& field, const std::vector<RayVars>& rays,
    const std::vector<RaySampleSet>& samples);

// Plain wrapper: constant pose/field, returns values only.
RenderedPixel render_ray(const FieldParams& field, const Ray& ray,
                         const SamplingConfig& cfg, double prior_depth,
                         double sigma_bar, int epoch, Rng& rng);

}  // namespace dgnerf
