#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "dgnerf/geometry.hpp"
#include "dgnerf/image.hpp"
#include "dgnerf/rng.hpp"

namespace dgnerf {

// Analytic density/albedo primitive. `size` is the radius for spheres and
// the half extents for boxes. Density ramps from 0 to sigma0 across a band
// of width edge_softness around the surface, so the field stays smooth.
// texture_amp > 0 modulates the albedo with a smooth sinusoidal pattern;
// photometric pose signals need some texture to latch onto.
struct Primitive {
  enum class Shape { Sphere, Box };
  Shape shape = Shape::Sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double sigma0 = 40.0;
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);
  double edge_softness = 0.02;
  double texture_amp = 0.0;
  double texture_freq = 4.0;
};

struct AnalyticScene {
  std::vector<Primitive> primitives;
  double near = 0.1;
  double far = 4.0;
};

// Exact density and color at a point: density is the sum over primitives of
// sigma0 * smoothstep over the signed distance; color is the
// amplitude-weighted albedo blend.
std::pair<double, Eigen::Vector3d> scene_field(const AnalyticScene& scene,
                                               const Eigen::Vector3d& x);

double primitive_sdf(const Primitive& p, const Eigen::Vector3d& x);

// 3 textured spheres in front of a large textured backdrop box, sized for
// forward-facing cameras at distance ~2; every ray hits a surface, which
// the photometric and depth losses both rely on. Trains in minutes on CPU.
AnalyticScene default_desk_scene();
CameraIntrinsics default_intrinsics(int width = 48, int height = 48);

// Reference render: per-pixel uniform quadrature through the shared
// compositing path, at n_samples (default 4096). Depth is the expected
// termination depth, 0 for fully transparent rays.
std::pair<Image, DepthMap> render_ground_truth(const AnalyticScene& scene,
                                               const CameraIntrinsics& K,
                                               const PoseSE3& pose,
                                               int n_samples = 4096);

// Simulated coarse prior: the inverse affine of the true depth plus noise,
// with square patches replaced by locally constant wrong values. Undistorting
// with (s_true, k_true) recovers the true depth up to noise on clean pixels.
struct PriorDepthConfig {
  double s_true = 1.0;
  double k_true = 0.0;
  double noise_std = 0.0;
  double corruption_fraction = 0.0;  // of pixels, in [0,1]
  int corruption_patch = 4;          // patch side in pixels
  uint64_t rng_seed = 0;

  void validate() const;
};

DepthMap make_coarse_depth(const DepthMap& depth_gt, const PriorDepthConfig& cfg,
                           int frame_index);

enum class TrajectoryKind { Orbit, ForwardFacing };

// Orbit: cameras on a circle at `radius` (slightly elevated), all looking at
// the origin. ForwardFacing: cameras on a lateral line at distance `radius`,
// looking at the origin, so rotations stay small.
std::vector<PoseSE3> make_trajectory(TrajectoryKind kind, int n_frames,
                                     double radius, double lateral_span = 0.8);

struct AppliedPerturbation {
  Eigen::Vector3d axis;
  double angle_rad = 0.0;
  Eigen::Vector3d translation;
};

// Composes each pose with a rotation about its camera center (angle <=
// rot_deg) and a translation of norm <= trans_mag. The applied perturbations
// are returned for error accounting.
std::vector<PoseSE3> perturb_poses(const std::vector<PoseSE3>& poses,
                                   double rot_deg, double trans_mag, Rng& rng,
                                   std::vector<AppliedPerturbation>* recorded = nullptr);

}  // namespace dgnerf
