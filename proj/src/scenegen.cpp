#include "dgnerf/scenegen.hpp"

#include <cmath>

#include "dgnerf/rendering.hpp"

namespace dgnerf {

double primitive_sdf(const Primitive& p, const Eigen::Vector3d& x) {
  Eigen::Vector3d q = x - p.center;
  if (p.shape == Primitive::Shape::Sphere) return q.norm() - p.size.x();
  Eigen::Vector3d d = q.cwiseAbs() - p.size;
  Eigen::Vector3d outside = d.cwiseMax(0.0);
  double inside = std::min(d.maxCoeff(), 0.0);
  return outside.norm() + inside;
}

namespace {

Eigen::Vector3d textured_albedo(const Primitive& p, const Eigen::Vector3d& x) {
  if (p.texture_amp == 0.0) return p.albedo;
  double f = p.texture_freq;
  double pattern = std::sin(f * x.x() + 1.3) * std::sin(f * x.y() + 2.1) *
                   std::sin(f * x.z() + 0.7);
  Eigen::Vector3d c = p.albedo * (1.0 + p.texture_amp * pattern);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

std::pair<double, Eigen::Vector3d> scene_field(const AnalyticScene& scene,
                                               const Eigen::Vector3d& x) {
  double sigma = 0.0;
  Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
  for (const auto& p : scene.primitives) {
    double sdf = primitive_sdf(p, x);
    double h = std::clamp(0.5 - sdf / p.edge_softness, 0.0, 1.0);
    double k = h * h * (3.0 - 2.0 * h);  // smoothstep
    double contrib = p.sigma0 * k;
    sigma += contrib;
    weighted += contrib * textured_albedo(p, x);
  }
  Eigen::Vector3d color =
      sigma > 1e-12 ? Eigen::Vector3d(weighted / sigma) : Eigen::Vector3d::Zero();
  return {sigma, color};
}

AnalyticScene default_desk_scene() {
  AnalyticScene s;
  s.near = 0.1;
  s.far = 4.0;
  Primitive a;
  a.center = {0.35, 0.05, 0.0};
  a.size = Eigen::Vector3d::Constant(0.32);
  a.albedo = {0.80, 0.28, 0.22};
  a.texture_amp = 0.35;
  a.texture_freq = 7.0;
  Primitive b;
  b.center = {-0.40, 0.20, 0.25};
  b.size = Eigen::Vector3d::Constant(0.26);
  b.albedo = {0.22, 0.68, 0.32};
  b.texture_amp = 0.35;
  b.texture_freq = 7.0;
  Primitive c;
  c.center = {-0.05, -0.35, 0.35};
  c.size = Eigen::Vector3d::Constant(0.22);
  c.albedo = {0.28, 0.38, 0.82};
  c.texture_amp = 0.35;
  c.texture_freq = 7.0;
  Primitive d;  // backdrop: keeps every ray on a surface
  d.shape = Primitive::Shape::Box;
  d.center = {0.0, 0.0, 1.05};
  d.size = {2.3, 2.3, 0.12};
  d.albedo = {0.62, 0.58, 0.54};
  d.texture_amp = 0.40;
  d.texture_freq = 5.0;
  s.primitives = {a, b, c, d};
  return s;
}

CameraIntrinsics default_intrinsics(int width, int height) {
  CameraIntrinsics K;
  K.width = width;
  K.height = height;
  // ~48 degree horizontal fov; principal point on a pixel center so the
  // principal-axis ray exists at any resolution doubling
  K.fx = K.fy = 0.5 * width / std::tan(24.0 * M_PI / 180.0);
  K.cx = width / 2.0 - 0.5;
  K.cy = height / 2.0 - 0.5;
  return K;
}

std::pair<Image, DepthMap> render_ground_truth(const AnalyticScene& scene,
                                               const CameraIntrinsics& K,
                                               const PoseSE3& pose, int n_samples) {
  K.validate();
  Image img(K.width, K.height);
  DepthMap depth(K.width, K.height);
  SamplingConfig cfg;
  cfg.n_samples = n_samples;
  cfg.near = scene.near;
  cfg.far = scene.far;
  cfg.strategy = Strategy::Uniform;
  cfg.stratified_jitter = false;  // midpoint rule, deterministic
  Rng rng(0);

  Eigen::VectorXd sigmas(n_samples);
  Eigen::MatrixX3d colors(n_samples, 3);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      Ray ray = generate_ray(K, pose, x, y);
      RaySampleSet samples = sample_uniform(cfg, rng);
      for (int i = 0; i < n_samples; ++i) {
        Eigen::Vector3d p = ray.origin + samples.ts[i] * ray.dir;
        auto [sg, col] = scene_field(scene, p);
        sigmas[i] = sg;
        colors.row(i) = col;
      }
      ad::Tape tape;
      RenderedPixelVars v = composite(
          tape, tape.constant(Eigen::MatrixXd(sigmas)),
          tape.constant(Eigen::MatrixXd(colors)),
          tape.constant(Eigen::MatrixXd(samples.ts)),
          tape.constant(Eigen::MatrixXd(samples.deltas)));
      img.set_pixel(x, y, tape.val(v.color).row(0));
      depth.at(x, y) = tape.scalar_val(v.depth);
    }
  }
  return {img, depth};
}

void PriorDepthConfig::validate() const {
  if (!(noise_std >= 0.0)) throw GeometryError("prior: noise_std must be >= 0");
  if (!(corruption_fraction >= 0.0 && corruption_fraction <= 1.0))
    throw GeometryError("prior: corruption_fraction must be in [0,1]");
  if (!(s_true > 0.0)) throw GeometryError("prior: s_true must be > 0");
  if (corruption_patch < 1) throw GeometryError("prior: corruption_patch must be >= 1");
}

DepthMap make_coarse_depth(const DepthMap& depth_gt, const PriorDepthConfig& cfg,
                           int frame_index) {
  cfg.validate();
  DepthMap prior(depth_gt.width, depth_gt.height);
  Rng noise_rng(Rng::mix(cfg.rng_seed, uint64_t(frame_index), 0xA01));
  for (int y = 0; y < depth_gt.height; ++y)
    for (int x = 0; x < depth_gt.width; ++x) {
      double affine = (depth_gt.at(x, y) - cfg.k_true) / cfg.s_true;
      double n = cfg.noise_std > 0 ? cfg.noise_std * noise_rng.normal() : 0.0;
      prior.at(x, y) = affine + n;
    }

  if (cfg.corruption_fraction > 0.0) {
    Rng patch_rng(Rng::mix(cfg.rng_seed, uint64_t(frame_index), 0xA02));
    int total = depth_gt.width * depth_gt.height;
    int per_patch = cfg.corruption_patch * cfg.corruption_patch;
    int n_patches = int(std::lround(cfg.corruption_fraction * total / per_patch));
    // wrong values sit far from the affine prior so corruption is
    // unambiguous relative to the noise floor
    double span = 0.35;  // of the gt depth range, in prior units
    double scene_span = 3.9 / cfg.s_true;
    for (int i = 0; i < n_patches; ++i) {
      int x0 = patch_rng.uniform_int(std::max(1, depth_gt.width - cfg.corruption_patch + 1));
      int y0 = patch_rng.uniform_int(std::max(1, depth_gt.height - cfg.corruption_patch + 1));
      double sign = patch_rng.uniform() < 0.5 ? -1.0 : 1.0;
      double offset = sign * patch_rng.uniform(0.15, span) * scene_span;
      double value = prior.at(std::min(x0 + cfg.corruption_patch / 2, depth_gt.width - 1),
                              std::min(y0 + cfg.corruption_patch / 2, depth_gt.height - 1)) +
                     offset;
      for (int y = y0; y < std::min(y0 + cfg.corruption_patch, depth_gt.height); ++y)
        for (int x = x0; x < std::min(x0 + cfg.corruption_patch, depth_gt.width); ++x)
          prior.at(x, y) = value;
    }
  }
  return prior;
}

namespace {

PoseSE3 look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                const Eigen::Vector3d& up_world) {
  Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up_world).normalized();
  Eigen::Vector3d down = forward.cross(right).normalized();
  Eigen::Matrix3d R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  PoseSE3 pose;
  pose.omega = so3_log(R);
  pose.t = eye;
  return pose;
}

}  // namespace

std::vector<PoseSE3> make_trajectory(TrajectoryKind kind, int n_frames,
                                     double radius, double lateral_span) {
  if (n_frames < 2) throw GeometryError("make_trajectory: n_frames must be >= 2");
  std::vector<PoseSE3> poses;
  poses.reserve(size_t(n_frames));
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  // forward-facing cameras look along +z, so world up would be parallel to
  // the view direction; -y keeps their rotations near identity instead
  Eigen::Vector3d up = kind == TrajectoryKind::Orbit ? Eigen::Vector3d(0, 0, 1)
                                                     : Eigen::Vector3d(0, -1, 0);
  if (kind == TrajectoryKind::Orbit) {
    double height = 0.45 * radius / 2.0;
    // half-spacing start offset keeps every look-at rotation inside the
    // axis-angle chart (a camera on the +y axis sits exactly at angle pi)
    for (int i = 0; i < n_frames; ++i) {
      double theta = 2.0 * M_PI * (i + 0.5) / n_frames;
      Eigen::Vector3d eye(radius * std::cos(theta), radius * std::sin(theta), height);
      poses.push_back(look_at(eye, target, up));
    }
  } else {
    for (int i = 0; i < n_frames; ++i) {
      double s = n_frames > 1 ? double(i) / (n_frames - 1) - 0.5 : 0.0;
      double bow = 0.12 * radius * std::sin(M_PI * (s + 0.5));
      Eigen::Vector3d eye(s * lateral_span * radius, -0.04 * radius - bow * 0.5,
                          -radius + 0.1 * radius * s * s);
      poses.push_back(look_at(eye, target, up));
    }
  }
  return poses;
}

std::vector<PoseSE3> perturb_poses(const std::vector<PoseSE3>& poses, double rot_deg,
                                   double trans_mag, Rng& rng,
                                   std::vector<AppliedPerturbation>* recorded) {
  if (rot_deg < 0 || trans_mag < 0)
    throw GeometryError("perturb_poses: magnitudes must be >= 0");
  std::vector<PoseSE3> out;
  out.reserve(poses.size());
  if (recorded) recorded->clear();
  for (const auto& pose : poses) {
    AppliedPerturbation ap;
    Eigen::Vector3d g(rng.normal(), rng.normal(), rng.normal());
    ap.axis = g.norm() > 1e-12 ? Eigen::Vector3d(g.normalized()) : Eigen::Vector3d(0, 0, 1);
    ap.angle_rad = rot_deg * M_PI / 180.0 * rng.uniform();
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    if (dir.norm() < 1e-12) dir = {1, 0, 0};
    ap.translation = dir.normalized() * (trans_mag * rng.uniform());

    // rotate about the camera center, then shift the center
    Eigen::Matrix3d dR = so3_exp(ap.axis * ap.angle_rad);
    PoseSE3 p2;
    p2.omega = so3_log(dR * pose.rotation());
    p2.t = pose.t + ap.translation;
    out.push_back(p2);
    if (recorded) recorded->push_back(ap);
  }
  return out;
}

}  // namespace dgnerf
