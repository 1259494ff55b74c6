#include "dgnerf/rendering.hpp"

#include <cmath>

namespace dgnerf {

RenderedPixelVars composite(ad::Tape& tape, ad::Var sigmas, ad::Var colors,
                            ad::Var ts, ad::Var deltas) {
  const auto& sv = tape.val(sigmas);
  const auto& cv = tape.val(colors);
  const auto& tv = tape.val(ts);
  const auto& dv = tape.val(deltas);
  if (sv.cols() != 1 || tv.cols() != 1 || dv.cols() != 1 || cv.cols() != 3)
    throw RenderError("composite: expected sigmas/ts/deltas as columns, colors as n x 3");
  if (sv.rows() != cv.rows() || sv.rows() != tv.rows() || sv.rows() != dv.rows())
    throw RenderError("composite: length mismatch between samples and field outputs");
  if ((sv.array() < 0.0).any())
    throw RenderError("composite: negative density violates the field contract");

  ad::Var sd = tape.mul(sigmas, deltas);
  ad::Var transmit = tape.exp(tape.neg(tape.cumsum_exclusive(sd)));  // T_i
  ad::Var alpha = tape.sub(tape.constant(Eigen::MatrixXd::Ones(sv.rows(), 1)),
                           tape.exp(tape.neg(sd)));
  ad::Var w = tape.mul(transmit, alpha);

  RenderedPixelVars out;
  out.opacity = tape.sum(w);
  out.depth = tape.sum(tape.mul(w, ts));
  std::vector<ad::Var> channels;
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(3, 1);
    e(c, 0) = 1;
    ad::Var col = tape.matvec(colors, tape.constant(e));  // n x 1
    channels.push_back(tape.sum(tape.mul(w, col)));
  }
  out.color = tape.concat(channels, 1);
  return out;
}

namespace {

RenderedPixel composite_values(const Eigen::VectorXd& sigmas,
                               const Eigen::MatrixX3d& colors,
                               const RaySampleSet& samples) {
  ad::Tape tape;
  ad::Var s = tape.constant(Eigen::MatrixXd(sigmas));
  ad::Var c = tape.constant(Eigen::MatrixXd(colors));
  ad::Var t = tape.constant(Eigen::MatrixXd(samples.ts));
  ad::Var d = tape.constant(Eigen::MatrixXd(samples.deltas));
  RenderedPixelVars v = composite(tape, s, c, t, d);
  RenderedPixel out;
  out.color = tape.val(v.color).row(0);
  out.depth = tape.scalar_val(v.depth);
  out.opacity = tape.scalar_val(v.opacity);
  return out;
}

}  // namespace

Eigen::Vector3d composite_color(const Eigen::VectorXd& sigmas,
                                const Eigen::MatrixX3d& colors,
                                const RaySampleSet& samples) {
  return composite_values(sigmas, colors, samples).color;
}

double composite_depth(const Eigen::VectorXd& sigmas, const RaySampleSet& samples) {
  Eigen::MatrixX3d colors = Eigen::MatrixX3d::Zero(sigmas.size(), 3);
  return composite_values(sigmas, colors, samples).depth;
}

double composite_depth_literal(const Eigen::VectorXd& sigmas,
                               const RaySampleSet& samples) {
  Eigen::MatrixX3d colors = Eigen::MatrixX3d::Zero(sigmas.size(), 3);
  return composite_values(sigmas, colors, samples).opacity;
}

std::vector<RenderedPixelVars> render_rays_on_tape(
    ad::Tape& tape, const FieldVars& field, const std::vector<RayVars>& rays,
    const std::vector<RaySampleSet>& samples) {
  if (rays.size() != samples.size())
    throw RenderError("render_rays: rays/samples count mismatch");
  size_t k = rays.size();
  std::vector<ad::Var> x_parts, dir_parts;
  x_parts.reserve(k);
  bool dirs = field.cfg->use_view_dirs;
  int total = 0;
  for (size_t i = 0; i < k; ++i) {
    int n = int(samples[i].ts.size());
    // x_j = o + t_j d as [1 | ts] * [o; d]
    ad::Var od = tape.concat({rays[i].origin, rays[i].dir}, 0);  // 2x3
    Eigen::MatrixXd lift(n, 2);
    lift.col(0).setOnes();
    lift.col(1) = samples[i].ts;
    x_parts.push_back(tape.matmul(tape.constant(lift), od));
    if (dirs) {
      ad::Var denc = encode_direction_on_tape(tape, rays[i].dir, field.cfg->l_dir);
      dir_parts.push_back(
          tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)), denc));
    }
    total += n;
  }
  (void)total;
  ad::Var x = k == 1 ? x_parts[0] : tape.concat(x_parts, 0);
  ad::Var denc_rows;
  if (dirs) denc_rows = k == 1 ? dir_parts[0] : tape.concat(dir_parts, 0);
  FieldOutput f = field_forward_rows(tape, field, x, denc_rows);

  std::vector<RenderedPixelVars> out;
  out.reserve(k);
  int off = 0;
  for (size_t i = 0; i < k; ++i) {
    int n = int(samples[i].ts.size());
    ad::Var sig = k == 1 ? f.sigma : tape.slice_rows(f.sigma, off, n);
    ad::Var col = k == 1 ? f.color : tape.slice_rows(f.color, off, n);
    ad::Var ts = tape.constant(Eigen::MatrixXd(samples[i].ts));
    ad::Var deltas = tape.constant(Eigen::MatrixXd(samples[i].deltas));
    out.push_back(composite(tape, sig, col, ts, deltas));
    off += n;
  }
  return out;
}

RenderedPixelVars render_ray_on_tape(ad::Tape& tape, const FieldVars& field,
                                     const RayVars& ray, const SamplingConfig& cfg,
                                     double prior_depth, double sigma_bar,
                                     int epoch, Rng& rng) {
  Strategy s = select_strategy(epoch, cfg);
  RaySampleSet samples = (s == Strategy::Tdbs)
                             ? sample_tdbs(prior_depth, cfg, sigma_bar, rng)
                             : sample_uniform(cfg, rng);
  return render_rays_on_tape(tape, field, {ray}, {samples})[0];
}

RenderedPixel render_ray(const FieldParams& field, const Ray& ray,
                         const SamplingConfig& cfg, double prior_depth,
                         double sigma_bar, int epoch, Rng& rng) {
  if (std::abs(ray.dir.norm() - 1.0) > 1e-6)
    throw RenderError("render_ray: direction must be unit length");
  ad::Tape tape;
  FieldVars f = field_leaves(tape, field, false);
  RayVars rv;
  rv.origin = tape.constant(Eigen::MatrixXd(ray.origin.transpose()));
  rv.dir = tape.constant(Eigen::MatrixXd(ray.dir.transpose()));
  RenderedPixelVars v =
      render_ray_on_tape(tape, f, rv, cfg, prior_depth, sigma_bar, epoch, rng);
  RenderedPixel out;
  out.color = tape.val(v.color).row(0);
  out.depth = tape.scalar_val(v.depth);
  out.opacity = tape.scalar_val(v.opacity);
  return out;
}

}  // namespace dgnerf
