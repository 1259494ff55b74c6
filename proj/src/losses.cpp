#include "dgnerf/losses.hpp"

#include <cmath>
#include <unordered_map>

#include "dgnerf/log.hpp"

namespace dgnerf {

namespace {

constexpr double kNormEps = 1e-12;

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// |x| as clamp_min(x,0) + clamp_min(-x,0): exact, and within the primitive set
ad::Var abs_on_tape(ad::Tape& tape, ad::Var x) {
  return tape.add(tape.clamp_min(x, 0.0), tape.clamp_min(tape.neg(x), 0.0));
}

// sqrt(d2 + eps^2) - eps: exact zero at zero distance, finite gradient,
// error bounded by eps elsewhere
ad::Var safe_norm_from_sq(ad::Tape& tape, ad::Var d2) {
  const auto& v = tape.val(d2);
  ad::Var shifted = tape.add(d2, tape.constant(kNormEps * kNormEps));
  return tape.sub(tape.sqrt(shifted),
                  tape.constant(Eigen::MatrixXd::Constant(v.rows(), v.cols(), kNormEps)));
}

ad::Var replicate3(ad::Tape& tape, ad::Var col) {
  return tape.concat({col, col, col}, 1);
}

}  // namespace

double UndistortParams::s() const { return softplus(s_raw); }

UndistortParams UndistortParams::from_s(double s, double k) {
  if (!(s > 0.0)) throw LossError("undistort scale must be > 0");
  UndistortParams u;
  // inverse softplus; exact enough through the whole usable range
  u.s_raw = s > 30.0 ? s : std::log(std::expm1(s));
  u.k = k;
  return u;
}

void GpcConfig::validate() const {
  if (!(sigma_pc > 0.0)) throw LossError("gpc: sigma_pc must be > 0");
}

ad::Var loss_rgb_on_tape(ad::Tape& tape, ad::Var rendered,
                         const Eigen::MatrixX3d& target) {
  const auto& rv = tape.val(rendered);
  if (rv.rows() == 0) throw LossError("loss_rgb: empty batch");
  if (rv.rows() != target.rows() || rv.cols() != 3)
    throw LossError("loss_rgb: size mismatch");
  ad::Var residual = tape.sub(rendered, tape.constant(Eigen::MatrixXd(target)));
  ad::Var sq = tape.mul(residual, residual);
  return tape.mul(tape.sum(sq), tape.constant(1.0 / double(rv.size())));
}

double loss_rgb(const Eigen::MatrixX3d& rendered, const Eigen::MatrixX3d& target) {
  if (rendered.rows() == 0) throw LossError("loss_rgb: empty batch");
  if (rendered.rows() != target.rows()) throw LossError("loss_rgb: size mismatch");
  return (rendered - target).squaredNorm() / double(rendered.size());
}

ad::Var loss_self_depth_on_tape(ad::Tape& tape, ad::Var d_nerf,
                                const Eigen::VectorXd& d_prior, ad::Var s, ad::Var k,
                                const std::vector<uint8_t>& mask, bool l1) {
  const auto& dv = tape.val(d_nerf);
  if (dv.cols() != 1 || dv.rows() != d_prior.size() ||
      mask.size() != size_t(d_prior.size()))
    throw LossError("loss_self_depth: size mismatch");
  Eigen::VectorXd mask_d(d_prior.size());
  int count = 0;
  for (Eigen::Index i = 0; i < d_prior.size(); ++i) {
    mask_d[i] = mask[size_t(i)] ? 1.0 : 0.0;
    count += mask[size_t(i)] ? 1 : 0;
  }
  if (count == 0) {
    log::warn("loss_self_depth: empty mask, no depth signal in this batch");
    return tape.constant(0.0);
  }
  ad::Var undist = tape.add(tape.mul(tape.constant(Eigen::MatrixXd(d_prior)), s), k);
  ad::Var residual = tape.sub(undist, d_nerf);
  ad::Var per = l1 ? abs_on_tape(tape, residual) : tape.mul(residual, residual);
  ad::Var masked = tape.mul(per, tape.constant(Eigen::MatrixXd(mask_d)));
  return tape.mul(tape.sum(masked), tape.constant(1.0 / count));
}

double loss_self_depth(const Eigen::VectorXd& d_nerf, const Eigen::VectorXd& d_prior,
                       const UndistortParams& u, const std::vector<uint8_t>& mask,
                       bool l1) {
  if (d_nerf.size() != d_prior.size() || mask.size() != size_t(d_prior.size()))
    throw LossError("loss_self_depth: size mismatch");
  double acc = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < d_nerf.size(); ++i) {
    if (!mask[size_t(i)]) continue;
    double r = u.s() * d_prior[i] + u.k - d_nerf[i];
    acc += l1 ? std::abs(r) : r * r;
    ++count;
  }
  if (count == 0) {
    log::warn("loss_self_depth: empty mask, no depth signal in this batch");
    return 0.0;
  }
  return acc / count;
}

double gaussian_weight(const Eigen::Vector3d& p_i, const Eigen::Vector3d& p_j,
                       double sigma_pc) {
  if (!(sigma_pc > 0.0)) throw LossError("gaussian_weight: sigma_pc must be > 0");
  return std::exp(-(p_i - p_j).squaredNorm() / (2.0 * sigma_pc * sigma_pc));
}

std::vector<int> nearest_neighbors_brute(const Eigen::MatrixX3d& from,
                                         const Eigen::MatrixX3d& to) {
  if (to.rows() == 0 || from.rows() == 0) throw LossError("nearest neighbors: empty cloud");
  std::vector<int> idx(size_t(from.rows()));
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index j = 0; j < to.rows(); ++j) {
      double d2 = (from.row(i) - to.row(j)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = int(j);
      }
    }
    idx[size_t(i)] = arg;
  }
  return idx;
}

namespace {

int64_t cell_key(int64_t ix, int64_t iy, int64_t iz) {
  // 21 bits per axis with offset; desk-scale clouds never leave this range
  const int64_t off = 1 << 20;
  return ((ix + off) << 42) | ((iy + off) << 21) | (iz + off);
}

}  // namespace

std::vector<int> nearest_neighbors_grid(const Eigen::MatrixX3d& from,
                                        const Eigen::MatrixX3d& to) {
  if (to.rows() == 0 || from.rows() == 0) throw LossError("nearest neighbors: empty cloud");
  Eigen::Vector3d lo = to.colwise().minCoeff();
  Eigen::Vector3d hi = to.colwise().maxCoeff();
  double diag = (hi - lo).norm();
  double cell = std::max(diag / std::cbrt(double(to.rows())), 1e-9);

  std::unordered_map<int64_t, std::vector<int>> grid;
  grid.reserve(size_t(to.rows()) * 2);
  auto cell_of = [&](const Eigen::RowVector3d& p, int64_t& ix, int64_t& iy, int64_t& iz) {
    ix = int64_t(std::floor((p.x() - lo.x()) / cell));
    iy = int64_t(std::floor((p.y() - lo.y()) / cell));
    iz = int64_t(std::floor((p.z() - lo.z()) / cell));
  };
  for (Eigen::Index j = 0; j < to.rows(); ++j) {
    int64_t ix, iy, iz;
    cell_of(to.row(j), ix, iy, iz);
    grid[cell_key(ix, iy, iz)].push_back(int(j));
  }

  std::vector<int> result(size_t(from.rows()));
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    int64_t cx, cy, cz;
    cell_of(from.row(i), cx, cy, cz);
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int64_t r = 0;; ++r) {
      // ring r exhausted once even its nearest possible point is too far
      if (arg >= 0) {
        double ring_min = (double(r) - 1.0) * cell;
        if (ring_min > 0.0 && ring_min * ring_min > best) break;
      }
      for (int64_t dx = -r; dx <= r; ++dx)
        for (int64_t dy = -r; dy <= r; ++dy)
          for (int64_t dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            auto it = grid.find(cell_key(cx + dx, cy + dy, cz + dz));
            if (it == grid.end()) continue;
            for (int j : it->second) {
              double d2 = (from.row(i) - to.row(j)).squaredNorm();
              if (d2 < best) {
                best = d2;
                arg = j;
              }
            }
          }
      if (r > int64_t(diag / cell) + 2) break;  // all occupied cells visited
    }
    if (arg < 0) return nearest_neighbors_brute(from, to);  // query far off-grid
    result[size_t(i)] = arg;
  }
  return result;
}

namespace {

// direction term of the point constraint: mean_i f(dist(from_i, to_nn(i)))
ad::Var directed_point_term(ad::Tape& tape, ad::Var from, ad::Var to, double sigma_pc,
                            bool gaussian) {
  const auto& fv = tape.val(from);
  const auto& tv = tape.val(to);
  std::vector<int> nn = nearest_neighbors_grid(fv, tv);
  Eigen::MatrixXd select = Eigen::MatrixXd::Zero(fv.rows(), tv.rows());
  for (Eigen::Index i = 0; i < fv.rows(); ++i) select(i, nn[size_t(i)]) = 1.0;

  ad::Var matched = tape.matmul(tape.constant(select), to);
  ad::Var diff = tape.sub(from, matched);
  ad::Var d2 = tape.matvec(tape.mul(diff, diff), tape.constant(Eigen::MatrixXd::Ones(3, 1)));
  ad::Var dist = safe_norm_from_sq(tape, d2);
  ad::Var per = dist;
  if (gaussian) {
    ad::Var w = tape.exp(tape.neg(tape.mul(d2, tape.constant(1.0 / (2.0 * sigma_pc * sigma_pc)))));
    per = tape.mul(w, dist);
  }
  return tape.mul(tape.sum(per), tape.constant(1.0 / double(fv.rows())));
}

void check_cloud(const ad::Tape& tape, ad::Var cloud, const char* who) {
  if (!cloud.valid()) throw LossError(std::string(who) + ": empty cloud");
  const auto& v = tape.val(cloud);
  if (v.rows() == 0 || v.cols() != 3)
    throw LossError(std::string(who) + ": cloud must be n x 3 and non-empty");
}

}  // namespace

ad::Var loss_gpc_on_tape(ad::Tape& tape, ad::Var cloud_m, ad::Var cloud_n,
                         const GpcConfig& cfg) {
  cfg.validate();
  check_cloud(tape, cloud_m, "loss_gpc");
  check_cloud(tape, cloud_n, "loss_gpc");
  ad::Var fwd = directed_point_term(tape, cloud_m, cloud_n, cfg.sigma_pc, true);
  if (!cfg.bidirectional) return fwd;
  ad::Var bwd = directed_point_term(tape, cloud_n, cloud_m, cfg.sigma_pc, true);
  return tape.mul(tape.add(fwd, bwd), tape.constant(0.5));
}

double loss_gpc(const PointCloud& cloud_m, const PointCloud& cloud_n,
                const GpcConfig& cfg) {
  ad::Tape tape;
  ad::Var a = tape.constant(Eigen::MatrixXd(cloud_m.points));
  ad::Var b = tape.constant(Eigen::MatrixXd(cloud_n.points));
  return tape.scalar_val(loss_gpc_on_tape(tape, a, b, cfg));
}

ad::Var loss_chamfer_on_tape(ad::Tape& tape, ad::Var cloud_m, ad::Var cloud_n) {
  check_cloud(tape, cloud_m, "loss_chamfer");
  check_cloud(tape, cloud_n, "loss_chamfer");
  ad::Var fwd = directed_point_term(tape, cloud_m, cloud_n, 1.0, false);
  ad::Var bwd = directed_point_term(tape, cloud_n, cloud_m, 1.0, false);
  return tape.mul(tape.add(fwd, bwd), tape.constant(0.5));
}

double loss_chamfer(const PointCloud& cloud_m, const PointCloud& cloud_n) {
  ad::Tape tape;
  ad::Var a = tape.constant(Eigen::MatrixXd(cloud_m.points));
  ad::Var b = tape.constant(Eigen::MatrixXd(cloud_n.points));
  return tape.scalar_val(loss_chamfer_on_tape(tape, a, b));
}

TapeCloud build_prior_cloud_on_tape(ad::Tape& tape, const CameraIntrinsics& K,
                                    ad::Var rot_transpose, ad::Var t_col,
                                    const DepthMap& prior, ad::Var s, ad::Var k,
                                    int stride, double min_depth, const Image* image) {
  TapeCloud out;
  double sv = tape.scalar_val(s), kv = tape.scalar_val(k);
  std::vector<double> prior_vals;
  std::vector<Eigen::Vector3d> cams;
  for (int y = 0; y < prior.height; y += stride)
    for (int x = 0; x < prior.width; x += stride) {
      double und = sv * prior.at(x, y) + kv;
      if (!(und > min_depth)) continue;
      prior_vals.push_back(prior.at(x, y));
      cams.emplace_back((x + 0.5 - K.cx) / K.fx, (y + 0.5 - K.cy) / K.fy, 1.0);
      out.pixel_ids.push_back(y * prior.width + x);
    }
  if (prior_vals.empty()) return out;  // points stays invalid; caller decides

  Eigen::Index n = Eigen::Index(prior_vals.size());
  Eigen::MatrixXd d_cams(n, 3);
  Eigen::MatrixXd prior_col(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    d_cams.row(i) = cams[size_t(i)];
    prior_col(i, 0) = prior_vals[size_t(i)];
  }
  ad::Var raw_dirs = tape.matmul(tape.constant(d_cams), rot_transpose);  // n x 3
  ad::Var sq = tape.mul(raw_dirs, raw_dirs);
  ad::Var norm2 = tape.matvec(sq, tape.constant(Eigen::MatrixXd::Ones(3, 1)));
  ad::Var inv = tape.power(norm2, -0.5);
  ad::Var unit = tape.mul(raw_dirs, replicate3(tape, inv));
  ad::Var depth = tape.add(tape.mul(tape.constant(prior_col), s), k);
  ad::Var scaled = tape.mul(unit, replicate3(tape, depth));
  ad::Var t_rows = tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)),
                               as_row3(tape, t_col));
  out.points = tape.add(scaled, t_rows);

  if (image) {
    out.colors.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      int pid = out.pixel_ids[size_t(i)];
      out.colors.row(i) = image->pixel(pid % prior.width, pid / prior.width);
    }
  }
  return out;
}

ReprojTerm loss_reproj_on_tape(ad::Tape& tape, ad::Var cloud_m,
                               const Eigen::MatrixX3d& colors_m, const Image& image_n,
                               const CameraIntrinsics& K, ad::Var rot_n, ad::Var t_n) {
  check_cloud(tape, cloud_m, "loss_reproj");
  const auto& pts = tape.val(cloud_m);
  Eigen::Index n = pts.rows();
  if (colors_m.rows() != n) throw LossError("loss_reproj: colors/cloud size mismatch");

  // camera-n coordinates as rows: (R_n^T (x - t_n))^T = (x - t_n)^T R_n
  ad::Var t_rows = tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)),
                               as_row3(tape, t_n));
  ad::Var x_rel = tape.sub(cloud_m, t_rows);
  ad::Var x_cam = tape.matmul(x_rel, rot_n);

  auto col = [&](int c) {
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(3, 1);
    e(c, 0) = 1;
    return tape.matvec(x_cam, tape.constant(e));
  };
  ad::Var xc = col(0), yc = col(1), zc = col(2);
  ad::Var z_safe = tape.clamp_min(zc, 1e-9);
  ad::Var u = tape.add(tape.mul(tape.div(xc, z_safe), tape.constant(K.fx)),
                       tape.constant(K.cx - 0.5));
  ad::Var v = tape.add(tape.mul(tape.div(yc, z_safe), tape.constant(K.fy)),
                       tape.constant(K.cy - 0.5));

  // validity and bilinear corners from forward values; fixed per evaluation
  const auto& uv = tape.val(u);
  const auto& vv = tape.val(v);
  const auto& zv = tape.val(zc);
  Eigen::MatrixXd u0(n, 1), v0(n, 1), mask(n, 1);
  Eigen::MatrixXd c00(n, 3), c10(n, 3), c01(n, 3), c11(n, 3);
  c00.setZero();
  c10.setZero();
  c01.setZero();
  c11.setZero();
  int n_valid = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool ok = zv(i, 0) > 1e-9 && uv(i, 0) >= 0.0 && uv(i, 0) <= K.width - 1.000001 &&
              vv(i, 0) >= 0.0 && vv(i, 0) <= K.height - 1.000001;
    mask(i, 0) = ok ? 1.0 : 0.0;
    double fu0 = ok ? std::floor(uv(i, 0)) : 0.0;
    double fv0 = ok ? std::floor(vv(i, 0)) : 0.0;
    u0(i, 0) = fu0;
    v0(i, 0) = fv0;
    if (ok) {
      int xi = int(fu0), yi = int(fv0);
      c00.row(i) = image_n.pixel(xi, yi);
      c10.row(i) = image_n.pixel(xi + 1, yi);
      c01.row(i) = image_n.pixel(xi, yi + 1);
      c11.row(i) = image_n.pixel(xi + 1, yi + 1);
      ++n_valid;
    }
  }
  ReprojTerm term;
  term.n_valid = n_valid;
  if (n_valid == 0) {
    log::warn("loss_reproj: no valid reprojected points in this pair");
    term.loss = tape.constant(0.0);
    return term;
  }

  ad::Var ones = tape.constant(Eigen::MatrixXd::Ones(n, 1));
  ad::Var fu = tape.sub(u, tape.constant(u0));
  ad::Var fv = tape.sub(v, tape.constant(v0));
  ad::Var gu = tape.sub(ones, fu);
  ad::Var gv = tape.sub(ones, fv);
  auto lerp_term = [&](ad::Var wu, ad::Var wv, const Eigen::MatrixXd& corner) {
    return tape.mul(replicate3(tape, tape.mul(wu, wv)), tape.constant(corner));
  };
  ad::Var sampled = tape.add(tape.add(lerp_term(gu, gv, c00), lerp_term(fu, gv, c10)),
                             tape.add(lerp_term(gu, fv, c01), lerp_term(fu, fv, c11)));
  ad::Var residual = tape.sub(sampled, tape.constant(Eigen::MatrixXd(colors_m)));
  ad::Var absr = tape.add(tape.clamp_min(residual, 0.0),
                          tape.clamp_min(tape.neg(residual), 0.0));
  ad::Var masked = tape.mul(absr, replicate3(tape, tape.constant(mask)));
  term.loss = tape.mul(tape.sum(masked), tape.constant(1.0 / (3.0 * n_valid)));
  return term;
}

double loss_reproj(const Image& image_m, const Image& image_n, const DepthMap& depth_m,
                   const CameraIntrinsics& K, const PoseSE3& pose_m,
                   const PoseSE3& pose_n, int stride) {
  if (image_m.width != image_n.width || image_m.height != image_n.height)
    throw LossError("loss_reproj: image sizes differ");
  ad::Tape tape;
  PoseVars pm = pose_leaves(tape, pose_m, false);
  PoseVars pn = pose_leaves(tape, pose_n, false);
  RotationVars rm = rotation_pair_on_tape(tape, pm.omega);
  RotationVars rn = rotation_pair_on_tape(tape, pn.omega);
  ad::Var s = tape.constant(1.0), k = tape.constant(0.0);
  TapeCloud cloud = build_prior_cloud_on_tape(tape, K, rm.Rt, pm.t, depth_m, s, k,
                                              stride, 0.0, &image_m);
  if (!cloud.points.valid()) throw LossError("loss_reproj: no supervised depth pixels");
  ReprojTerm term =
      loss_reproj_on_tape(tape, cloud.points, cloud.colors, image_n, K, rn.R, pn.t);
  return tape.scalar_val(term.loss);
}

ad::Var total_loss_on_tape(ad::Tape& tape, ad::Var rgb, ad::Var self_depth,
                           ad::Var gpc, ad::Var reproj, const LossWeights& w) {
  auto check = [&](ad::Var v, const char* name) {
    if (!std::isfinite(tape.scalar_val(v)))
      throw LossError(std::string("total_loss: non-finite component ") + name);
  };
  check(rgb, "l_rgb");
  check(self_depth, "l_self_depth");
  check(gpc, "l_gpc");
  check(reproj, "l_reproj");
  ad::Var acc = rgb;
  acc = tape.add(acc, tape.mul(self_depth, tape.constant(w.lambda1)));
  acc = tape.add(acc, tape.mul(gpc, tape.constant(w.lambda2)));
  acc = tape.add(acc, tape.mul(reproj, tape.constant(w.lambda3)));
  return acc;
}

double total_loss(double rgb, double self_depth, double gpc, double reproj,
                  const LossWeights& w) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw LossError(std::string("total_loss: non-finite component ") + name);
  };
  check(rgb, "l_rgb");
  check(self_depth, "l_self_depth");
  check(gpc, "l_gpc");
  check(reproj, "l_reproj");
  return rgb + w.lambda1 * self_depth + w.lambda2 * gpc + w.lambda3 * reproj;
}

}  // namespace dgnerf
