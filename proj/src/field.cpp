#include "dgnerf/field.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dgnerf/rng.hpp"

namespace dgnerf {

int encoding_dim(int L) { return 3 + 6 * L; }

Eigen::VectorXd positional_encoding(const Eigen::Vector3d& v, int L) {
  if (L < 0) throw FieldError("positional_encoding: L must be >= 0");
  Eigen::VectorXd out(encoding_dim(L));
  out.head<3>() = v;
  int o = 3;
  for (int k = 0; k < L; ++k) {
    double f = std::pow(2.0, k) * M_PI;
    for (int c = 0; c < 3; ++c) out[o++] = std::sin(f * v[c]);
    for (int c = 0; c < 3; ++c) out[o++] = std::cos(f * v[c]);
  }
  return out;
}

ad::Var positional_encoding_on_tape(ad::Tape& tape, ad::Var x, int L) {
  if (L < 0) throw FieldError("positional_encoding: L must be >= 0");
  std::vector<ad::Var> parts;
  parts.push_back(x);
  for (int k = 0; k < L; ++k) {
    double f = std::pow(2.0, k) * M_PI;
    ad::Var scaled = tape.mul(x, tape.constant(f));
    parts.push_back(tape.sin(scaled));
    parts.push_back(tape.cos(scaled));
  }
  return tape.concat(parts, 1);
}

ad::Var encode_direction_on_tape(ad::Tape& tape, ad::Var dir_row, int L) {
  return positional_encoding_on_tape(tape, dir_row, L);
}

namespace {

// layer sizes in order: trunk layers, sigma head, color hidden, color out
std::vector<std::pair<int, int>> layer_shapes(const FieldConfig& cfg) {
  std::vector<std::pair<int, int>> s;
  int in = encoding_dim(cfg.l_pos);
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    s.emplace_back(in, cfg.hidden_width);
    in = cfg.hidden_width;
  }
  s.emplace_back(cfg.hidden_width, 1);  // sigma
  int color_in = cfg.hidden_width + (cfg.use_view_dirs ? encoding_dim(cfg.l_dir) : 0);
  s.emplace_back(color_in, cfg.hidden_width);  // color hidden
  s.emplace_back(cfg.hidden_width, 3);         // color out
  return s;
}

}  // namespace

FieldParams FieldParams::init(const FieldConfig& cfg, uint64_t seed) {
  FieldParams p;
  p.cfg = cfg;
  Rng rng(Rng::mix(seed, 0xf1e1d));
  auto shapes = layer_shapes(cfg);
  for (auto [fan_in, fan_out] : shapes) {
    double s = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-s, s);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  // faint initial fog: enough density for gradients to reach every depth,
  // but below the depth-loss opacity mask until real surfaces form (an
  // opaque start renders systematically short depths and drags the
  // undistortion scale down with it)
  p.biases[size_t(cfg.hidden_layers)][0] = -2.0;
  return p;
}

size_t FieldParams::parameter_count() const {
  size_t n = 0;
  for (const auto& w : weights) n += size_t(w.size());
  for (const auto& b : biases) n += size_t(b.size());
  return n;
}

bool FieldParams::operator==(const FieldParams& o) const {
  if (cfg.hidden_layers != o.cfg.hidden_layers || cfg.hidden_width != o.cfg.hidden_width ||
      cfg.l_pos != o.cfg.l_pos || cfg.l_dir != o.cfg.l_dir ||
      cfg.use_view_dirs != o.cfg.use_view_dirs)
    return false;
  if (weights.size() != o.weights.size()) return false;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != o.weights[i].rows() || weights[i].cols() != o.weights[i].cols())
      return false;
    if ((weights[i].array() != o.weights[i].array()).any()) return false;
    if ((biases[i].array() != o.biases[i].array()).any()) return false;
  }
  return true;
}

void FieldParams::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw FieldError("cannot open for write: " + path);
  f << "dgnerf-field 1\n";
  f << cfg.hidden_layers << " " << cfg.hidden_width << " " << cfg.l_pos << " "
    << cfg.l_dir << " " << (cfg.use_view_dirs ? 1 : 0) << "\n";
  f << weights.size() << "\n";
  char num[40];
  for (size_t i = 0; i < weights.size(); ++i) {
    const auto& w = weights[i];
    f << w.rows() << " " << w.cols() << "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        std::snprintf(num, sizeof(num), "%.17g", w(r, c));
        f << num << (c + 1 == w.cols() ? "" : " ");
      }
      f << "\n";
    }
    for (Eigen::Index r = 0; r < biases[i].size(); ++r) {
      std::snprintf(num, sizeof(num), "%.17g", biases[i][r]);
      f << num << (r + 1 == biases[i].size() ? "" : " ");
    }
    f << "\n";
  }
}

FieldParams FieldParams::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FieldError("cannot open: " + path);
  std::string magic;
  int version;
  f >> magic >> version;
  if (magic != "dgnerf-field" || version != 1)
    throw FieldError("not a field checkpoint: " + path);
  FieldParams p;
  int uvd;
  f >> p.cfg.hidden_layers >> p.cfg.hidden_width >> p.cfg.l_pos >> p.cfg.l_dir >> uvd;
  p.cfg.use_view_dirs = uvd != 0;
  size_t n_layers;
  f >> n_layers;
  for (size_t i = 0; i < n_layers; ++i) {
    Eigen::Index rows, cols;
    f >> rows >> cols;
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) f >> w(r, c);
    Eigen::VectorXd b(cols);
    for (Eigen::Index r = 0; r < cols; ++r) f >> b[r];
    if (!f) throw FieldError("truncated field checkpoint: " + path);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

FieldVars field_leaves(ad::Tape& tape, const FieldParams& params, bool trainable) {
  FieldVars f;
  f.cfg = &params.cfg;
  for (size_t i = 0; i < params.weights.size(); ++i) {
    if (trainable) {
      f.weights.push_back(tape.leaf(params.weights[i]));
      f.biases.push_back(tape.leaf(Eigen::MatrixXd(params.biases[i].transpose())));
    } else {
      f.weights.push_back(tape.constant(params.weights[i]));
      f.biases.push_back(tape.constant(Eigen::MatrixXd(params.biases[i].transpose())));
    }
  }
  return f;
}

namespace {

ad::Var linear(ad::Tape& tape, ad::Var x, ad::Var w, ad::Var b_row, ad::Var) {
  return tape.affine(x, w, b_row);
}

void check_finite(ad::Tape& tape, ad::Var v, int layer_index) {
  if (!tape.val(v).allFinite())
    throw FieldError("non-finite activation at layer " + std::to_string(layer_index));
}

}  // namespace

FieldOutput field_forward_rows(ad::Tape& tape, const FieldVars& f, ad::Var x,
                               ad::Var dir_encoded_rows) {
  const FieldConfig& cfg = *f.cfg;
  Eigen::Index n = tape.val(x).rows();
  ad::Var ones_col = tape.constant(Eigen::MatrixXd::Ones(n, 1));

  ad::Var h = positional_encoding_on_tape(tape, x, cfg.l_pos);
  int li = 0;
  for (int i = 0; i < cfg.hidden_layers; ++i, ++li) {
    h = tape.softplus(linear(tape, h, f.weights[size_t(li)], f.biases[size_t(li)], ones_col));
    check_finite(tape, h, li);
  }
  ad::Var sigma = tape.softplus(
      linear(tape, h, f.weights[size_t(li)], f.biases[size_t(li)], ones_col));
  check_finite(tape, sigma, li);
  ++li;

  ad::Var cin = h;
  if (cfg.use_view_dirs) cin = tape.concat({h, dir_encoded_rows}, 1);
  ad::Var ch = tape.softplus(
      linear(tape, cin, f.weights[size_t(li)], f.biases[size_t(li)], ones_col));
  check_finite(tape, ch, li);
  ++li;
  ad::Var color = tape.sigmoid(
      linear(tape, ch, f.weights[size_t(li)], f.biases[size_t(li)], ones_col));
  check_finite(tape, color, li);
  return {sigma, color};
}

FieldOutput field_forward_batch(ad::Tape& tape, const FieldVars& f, ad::Var x,
                                ad::Var dir_encoded) {
  ad::Var dir_rows;
  if (f.cfg->use_view_dirs) {
    Eigen::Index n = tape.val(x).rows();
    dir_rows = tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)), dir_encoded);
  }
  return field_forward_rows(tape, f, x, dir_rows);
}

std::pair<Eigen::Vector3d, double> field_forward(const FieldParams& params,
                                                 const Eigen::Vector3d& x,
                                                 const Eigen::Vector3d& d) {
  if (std::abs(d.norm() - 1.0) > 1e-6)
    throw FieldError("field_forward: direction must be unit length");
  ad::Tape tape;
  FieldVars f = field_leaves(tape, params, false);
  ad::Var xv = tape.constant(Eigen::MatrixXd(x.transpose()));
  ad::Var dv = tape.constant(Eigen::MatrixXd(d.transpose()));
  ad::Var denc = encode_direction_on_tape(tape, dv, params.cfg.l_dir);
  FieldOutput out = field_forward_batch(tape, f, xv, denc);
  Eigen::Vector3d c = tape.val(out.color).row(0);
  return {c, tape.val(out.sigma)(0, 0)};
}

}  // namespace dgnerf
