#include "dgnerf/autodiff.hpp"

#include <cmath>

namespace dgnerf::ad {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_fail(Op op, const Mat& a, const Mat& b) {
  throw ShapeError(std::string("shape mismatch in ") + op_name(op) + ": " +
                   shape_str(a) + " vs " + shape_str(b));
}

bool is_scalar(const Mat& m) { return m.rows() == 1 && m.cols() == 1; }

double softplus_scalar(double x) {
  // overflow-safe: max(x,0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Power: return "power";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sum: return "sum";
    case Op::MatVec: return "matvec";
    case Op::MatMul: return "matmul";
    case Op::Concat: return "concat";
    case Op::ClampMin: return "clamp_min";
    case Op::CumSum: return "cumsum";
    case Op::SliceRows: return "slice_rows";
    case Op::Affine: return "affine";
  }
  return "?";
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || size_t(v.id) >= nodes_.size())
    throw std::runtime_error("invalid Var handle");
  return nodes_[size_t(v.id)];
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || size_t(v.id) >= nodes_.size())
    throw std::runtime_error("invalid Var handle");
  return nodes_[size_t(v.id)];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{int32_t(nodes_.size() - 1)};
}

Var Tape::leaf(Mat v) {
  Node n;
  n.op = Op::Leaf;
  n.requires_grad = true;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::constant(Mat v) {
  Node n;
  n.op = Op::Leaf;
  n.requires_grad = false;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::unary(Op op, Var a, double aux) {
  const Node& na = node(a);
  Node n;
  n.op = op;
  n.a = a.id;
  n.aux = aux;
  n.requires_grad = na.requires_grad;
  const Mat& x = na.value;
  switch (op) {
    case Op::Neg: n.value = -x; break;
    case Op::Exp: n.value = x.array().exp(); break;
    case Op::Log: n.value = x.array().log(); break;
    case Op::Sqrt: n.value = x.array().sqrt(); break;
    case Op::Sin: n.value = x.array().sin(); break;
    case Op::Cos: n.value = x.array().cos(); break;
    case Op::Power: n.value = x.array().pow(aux); break;
    case Op::Softplus:
      // vectorized max(x,0) + log1p(exp(-|x|))
      n.value = x.array().max(0.0) + (-x.array().abs()).exp().log1p();
      break;
    case Op::Sigmoid: n.value = x.array().logistic(); break;
    case Op::ClampMin: n.value = x.array().max(aux); break;
    case Op::Sum: n.value = scalar(x.sum()); break;
    case Op::CumSum: {
      if (x.cols() != 1) throw ShapeError("cumsum expects a column vector, got " + shape_str(x));
      Mat out(x.rows(), 1);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out(i, 0) = acc;
        acc += x(i, 0);
      }
      n.value = std::move(out);
      break;
    }
    default: throw std::runtime_error("unary: bad op");
  }
  return push(std::move(n));
}

Var Tape::binary_elementwise(Op op, Var a, Var b) {
  const Mat& x = node(a).value;
  const Mat& y = node(b).value;
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;

  auto apply = [&](const Mat& u, const Mat& v) -> Mat {
    switch (op) {
      case Op::Add: return u + v;
      case Op::Sub: return u - v;
      case Op::Mul: return u.cwiseProduct(v);
      case Op::Div: return u.cwiseQuotient(v);
      default: throw std::runtime_error("binary: bad op");
    }
  };

  if (x.rows() == y.rows() && x.cols() == y.cols()) {
    n.value = apply(x, y);
  } else if (is_scalar(y)) {
    Mat yb = Mat::Constant(x.rows(), x.cols(), y(0, 0));
    n.value = apply(x, yb);
  } else if (is_scalar(x)) {
    Mat xb = Mat::Constant(y.rows(), y.cols(), x(0, 0));
    n.value = apply(xb, y);
  } else {
    shape_fail(op, x, y);
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary_elementwise(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary_elementwise(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary_elementwise(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary_elementwise(Op::Div, a, b); }
Var Tape::neg(Var a) { return unary(Op::Neg, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::log(Var a) { return unary(Op::Log, a); }
Var Tape::sqrt(Var a) { return unary(Op::Sqrt, a); }
Var Tape::sin(Var a) { return unary(Op::Sin, a); }
Var Tape::cos(Var a) { return unary(Op::Cos, a); }
Var Tape::power(Var a, double exponent) { return unary(Op::Power, a, exponent); }
Var Tape::softplus(Var a) { return unary(Op::Softplus, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::sum(Var a) { return unary(Op::Sum, a); }
Var Tape::clamp_min(Var a, double floor) { return unary(Op::ClampMin, a, floor); }
Var Tape::cumsum_exclusive(Var a) { return unary(Op::CumSum, a); }

Var Tape::slice_rows(Var a, int offset, int rows) {
  const Mat& x = node(a).value;
  if (offset < 0 || rows < 1 || offset + rows > x.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + rows) + ") outside " + shape_str(x));
  Node n;
  n.op = Op::SliceRows;
  n.a = a.id;
  n.requires_grad = node(a).requires_grad;
  n.extra = {offset, rows};
  n.value = x.middleRows(offset, rows);
  return push(std::move(n));
}

Var Tape::affine(Var x, Var w, Var bias_row) {
  const Mat& xv = node(x).value;
  const Mat& wv = node(w).value;
  const Mat& bv = node(bias_row).value;
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols())
    throw ShapeError("affine: incompatible shapes " + shape_str(xv) + " * " +
                     shape_str(wv) + " + " + shape_str(bv));
  Node n;
  n.op = Op::Affine;
  n.a = x.id;
  n.b = w.id;
  n.extra = {bias_row.id};
  n.requires_grad =
      node(x).requires_grad || node(w).requires_grad || node(bias_row).requires_grad;
  n.value.noalias() = xv * wv;
  n.value.rowwise() += bv.row(0);
  return push(std::move(n));
}

Var Tape::matvec(Var m, Var v) {
  const Mat& a = node(m).value;
  const Mat& b = node(v).value;
  if (b.cols() != 1 || a.cols() != b.rows()) shape_fail(Op::MatVec, a, b);
  Node n;
  n.op = Op::MatVec;
  n.a = m.id;
  n.b = v.id;
  n.requires_grad = node(m).requires_grad || node(v).requires_grad;
  n.value.noalias() = a * b;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Mat& x = node(a).value;
  const Mat& y = node(b).value;
  if (x.cols() != y.rows()) shape_fail(Op::MatMul, x, y);
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value.noalias() = x * y;
  return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero parts");
  if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
  Eigen::Index rows = node(parts[0]).value.rows();
  Eigen::Index cols = node(parts[0]).value.cols();
  Eigen::Index total = (axis == 0) ? rows : cols;
  bool rg = node(parts[0]).requires_grad;
  for (size_t i = 1; i < parts.size(); ++i) {
    const Mat& m = node(parts[i]).value;
    if (axis == 0) {
      if (m.cols() != cols) shape_fail(Op::Concat, node(parts[0]).value, m);
      total += m.rows();
    } else {
      if (m.rows() != rows) shape_fail(Op::Concat, node(parts[0]).value, m);
      total += m.cols();
    }
    rg = rg || node(parts[i]).requires_grad;
  }
  Node n;
  n.op = Op::Concat;
  n.axis = uint8_t(axis);
  n.requires_grad = rg;
  n.extra.reserve(parts.size());
  for (Var p : parts) n.extra.push_back(p.id);
  if (axis == 0) {
    n.value.resize(total, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      const Mat& m = node(p).value;
      n.value.middleRows(r, m.rows()) = m;
      r += m.rows();
    }
  } else {
    n.value.resize(rows, total);
    Eigen::Index c = 0;
    for (Var p : parts) {
      const Mat& m = node(p).value;
      n.value.middleCols(c, m.cols()) = m;
      c += m.cols();
    }
  }
  return push(std::move(n));
}

double Tape::scalar_val(Var v) const {
  const Mat& m = node(v).value;
  if (!is_scalar(m)) throw ShapeError("expected a scalar, got " + shape_str(m));
  return m(0, 0);
}

const Mat& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0)
    throw std::runtime_error("grad not populated; run backward() first");
  return n.grad;
}

Mat Tape::grad_or_zero(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int32_t id, const Mat& g) {
  Node& n = nodes_[size_t(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  if (g.rows() == n.value.rows() && g.cols() == n.value.cols()) {
    n.grad += g;
  } else if (is_scalar(n.value)) {
    n.grad(0, 0) += g.sum();  // broadcasted scalar operand
  } else {
    throw ShapeError("gradient shape mismatch");
  }
}

void Tape::backward_node(int32_t id) {
  Node& n = nodes_[size_t(id)];
  if (n.grad.size() == 0) return;  // no downstream use
  const Mat& g = n.grad;
  auto in = [&](int32_t i) -> const Mat& { return nodes_[size_t(i)].value; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case Op::Sub:
      accumulate(n.a, g);
      accumulate(n.b, -g);
      break;
    case Op::Mul: {
      const Mat& x = in(n.a);
      const Mat& y = in(n.b);
      if (nodes_[size_t(n.a)].requires_grad) {
        if (is_scalar(y))
          accumulate(n.a, Mat(g * y(0, 0)));
        else if (is_scalar(x))
          accumulate(n.a, Mat(scalar(g.cwiseProduct(y).sum())));
        else
          accumulate(n.a, Mat(g.cwiseProduct(y)));
      }
      if (nodes_[size_t(n.b)].requires_grad) {
        if (is_scalar(x))
          accumulate(n.b, Mat(g * x(0, 0)));
        else if (is_scalar(y))
          accumulate(n.b, Mat(scalar(g.cwiseProduct(x).sum())));
        else
          accumulate(n.b, Mat(g.cwiseProduct(x)));
      }
      break;
    }
    case Op::Div: {
      const Mat& x = in(n.a);
      const Mat& y = in(n.b);
      auto bcast = [&](const Mat& m, Eigen::Index r, Eigen::Index c) -> Mat {
        if (m.rows() == r && m.cols() == c) return m;
        return Mat::Constant(r, c, m(0, 0));
      };
      Eigen::Index r = n.value.rows(), c = n.value.cols();
      Mat xb = bcast(x, r, c), yb = bcast(y, r, c);
      if (nodes_[size_t(n.a)].requires_grad) {
        Mat gx = g.cwiseQuotient(yb);
        accumulate(n.a, is_scalar(x) && !is_scalar(n.value) ? Mat(scalar(gx.sum())) : gx);
      }
      if (nodes_[size_t(n.b)].requires_grad) {
        Mat gy = -g.cwiseProduct(xb).cwiseQuotient(yb.cwiseProduct(yb));
        accumulate(n.b, is_scalar(y) && !is_scalar(n.value) ? Mat(scalar(gy.sum())) : gy);
      }
      break;
    }
    case Op::Neg:
      accumulate(n.a, -g);
      break;
    case Op::Exp:
      accumulate(n.a, Mat(g.cwiseProduct(n.value)));
      break;
    case Op::Log:
      accumulate(n.a, Mat(g.cwiseQuotient(in(n.a))));
      break;
    case Op::Sqrt:
      accumulate(n.a, Mat(g.array() / (2.0 * n.value.array())));
      break;
    case Op::Sin:
      accumulate(n.a, Mat(g.array() * in(n.a).array().cos()));
      break;
    case Op::Cos:
      accumulate(n.a, Mat(-g.array() * in(n.a).array().sin()));
      break;
    case Op::Power:
      accumulate(n.a, Mat(g.array() * n.aux * in(n.a).array().pow(n.aux - 1.0)));
      break;
    case Op::Softplus:
      accumulate(n.a, Mat(g.array() * in(n.a).array().logistic()));
      break;
    case Op::Sigmoid:
      accumulate(n.a, Mat(g.array() * n.value.array() * (1.0 - n.value.array())));
      break;
    case Op::Sum:
      accumulate(n.a, Mat(Mat::Constant(in(n.a).rows(), in(n.a).cols(), g(0, 0))));
      break;
    case Op::ClampMin: {
      Mat mask = (in(n.a).array() > n.aux).cast<double>();
      accumulate(n.a, Mat(g.cwiseProduct(mask)));
      break;
    }
    case Op::CumSum: {
      // y_i = sum_{j<i} x_j  =>  dx_j = sum_{i>j} g_i
      const Mat& x = in(n.a);
      Mat gx(x.rows(), 1);
      double acc = 0.0;
      for (Eigen::Index i = x.rows() - 1; i >= 0; --i) {
        gx(i, 0) = acc;
        acc += g(i, 0);
      }
      accumulate(n.a, gx);
      break;
    }
    case Op::MatVec:
    case Op::MatMul: {
      const Mat& a = in(n.a);
      const Mat& b = in(n.b);
      if (nodes_[size_t(n.a)].requires_grad) {
        Mat ga;
        ga.noalias() = g * b.transpose();
        accumulate(n.a, ga);
      }
      if (nodes_[size_t(n.b)].requires_grad) {
        Mat gb;
        gb.noalias() = a.transpose() * g;
        accumulate(n.b, gb);
      }
      break;
    }
    case Op::Affine: {
      const Mat& x = in(n.a);
      const Mat& w = in(n.b);
      if (nodes_[size_t(n.a)].requires_grad) {
        Mat gx;
        gx.noalias() = g * w.transpose();
        accumulate(n.a, gx);
      }
      if (nodes_[size_t(n.b)].requires_grad) {
        Mat gw;
        gw.noalias() = x.transpose() * g;
        accumulate(n.b, gw);
      }
      if (nodes_[size_t(n.extra[0])].requires_grad)
        accumulate(n.extra[0], Mat(g.colwise().sum()));
      break;
    }
    case Op::SliceRows: {
      Node& src = nodes_[size_t(n.a)];
      if (!src.requires_grad) break;
      if (src.grad.size() == 0)
        src.grad = Mat::Zero(src.value.rows(), src.value.cols());
      src.grad.middleRows(n.extra[0], n.extra[1]) += g;
      break;
    }
    case Op::Concat: {
      Eigen::Index off = 0;
      for (int32_t pid : n.extra) {
        const Mat& part = nodes_[size_t(pid)].value;
        if (n.axis == 0) {
          accumulate(pid, Mat(g.middleRows(off, part.rows())));
          off += part.rows();
        } else {
          accumulate(pid, Mat(g.middleCols(off, part.cols())));
          off += part.cols();
        }
      }
      break;
    }
  }
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw ShapeError("backward root must be a scalar, got " + shape_str(r.value));
  for (Node& n : nodes_) n.grad.resize(0, 0);
  r.grad = scalar(1.0);
  for (int32_t id = root.id; id >= 0; --id) backward_node(id);
}

double finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& at,
                         const Eigen::VectorXd& analytic_grad, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be > 0");
  if (at.size() != analytic_grad.size())
    throw std::invalid_argument("finite_diff_check: size mismatch");
  double worst = 0.0;
  Eigen::VectorXd x = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    x[i] = at[i] + step;
    double fp = f(x);
    x[i] = at[i] - step;
    double fm = f(x);
    x[i] = at[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_check: non-finite function value");
    double fd = (fp - fm) / (2.0 * step);
    double err = std::abs(analytic_grad[i] - fd) / std::max(1.0, std::abs(analytic_grad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dgnerf::ad
