#pragma once

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgnerf::ad {

using Mat = Eigen::MatrixXd;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Sqrt,
  Sin,
  Cos,
  Power,     // x^p, constant exponent
  Softplus,
  Sigmoid,
  Sum,       // all elements -> 1x1
  MatVec,
  MatMul,
  Concat,    // along rows (axis 0) or columns (axis 1)
  ClampMin,  // max(x, c), constant c
  CumSum,    // exclusive prefix sum over a column vector
  SliceRows, // contiguous row range of the input
  Affine,    // x * W with a broadcast bias row, fused
};

const char* op_name(Op op);

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape over dense double arrays (scalars are
// 1x1). Nodes are appended in topological order; backward() walks them in
// reverse exactly once, so gradient accumulation order is deterministic.
class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    bool requires_grad = false;
    int32_t a = -1, b = -1;
    std::vector<int32_t> extra;  // concat inputs (includes all of them)
    double aux = 0.0;            // power exponent / clamp threshold
    uint8_t axis = 0;            // concat axis
    Mat value;
    Mat grad;  // allocated by backward()
  };

  Tape() { nodes_.reserve(1024); }

  // Leaves. `leaf` participates in gradients, `constant` does not.
  Var leaf(Mat v);
  Var leaf(double v) { return leaf(scalar(v)); }
  Var constant(Mat v);
  Var constant(double v) { return constant(scalar(v)); }

  // Elementwise ops accept equal shapes or a 1x1 on either side.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var power(Var a, double exponent);
  Var softplus(Var a);
  Var sigmoid(Var a);
  Var sum(Var a);
  Var matvec(Var m, Var v);
  Var matmul(Var a, Var b);
  Var concat(const std::vector<Var>& parts, int axis);
  Var clamp_min(Var a, double floor);
  Var cumsum_exclusive(Var a);
  Var slice_rows(Var a, int offset, int rows);
  Var affine(Var x, Var w, Var bias_row);

  // Runs one reverse pass from a scalar root. Grads are re-zeroed first, so
  // repeated calls from the same root give identical results.
  void backward(Var root);

  const Mat& val(Var v) const { return node(v).value; }
  double scalar_val(Var v) const;
  const Mat& grad(Var v) const;
  Mat grad_or_zero(Var v) const;  // zeros if the var never saw the root
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  size_t size() const { return nodes_.size(); }

  static Mat scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
  }

 private:
  std::vector<Node> nodes_;

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);
  Var unary(Op op, Var a, double aux = 0.0);
  Var binary_elementwise(Op op, Var a, Var b);
  void backward_node(int32_t id);
  void accumulate(int32_t id, const Mat& g);
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// Throws if f evaluates to a non-finite value at any probe point.
double finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& at,
                         const Eigen::VectorXd& analytic_grad, double step);

}  // namespace dgnerf::ad
