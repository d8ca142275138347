// Reverse-mode automatic differentiation over dense 2-D double tensors.
//
// A Tape owns the computation graph of one forward pass. Operations append
// nodes and return lightweight Tensor handles; backward() runs the reverse
// sweep once and accumulates gradients into the Parameters that fed the
// graph. Every forward result is checked for NaN/Inf immediately, so numeric
// failures surface at the op that produced them.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gcl/error.hpp"
#include "gcl/graph.hpp"

namespace gcl {

class Tape;

/// Trainable array with persistent gradient and Adam state.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd adam_m;
  Eigen::MatrixXd adam_v;

  Parameter(std::string n, Eigen::MatrixXd v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Eigen::MatrixXd::Zero(value.rows(), value.cols())),
        adam_m(Eigen::MatrixXd::Zero(value.rows(), value.cols())),
        adam_v(Eigen::MatrixXd::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

/// Handle into a Tape's node list. Valid only while its tape is alive.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  const Eigen::MatrixXd& val() const;
  int rows() const { return static_cast<int>(val().rows()); }
  int cols() const { return static_cast<int>(val().cols()); }
  /// Value of a 1x1 tensor.
  double scalar() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Tensor constant(Eigen::MatrixXd v);
  Tensor param(Parameter& p);
  /// Value copy with no backward edges (stop-gradient).
  Tensor detach(Tensor x);

  // Linear algebra.
  Tensor matmul(Tensor a, Tensor b);
  Tensor spmm(const Csr& m, Tensor x);  // sparse operand gets no gradient
  Tensor transpose(Tensor a);

  // Elementwise arithmetic (equal shapes).
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor div(Tensor a, Tensor b);

  // Scalar arithmetic.
  Tensor add_scalar(Tensor a, double s);
  Tensor mul_scalar(Tensor a, double s);

  // Row/column broadcasts. r is 1xC, c is Nx1.
  Tensor bcast_add_row(Tensor x, Tensor r);
  Tensor bcast_mul_row(Tensor x, Tensor r);
  Tensor bcast_mul_col(Tensor x, Tensor c);
  Tensor bcast_div_col(Tensor x, Tensor c);

  // Nonlinearities.
  Tensor relu(Tensor x);
  /// Elementwise clip to [lo, hi]; gradient passes only strictly inside.
  Tensor clamp(Tensor x, double lo, double hi);
  /// y = x for x > 0, slope*x otherwise; slope is a 1x1 tensor.
  Tensor prelu(Tensor x, Tensor slope);
  Tensor sigmoid(Tensor x);
  Tensor softplus(Tensor x);
  Tensor exp(Tensor x);
  Tensor log(Tensor x);
  Tensor sqrt(Tensor x);

  /// Rows scaled to unit L2 norm (a tiny additive floor inside the square
  /// root keeps zero rows finite).
  Tensor l2_row_normalize(Tensor x);
  /// Per-column standardization with biased variance: (x - mean)/sqrt(var+eps).
  Tensor standardize_cols(Tensor x, double eps);

  // Reductions.
  Tensor row_sum(Tensor x);   // NxC -> Nx1
  Tensor row_mean(Tensor x);  // NxC -> Nx1
  Tensor col_sum(Tensor x);   // NxC -> 1xC
  Tensor col_mean(Tensor x);  // NxC -> 1xC
  Tensor sum_all(Tensor x);   // NxC -> 1x1
  Tensor mean_all(Tensor x);  // NxC -> 1x1

  Tensor concat_rows(Tensor a, Tensor b);
  Tensor gather_rows(Tensor x, std::vector<int> idx);

  /// Reverse sweep from a scalar loss. Gradients of all contributing
  /// Parameters are accumulated into their grad buffers. A tape can be
  /// consumed once; a second call throws.
  void backward(Tensor loss);

  const Eigen::MatrixXd& value(int id) const { return nodes_[id].value; }
  /// Gradient of a node after backward (for tests).
  const Eigen::MatrixXd& grad(int id) const { return nodes_[id].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::function<void(Tape&)> back;  // adds into parent grads
    Parameter* param = nullptr;
  };

  Tensor push(const char* op, Eigen::MatrixXd value,
              std::function<void(Tape&)> back, Parameter* p = nullptr);
  void require_same_shape(const char* op, Tensor a, Tensor b) const;
  Eigen::MatrixXd& g(int id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace gcl
