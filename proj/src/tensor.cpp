#include "gcl/tensor.hpp"

#include <cmath>

namespace gcl {

namespace {

std::string shape_of(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_finite(const char* op, const Eigen::MatrixXd& v) {
  if (!v.allFinite())
    throw TensorError(std::string(op) + ": non-finite value in result");
}

}  // namespace

const Eigen::MatrixXd& Tensor::val() const { return tape->value(id); }

double Tensor::scalar() const {
  const Eigen::MatrixXd& v = val();
  if (v.rows() != 1 || v.cols() != 1)
    throw TensorError("scalar(): tensor is " + shape_of(v) + ", expected 1x1");
  return v(0, 0);
}

Tensor Tape::push(const char* op, Eigen::MatrixXd value,
                  std::function<void(Tape&)> back, Parameter* p) {
  check_finite(op, value);
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  n.param = p;
  nodes_.push_back(std::move(n));
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::require_same_shape(const char* op, Tensor a, Tensor b) const {
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_of(va) +
                      " vs " + shape_of(vb));
}

Tensor Tape::constant(Eigen::MatrixXd v) {
  return push("constant", std::move(v), nullptr);
}

Tensor Tape::param(Parameter& p) {
  return push("param", p.value, nullptr, &p);
}

Tensor Tape::detach(Tensor x) { return push("detach", x.val(), nullptr); }

Tensor Tape::matmul(Tensor a, Tensor b) {
  const auto& va = a.val();
  const auto& vb = b.val();
  if (va.cols() != vb.rows())
    throw TensorError("matmul: inner dimensions " + shape_of(va) + " vs " +
                      shape_of(vb));
  Tensor out = push("matmul", va * vb, nullptr);
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [ia, ib, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    t.g(ia) += g * t.nodes_[ib].value.transpose();
    t.g(ib) += t.nodes_[ia].value.transpose() * g;
  };
  return out;
}

Tensor Tape::spmm(const Csr& m, Tensor x) {
  auto sp = std::make_shared<Csr>(m);
  Tensor out = push("spmm", sp->multiply(x.val()), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [sp, ix, io](Tape& t) {
    t.g(ix) += sp->multiply_transposed(t.nodes_[io].grad);
  };
  return out;
}

Tensor Tape::transpose(Tensor a) {
  Tensor out = push("transpose", a.val().transpose(), nullptr);
  int ia = a.id, io = out.id;
  nodes_[io].back = [ia, io](Tape& t) {
    t.g(ia) += t.nodes_[io].grad.transpose();
  };
  return out;
}

Tensor Tape::add(Tensor a, Tensor b) {
  require_same_shape("add", a, b);
  Tensor out = push("add", a.val() + b.val(), nullptr);
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [ia, ib, io](Tape& t) {
    t.g(ia) += t.nodes_[io].grad;
    t.g(ib) += t.nodes_[io].grad;
  };
  return out;
}

Tensor Tape::sub(Tensor a, Tensor b) {
  require_same_shape("sub", a, b);
  Tensor out = push("sub", a.val() - b.val(), nullptr);
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [ia, ib, io](Tape& t) {
    t.g(ia) += t.nodes_[io].grad;
    t.g(ib) -= t.nodes_[io].grad;
  };
  return out;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  require_same_shape("mul", a, b);
  Tensor out = push("mul", a.val().cwiseProduct(b.val()), nullptr);
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [ia, ib, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    t.g(ia) += g.cwiseProduct(t.nodes_[ib].value);
    t.g(ib) += g.cwiseProduct(t.nodes_[ia].value);
  };
  return out;
}

Tensor Tape::div(Tensor a, Tensor b) {
  require_same_shape("div", a, b);
  Tensor out = push("div", a.val().cwiseQuotient(b.val()), nullptr);
  int ia = a.id, ib = b.id, io = out.id;
  nodes_[io].back = [ia, ib, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& vb = t.nodes_[ib].value;
    const Eigen::MatrixXd& vo = t.nodes_[io].value;
    t.g(ia) += g.cwiseQuotient(vb);
    t.g(ib) -= g.cwiseProduct(vo).cwiseQuotient(vb);
  };
  return out;
}

Tensor Tape::add_scalar(Tensor a, double s) {
  Tensor out = push("add_scalar", a.val().array() + s, nullptr);
  int ia = a.id, io = out.id;
  nodes_[io].back = [ia, io](Tape& t) { t.g(ia) += t.nodes_[io].grad; };
  return out;
}

Tensor Tape::mul_scalar(Tensor a, double s) {
  Tensor out = push("mul_scalar", a.val() * s, nullptr);
  int ia = a.id, io = out.id;
  nodes_[io].back = [ia, io, s](Tape& t) { t.g(ia) += s * t.nodes_[io].grad; };
  return out;
}

Tensor Tape::bcast_add_row(Tensor x, Tensor r) {
  const auto& vx = x.val();
  const auto& vr = r.val();
  if (vr.rows() != 1 || vr.cols() != vx.cols())
    throw TensorError("bcast_add_row: shape mismatch " + shape_of(vx) + " vs " +
                      shape_of(vr));
  Eigen::MatrixXd v = vx;
  v.rowwise() += vr.row(0);
  Tensor out = push("bcast_add_row", std::move(v), nullptr);
  int ix = x.id, ir = r.id, io = out.id;
  nodes_[io].back = [ix, ir, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    t.g(ix) += g;
    t.g(ir) += g.colwise().sum();
  };
  return out;
}

Tensor Tape::bcast_mul_row(Tensor x, Tensor r) {
  const auto& vx = x.val();
  const auto& vr = r.val();
  if (vr.rows() != 1 || vr.cols() != vx.cols())
    throw TensorError("bcast_mul_row: shape mismatch " + shape_of(vx) + " vs " +
                      shape_of(vr));
  Eigen::MatrixXd v = vx.array().rowwise() * vr.row(0).array();
  Tensor out = push("bcast_mul_row", std::move(v), nullptr);
  int ix = x.id, ir = r.id, io = out.id;
  nodes_[io].back = [ix, ir, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& vx2 = t.nodes_[ix].value;
    const Eigen::MatrixXd& vr2 = t.nodes_[ir].value;
    t.g(ix) += (g.array().rowwise() * vr2.row(0).array()).matrix();
    t.g(ir) += g.cwiseProduct(vx2).colwise().sum();
  };
  return out;
}

Tensor Tape::bcast_mul_col(Tensor x, Tensor c) {
  const auto& vx = x.val();
  const auto& vc = c.val();
  if (vc.cols() != 1 || vc.rows() != vx.rows())
    throw TensorError("bcast_mul_col: shape mismatch " + shape_of(vx) + " vs " +
                      shape_of(vc));
  Eigen::MatrixXd v = vx.array().colwise() * vc.col(0).array();
  Tensor out = push("bcast_mul_col", std::move(v), nullptr);
  int ix = x.id, ic = c.id, io = out.id;
  nodes_[io].back = [ix, ic, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& vx2 = t.nodes_[ix].value;
    const Eigen::MatrixXd& vc2 = t.nodes_[ic].value;
    t.g(ix) += (g.array().colwise() * vc2.col(0).array()).matrix();
    t.g(ic) += g.cwiseProduct(vx2).rowwise().sum();
  };
  return out;
}

Tensor Tape::bcast_div_col(Tensor x, Tensor c) {
  const auto& vx = x.val();
  const auto& vc = c.val();
  if (vc.cols() != 1 || vc.rows() != vx.rows())
    throw TensorError("bcast_div_col: shape mismatch " + shape_of(vx) + " vs " +
                      shape_of(vc));
  Eigen::MatrixXd v = vx.array().colwise() / vc.col(0).array();
  Tensor out = push("bcast_div_col", std::move(v), nullptr);
  int ix = x.id, ic = c.id, io = out.id;
  nodes_[io].back = [ix, ic, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& vc2 = t.nodes_[ic].value;
    const Eigen::MatrixXd& vo = t.nodes_[io].value;
    t.g(ix) += (g.array().colwise() / vc2.col(0).array()).matrix();
    t.g(ic) -= g.cwiseProduct(vo).rowwise().sum().cwiseQuotient(vc2);
  };
  return out;
}

Tensor Tape::relu(Tensor x) {
  Tensor out = push("relu", x.val().cwiseMax(0.0), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    const Eigen::MatrixXd& vx = t.nodes_[ix].value;
    t.g(ix) += t.nodes_[io].grad.cwiseProduct(
        (vx.array() > 0.0).cast<double>().matrix());
  };
  return out;
}

Tensor Tape::prelu(Tensor x, Tensor slope) {
  const auto& vs = slope.val();
  if (vs.rows() != 1 || vs.cols() != 1)
    throw TensorError("prelu: slope must be 1x1, got " + shape_of(vs));
  double a = vs(0, 0);
  const auto& vx = x.val();
  Eigen::MatrixXd v = vx.cwiseMax(0.0) + a * vx.cwiseMin(0.0);
  Tensor out = push("prelu", std::move(v), nullptr);
  int ix = x.id, is = slope.id, io = out.id;
  nodes_[io].back = [ix, is, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& vx2 = t.nodes_[ix].value;
    double a2 = t.nodes_[is].value(0, 0);
    Eigen::ArrayXXd pos = (vx2.array() > 0.0).cast<double>();
    t.g(ix) += g.cwiseProduct((pos + a2 * (1.0 - pos)).matrix());
    t.g(is)(0, 0) += g.cwiseProduct(vx2.cwiseMin(0.0)).sum();
  };
  return out;
}

Tensor Tape::clamp(Tensor x, double lo, double hi) {
  if (!(lo <= hi)) throw TensorError("clamp: lo must not exceed hi");
  Tensor out = push("clamp", x.val().cwiseMax(lo).cwiseMin(hi), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io, lo, hi](Tape& t) {
    const Eigen::MatrixXd& vx = t.nodes_[ix].value;
    Eigen::ArrayXXd inside =
        ((vx.array() > lo) && (vx.array() < hi)).cast<double>();
    t.g(ix) += t.nodes_[io].grad.cwiseProduct(inside.matrix());
  };
  return out;
}

Tensor Tape::sigmoid(Tensor x) {
  // Stable in both tails.
  Eigen::MatrixXd v = x.val().unaryExpr([](double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                    : std::exp(z) / (1.0 + std::exp(z));
  });
  Tensor out = push("sigmoid", std::move(v), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    const Eigen::MatrixXd& vo = t.nodes_[io].value;
    t.g(ix) += t.nodes_[io].grad.cwiseProduct(
        vo.cwiseProduct((1.0 - vo.array()).matrix()));
  };
  return out;
}

Tensor Tape::softplus(Tensor x) {
  Eigen::MatrixXd v = x.val().unaryExpr([](double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  });
  Tensor out = push("softplus", std::move(v), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    Eigen::MatrixXd sig = t.nodes_[ix].value.unaryExpr([](double z) {
      return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                      : std::exp(z) / (1.0 + std::exp(z));
    });
    t.g(ix) += t.nodes_[io].grad.cwiseProduct(sig);
  };
  return out;
}

Tensor Tape::exp(Tensor x) {
  Tensor out = push("exp", x.val().array().exp(), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    t.g(ix) += t.nodes_[io].grad.cwiseProduct(t.nodes_[io].value);
  };
  return out;
}

Tensor Tape::log(Tensor x) {
  Tensor out = push("log", x.val().array().log(), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    t.g(ix) += t.nodes_[io].grad.cwiseQuotient(t.nodes_[ix].value);
  };
  return out;
}

Tensor Tape::sqrt(Tensor x) {
  Tensor out = push("sqrt", x.val().array().sqrt(), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    t.g(ix) += (t.nodes_[io].grad.array() / (2.0 * t.nodes_[io].value.array()))
                   .matrix();
  };
  return out;
}

Tensor Tape::l2_row_normalize(Tensor x) {
  const double eps = 1e-24;  // keeps zero rows finite
  const auto& vx = x.val();
  Eigen::VectorXd norm = (vx.rowwise().squaredNorm().array() + eps).sqrt();
  Eigen::MatrixXd v = vx.array().colwise() / norm.array();
  Tensor out = push("l2_row_normalize", std::move(v), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io, norm](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& vo = t.nodes_[io].value;
    // d(x/n)/dx applied to g: (g - y * <g,y>_row) / n
    Eigen::VectorXd dot = g.cwiseProduct(vo).rowwise().sum();
    Eigen::MatrixXd adj = g - (vo.array().colwise() * dot.array()).matrix();
    t.g(ix) += (adj.array().colwise() / norm.array()).matrix();
  };
  return out;
}

Tensor Tape::standardize_cols(Tensor x, double eps) {
  const auto& vx = x.val();
  const double n = static_cast<double>(vx.rows());
  Eigen::RowVectorXd mean = vx.colwise().mean();
  Eigen::MatrixXd centered = vx.rowwise() - mean;
  Eigen::RowVectorXd var = centered.array().square().colwise().sum() / n;
  Eigen::RowVectorXd s = (var.array() + eps).sqrt();
  if ((s.array() == 0.0).any())
    throw TensorError("standardize_cols: zero-variance column with eps=0");
  Eigen::MatrixXd v = centered.array().rowwise() / s.array();
  Tensor out = push("standardize_cols", std::move(v), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io, s, n](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    const Eigen::MatrixXd& y = t.nodes_[io].value;
    // Standard batch-statistics backward with biased variance:
    // dx = (n*g - colsum(g) - y * colsum(g.*y)) / (n*s)
    Eigen::RowVectorXd gs = g.colwise().sum();
    Eigen::RowVectorXd gys = g.cwiseProduct(y).colwise().sum();
    Eigen::MatrixXd num =
        n * g - (Eigen::MatrixXd::Ones(g.rows(), 1) * gs) -
        y.cwiseProduct(Eigen::MatrixXd::Ones(g.rows(), 1) * gys);
    t.g(ix) += (num.array().rowwise() / (n * s.array())).matrix();
  };
  return out;
}

Tensor Tape::row_sum(Tensor x) {
  Tensor out = push("row_sum", x.val().rowwise().sum(), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    t.g(ix) += g * Eigen::MatrixXd::Ones(1, t.nodes_[ix].value.cols());
  };
  return out;
}

Tensor Tape::row_mean(Tensor x) {
  return mul_scalar(row_sum(x), 1.0 / x.val().cols());
}

Tensor Tape::col_sum(Tensor x) {
  Tensor out = push("col_sum", x.val().colwise().sum(), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    t.g(ix) += Eigen::MatrixXd::Ones(t.nodes_[ix].value.rows(), 1) * g;
  };
  return out;
}

Tensor Tape::col_mean(Tensor x) {
  return mul_scalar(col_sum(x), 1.0 / x.val().rows());
}

Tensor Tape::sum_all(Tensor x) {
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = x.val().sum();
  Tensor out = push("sum_all", std::move(v), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io](Tape& t) {
    t.g(ix).array() += t.nodes_[io].grad(0, 0);
  };
  return out;
}

Tensor Tape::mean_all(Tensor x) {
  return mul_scalar(sum_all(x), 1.0 / (x.val().rows() * x.val().cols()));
}

Tensor Tape::concat_rows(Tensor a, Tensor b) {
  const auto& va = a.val();
  const auto& vb = b.val();
  if (va.cols() != vb.cols())
    throw TensorError("concat_rows: column mismatch " + shape_of(va) + " vs " +
                      shape_of(vb));
  Eigen::MatrixXd v(va.rows() + vb.rows(), va.cols());
  v << va, vb;
  Tensor out = push("concat_rows", std::move(v), nullptr);
  int ia = a.id, ib = b.id, io = out.id;
  long na = va.rows(), nb = vb.rows();
  nodes_[io].back = [ia, ib, io, na, nb](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    t.g(ia) += g.topRows(na);
    t.g(ib) += g.bottomRows(nb);
  };
  return out;
}

Tensor Tape::gather_rows(Tensor x, std::vector<int> idx) {
  const auto& vx = x.val();
  Eigen::MatrixXd v(static_cast<long>(idx.size()), vx.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= vx.rows())
      throw TensorError("gather_rows: index " + std::to_string(idx[i]) +
                        " out of range for " + shape_of(vx));
    v.row(static_cast<long>(i)) = vx.row(idx[i]);
  }
  Tensor out = push("gather_rows", std::move(v), nullptr);
  int ix = x.id, io = out.id;
  nodes_[io].back = [ix, io, idx = std::move(idx)](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[io].grad;
    for (size_t i = 0; i < idx.size(); ++i)
      t.g(ix).row(idx[i]) += g.row(static_cast<long>(i));
  };
  return out;
}

void Tape::backward(Tensor loss) {
  if (consumed_)
    throw TensorError("backward: tape already consumed; rebuild the forward pass");
  const auto& lv = loss.val();
  if (lv.rows() != 1 || lv.cols() != 1)
    throw TensorError("backward: loss is " + shape_of(lv) + ", expected 1x1");
  consumed_ = true;

  for (Node& n : nodes_)
    n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  nodes_[loss.id].grad(0, 0) = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.back) continue;
    if (n.grad.isZero(0.0)) continue;
    n.back(*this);
  }
  for (Node& n : nodes_)
    if (n.param && !n.grad.isZero(0.0)) n.param->grad += n.grad;
}

}  // namespace gcl
