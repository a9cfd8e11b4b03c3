#include "ldpp/nn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace ldpp::nn {

namespace {
constexpr double kMaskValue = -1e30;
}

void Tape::reset() {
  nodes_.clear();
  param_ids_.clear();
}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::constant(Matrix v) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(v);
  return push(std::move(n));
}

Tape::Id Tape::param(Parameter& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return it->second;
  Node n;
  n.op = Op::kParam;
  n.value = p.value;
  n.parameter = &p;
  n.needs_grad = grad_enabled_ && p.trainable;
  Id id = push(std::move(n));
  param_ids_.emplace(&p, id);
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value * nodes_[b].value;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  Node n;
  n.op = Op::kMatmulNT;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value * nodes_[b].value.transpose();
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value + nodes_[b].value;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value - nodes_[b].value;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add_rowvec(Id a, Id row) {
  Node n;
  n.op = Op::kAddRow;
  n.a = a;
  n.b = row;
  n.value = nodes_[a].value.rowwise() + nodes_[row].value.row(0);
  n.needs_grad = nodes_[a].needs_grad || nodes_[row].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.s = s;
  n.value = nodes_[a].value * s;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::add_scalar(Id a, double s) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a;
  n.s = s;
  n.value = nodes_[a].value.array() + s;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::hadamard(Id a, Id b) {
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.value = nodes_[a].value.cwiseProduct(nodes_[b].value);
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::slice_rows(Id a, int r0, int nrows) {
  Node n;
  n.op = Op::kSliceRows;
  n.a = a;
  n.i0 = r0;
  n.i1 = nrows;
  n.value = nodes_[a].value.middleRows(r0, nrows);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, int c0, int ncols) {
  Node n;
  n.op = Op::kSliceCols;
  n.a = a;
  n.i0 = c0;
  n.i1 = ncols;
  n.value = nodes_[a].value.middleCols(c0, ncols);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
  if (parts.empty()) throw std::logic_error("concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = nodes_[parts[0]].value.cols();
  for (Id p : parts) rows += nodes_[p].value.rows();
  Node n;
  n.op = Op::kConcatRows;
  n.parts = parts;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Id p : parts) {
    const Matrix& v = nodes_[p].value;
    n.value.middleRows(at, v.rows()) = v;
    at += v.rows();
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw std::logic_error("concat_cols: empty");
  Eigen::Index cols = 0;
  const Eigen::Index rows = nodes_[parts[0]].value.rows();
  for (Id p : parts) cols += nodes_[p].value.cols();
  Node n;
  n.op = Op::kConcatCols;
  n.parts = parts;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (Id p : parts) {
    const Matrix& v = nodes_[p].value;
    n.value.middleCols(at, v.cols()) = v;
    at += v.cols();
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  return push(std::move(n));
}

namespace {

void softmax_row_inplace(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  const double m = row.maxCoeff();
  row = (row.array() - m).exp();
  row /= row.sum();
}

}  // namespace

Tape::Id Tape::softmax_rows(Id a) {
  Node n;
  n.op = Op::kSoftmax;
  n.a = a;
  n.value = nodes_[a].value;
  for (Eigen::Index i = 0; i < n.value.rows(); ++i) softmax_row_inplace(n.value.row(i));
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::causal_softmax_rows(Id a) {
  Node n;
  n.op = Op::kCausalSoftmax;
  n.a = a;
  n.value = nodes_[a].value;
  for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < n.value.cols(); ++j) n.value(i, j) = kMaskValue;
    softmax_row_inplace(n.value.row(i));
  }
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::log_softmax_rows(Id a) {
  Node n;
  n.op = Op::kLogSoftmax;
  n.a = a;
  n.value = nodes_[a].value;
  for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
    const double m = n.value.row(i).maxCoeff();
    const double lse = m + std::log((n.value.row(i).array() - m).exp().sum());
    n.value.row(i).array() -= lse;
  }
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id bias, double eps) {
  const Matrix& v = nodes_[x].value;
  const Eigen::Index rows = v.rows();
  const Eigen::Index cols = v.cols();
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x;
  n.b = gain;
  n.c = bias;
  n.s = eps;
  // aux: normalized activations plus per-row inverse stddev in the last column
  n.aux.resize(rows, cols + 1);
  n.value.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mean = v.row(i).mean();
    const double var = (v.row(i).array() - mean).square().mean();
    const double invstd = 1.0 / std::sqrt(var + eps);
    n.aux.row(i).head(cols) = (v.row(i).array() - mean) * invstd;
    n.aux(i, cols) = invstd;
    n.value.row(i) = n.aux.row(i).head(cols).cwiseProduct(nodes_[gain].value.row(0)) +
                     nodes_[bias].value.row(0);
  }
  n.needs_grad =
      nodes_[x].needs_grad || nodes_[gain].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(n));
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Tape::Id Tape::gelu(Id a) {
  Node n;
  n.op = Op::kGelu;
  n.a = a;
  const Matrix& x = nodes_[a].value;
  n.value = x.unaryExpr([](double v) { return gelu_scalar(v); });
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::log(Id a) {
  Node n;
  n.op = Op::kLog;
  n.a = a;
  n.value = nodes_[a].value.unaryExpr([](double v) { return std::log(v); });
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::rows_gather(Id table, std::vector<int> ids) {
  Node n;
  n.op = Op::kGather;
  n.a = table;
  n.idx = std::move(ids);
  const Matrix& t = nodes_[table].value;
  n.value.resize(static_cast<Eigen::Index>(n.idx.size()), t.cols());
  for (size_t i = 0; i < n.idx.size(); ++i) {
    if (n.idx[i] < 0 || n.idx[i] >= t.rows())
      throw std::out_of_range("rows_gather: index " + std::to_string(n.idx[i]) +
                              " out of range for table with " +
                              std::to_string(t.rows()) + " rows");
    n.value.row(static_cast<Eigen::Index>(i)) = t.row(n.idx[i]);
  }
  n.needs_grad = nodes_[table].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::pick_neg(Id logprobs, std::vector<int> rows, std::vector<int> cols) {
  if (rows.size() != cols.size()) throw std::logic_error("pick_neg: size mismatch");
  Node n;
  n.op = Op::kPickNeg;
  n.a = logprobs;
  n.idx = std::move(rows);
  n.idx2 = std::move(cols);
  const Matrix& lp = nodes_[logprobs].value;
  n.value.resize(1, static_cast<Eigen::Index>(n.idx.size()));
  for (size_t i = 0; i < n.idx.size(); ++i)
    n.value(0, static_cast<Eigen::Index>(i)) = -lp(n.idx[i], n.idx2[i]);
  n.needs_grad = nodes_[logprobs].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  const Matrix& v = nodes_[a].value;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) acc += v(i, j);
  n.value = Matrix::Constant(1, 1, acc);
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = a;
  const Matrix& v = nodes_[a].value;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) acc += v(i, j);
  n.value = Matrix::Constant(1, 1, acc / static_cast<double>(v.size()));
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

Matrix& Tape::grad_buf(Id id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backprop_into(Id id, const Matrix& g) {
  if (id >= 0 && nodes_[id].needs_grad) grad_buf(id) += g;
}

void Tape::backward(Id root) {
  if (!grad_enabled_) throw std::logic_error("backward on a no-grad tape");
  if (nodes_[root].value.size() != 1) throw std::logic_error("backward root must be 1x1");
  if (!nodes_[root].needs_grad) return;
  grad_buf(root).setConstant(1.0);

  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::kConstant:
      case Op::kParam:
        break;
      case Op::kMatmul:
        if (nodes_[n.a].needs_grad) grad_buf(n.a) += g * nodes_[n.b].value.transpose();
        if (nodes_[n.b].needs_grad) grad_buf(n.b) += nodes_[n.a].value.transpose() * g;
        break;
      case Op::kMatmulNT:
        if (nodes_[n.a].needs_grad) grad_buf(n.a) += g * nodes_[n.b].value;
        if (nodes_[n.b].needs_grad) grad_buf(n.b) += g.transpose() * nodes_[n.a].value;
        break;
      case Op::kAdd:
        backprop_into(n.a, g);
        backprop_into(n.b, g);
        break;
      case Op::kSub:
        backprop_into(n.a, g);
        if (nodes_[n.b].needs_grad) grad_buf(n.b) -= g;
        break;
      case Op::kAddRow:
        backprop_into(n.a, g);
        if (nodes_[n.b].needs_grad) grad_buf(n.b) += g.colwise().sum();
        break;
      case Op::kScale:
        if (nodes_[n.a].needs_grad) grad_buf(n.a) += g * n.s;
        break;
      case Op::kAddScalar:
        backprop_into(n.a, g);
        break;
      case Op::kHadamard:
        if (nodes_[n.a].needs_grad) grad_buf(n.a) += g.cwiseProduct(nodes_[n.b].value);
        if (nodes_[n.b].needs_grad) grad_buf(n.b) += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::kSliceRows:
        if (nodes_[n.a].needs_grad) grad_buf(n.a).middleRows(n.i0, n.i1) += g;
        break;
      case Op::kSliceCols:
        if (nodes_[n.a].needs_grad) grad_buf(n.a).middleCols(n.i0, n.i1) += g;
        break;
      case Op::kConcatRows: {
        Eigen::Index at = 0;
        for (Id p : n.parts) {
          const Eigen::Index r = nodes_[p].value.rows();
          if (nodes_[p].needs_grad) grad_buf(p) += g.middleRows(at, r);
          at += r;
        }
        break;
      }
      case Op::kConcatCols: {
        Eigen::Index at = 0;
        for (Id p : n.parts) {
          const Eigen::Index c = nodes_[p].value.cols();
          if (nodes_[p].needs_grad) grad_buf(p) += g.middleCols(at, c);
          at += c;
        }
        break;
      }
      case Op::kSoftmax:
      case Op::kCausalSoftmax: {
        // dS = P .* (dP - rowsum(dP .* P)); masked entries carry P = 0
        if (nodes_[n.a].needs_grad) {
          Matrix& ga = grad_buf(n.a);
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double dot = g.row(i).dot(n.value.row(i));
            ga.row(i) +=
                n.value.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
          }
        }
        break;
      }
      case Op::kLogSoftmax: {
        if (nodes_[n.a].needs_grad) {
          Matrix& ga = grad_buf(n.a);
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double gsum = g.row(i).sum();
            ga.row(i) += g.row(i) - gsum * n.value.row(i).array().exp().matrix();
          }
        }
        break;
      }
      case Op::kLayerNorm: {
        const Eigen::Index cols = n.value.cols();
        const auto xhat = n.aux.leftCols(cols);
        if (nodes_[n.c].needs_grad) grad_buf(n.c) += g.colwise().sum();
        if (nodes_[n.b].needs_grad)
          grad_buf(n.b) += g.cwiseProduct(xhat).colwise().sum();
        if (nodes_[n.a].needs_grad) {
          Matrix& ga = grad_buf(n.a);
          const Eigen::RowVectorXd& gain = nodes_[n.b].value.row(0);
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const Eigen::RowVectorXd gy = g.row(i).cwiseProduct(gain);
            const double m1 = gy.mean();
            const double m2 = gy.cwiseProduct(xhat.row(i)).mean();
            const double invstd = n.aux(i, cols);
            ga.row(i) +=
                invstd * (gy.array() - m1 - xhat.row(i).array() * m2).matrix();
          }
        }
        break;
      }
      case Op::kGelu: {
        if (nodes_[n.a].needs_grad) {
          const Matrix& x = nodes_[n.a].value;
          Matrix d = x.unaryExpr([](double v) {
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
          });
          grad_buf(n.a) += g.cwiseProduct(d);
        }
        break;
      }
      case Op::kLog: {
        if (nodes_[n.a].needs_grad)
          grad_buf(n.a) += g.cwiseQuotient(nodes_[n.a].value);
        break;
      }
      case Op::kGather: {
        if (nodes_[n.a].needs_grad) {
          Matrix& ga = grad_buf(n.a);
          for (size_t i = 0; i < n.idx.size(); ++i)
            ga.row(n.idx[i]) += g.row(static_cast<Eigen::Index>(i));
        }
        break;
      }
      case Op::kPickNeg: {
        if (nodes_[n.a].needs_grad) {
          Matrix& ga = grad_buf(n.a);
          for (size_t i = 0; i < n.idx.size(); ++i)
            ga(n.idx[i], n.idx2[i]) -= g(0, static_cast<Eigen::Index>(i));
        }
        break;
      }
      case Op::kSumAll:
        if (nodes_[n.a].needs_grad)
          grad_buf(n.a).array() += g(0, 0);
        break;
      case Op::kMeanAll:
        if (nodes_[n.a].needs_grad)
          grad_buf(n.a).array() += g(0, 0) / static_cast<double>(nodes_[n.a].value.size());
        break;
    }
  }
}

void Tape::flush_param_grads() {
  for (auto& [p, id] : param_ids_) {
    Parameter* param = nodes_[id].parameter;
    if (!param->trainable || nodes_[id].grad.size() == 0) continue;
    if (param->grad.size() == 0) param->zero_grad();
    param->grad += nodes_[id].grad;
  }
}

}  // namespace ldpp::nn
