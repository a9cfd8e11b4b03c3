#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

namespace ldpp::nn {

using Matrix = Eigen::MatrixXd;

// tanh-approximation GELU; shared so cached decoding matches tape forwards.
double gelu_scalar(double x);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value once training starts
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Reverse-mode tape over dense double matrices. Single-threaded, eager
// forward, deterministic: every reduction runs in a fixed sequential order.
class Tape {
 public:
  using Id = int;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  const Matrix& val(Id id) const { return nodes_[id].value; }
  const Matrix& grad(Id id) const { return nodes_[id].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }
  void reset();

  Id constant(Matrix v);
  Id param(Parameter& p);  // deduplicated per tape

  Id matmul(Id a, Id b);     // a * b
  Id matmul_nt(Id a, Id b);  // a * b^T
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id add_rowvec(Id a, Id row);  // row broadcast over a's rows
  Id scale(Id a, double s);
  Id add_scalar(Id a, double s);
  Id hadamard(Id a, Id b);
  Id slice_rows(Id a, int r0, int n);
  Id slice_cols(Id a, int c0, int n);
  Id concat_rows(const std::vector<Id>& parts);
  Id concat_cols(const std::vector<Id>& parts);
  Id softmax_rows(Id a);
  Id causal_softmax_rows(Id a);  // entries with col > row masked out
  Id log_softmax_rows(Id a);
  Id layer_norm(Id x, Id gain, Id bias, double eps = 1e-5);
  Id gelu(Id a);  // tanh approximation, smooth for finite differences
  Id log(Id a);   // elementwise natural log; inputs must stay positive
  Id rows_gather(Id table, std::vector<int> ids);
  // 1 x n row of -logprobs[rows[i], cols[i]]
  Id pick_neg(Id logprobs, std::vector<int> rows, std::vector<int> cols);
  Id sum_all(Id a);   // sequential accumulation
  Id mean_all(Id a);  // sequential accumulation / count

  // Seeds d(root)=1 (root must be 1x1) and propagates in reverse order.
  void backward(Id root);
  // Adds accumulated leaf gradients into Parameter::grad for trainable params.
  void flush_param_grads();

 private:
  enum class Op {
    kConstant, kParam, kMatmul, kMatmulNT, kAdd, kSub, kAddRow, kScale, kAddScalar,
    kHadamard, kSliceRows, kSliceCols, kConcatRows, kConcatCols, kSoftmax,
    kCausalSoftmax, kLogSoftmax, kLayerNorm, kGelu, kLog, kGather, kPickNeg, kSumAll,
    kMeanAll,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int c = -1;  // layer_norm bias
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    int i0 = 0;
    int i1 = 0;
    double s = 0.0;
    std::vector<int> idx;
    std::vector<int> idx2;
    std::vector<int> parts;
    Matrix aux;
    Parameter* parameter = nullptr;
  };

  Id push(Node n);
  Matrix& grad_buf(Id id);
  void backprop_into(Id id, const Matrix& g);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, Id> param_ids_;
  bool grad_enabled_;
};

}  // namespace ldpp::nn
