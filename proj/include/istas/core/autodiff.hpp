#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation applied to its Vars. Calling backward() on a
// scalar Var walks the tape in reverse and accumulates gradients into every
// Var that requires one; Parameter leaves additionally add their gradient
// into Parameter::grad so an optimizer can consume it after the tape is gone.
//
// Token-major conventions used throughout the project: a single-step token
// matrix is M x N (embedding rows, token columns). A T-step tensor is stored
// "wide" as M x (T*N), step t occupying columns [t*N, (t+1)*N).

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace istas::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ParamGroup { Fresh, Pretrained };

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamGroup group = ParamGroup::Fresh;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

class Tape;

class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out)>;

  // When record is false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var param(Parameter& p);

  // Registers an op result. `fn` is kept only if recording and any input
  // requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward fn);
  Var push(Matrix value, const std::vector<Var>& inputs, Backward fn);

  void accumulate(const Var& v, const Matrix& g);
  void backward(const Var& out);
  void backward(const Var& out, const Matrix& seed);

  const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }
  // Gradient of v after backward(); a zero matrix if none reached it.
  Matrix grad(const Var& v) const;
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  Var make(Node node);

  bool record_;
  std::deque<Node> nodes_;
};

// ---- elementwise / structural ops -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// a (R x C) + b (R x 1) broadcast over columns.
Var add_bias(const Var& a, const Var& b);
// a (R x C) scaled by a 1x1 Var.
Var scale_by(const Var& a, const Var& s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var hconcat(const std::vector<Var>& parts);
Var vconcat(const std::vector<Var>& parts);
Var col_block(const Var& a, Index start, Index count);
Var row_block(const Var& a, Index start, Index count);
Var entry(const Var& a, Index row, Index col);
// Repeats a horizontally `reps` times: broadcast of a single-step tensor to T steps.
Var tile_cols(const Var& a, int reps);
// Mean of the T column blocks of a wide tensor.
Var step_mean(const Var& a, int steps);
// Reorders token columns of every step block by `order` (new column j takes old column order[j]).
Var permute_tokens(const Var& a, int steps, const std::vector<Index>& order);

Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);

// Row-wise softmax (each row sums to one).
Var softmax_rows(const Var& a);

// Normalizes every column over its rows, then per-row affine (LayerNorm for M x N tokens).
Var layer_norm_cols(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Normalizes every row over all columns, then per-row affine (BatchNorm with
// statistics taken over tokens and steps of the current forward).
Var norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// sign(a) * max(|a| - theta, 0) with theta (R x 1, nonnegative) broadcast over columns.
Var soft_threshold(const Var& a, const Var& theta);

// Patch matrix for a 1-D convolution of kernel `k` (odd, zero padded) over the
// token axis of every step block: (M x T*N) -> (k*M x T*N).
Var im2col_tokens(const Var& x, int steps, int k);
// Patch matrix for a k x k, stride-1, zero-padded convolution on an H x W grid
// stored as C x (H*W) with column index r*W + c: -> (k*k*C x H*W).
Var im2col_grid(const Var& x, Index height, Index width, int k);

}  // namespace istas::ad
