#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnp/diff/rng.hpp"

namespace hnp::diff {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense extents; rank 1 ({n}) and rank 2 ({rows, cols}) cover every model
/// in this repo. A scalar is {1}.
using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  bool is_leaf() const { return !backprop; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
};

}  // namespace detail

/// Value-semantics handle to a graph node. Copies alias the same storage;
/// operations on tensors whose inputs carry requires_grad record a backward
/// closure, everything else is a plain value computation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, real v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> data, bool requires_grad = false);
  static Tensor scalar_of(real v) { return constant({1}, v); }
  /// i.i.d. N(0, sd^2) entries.
  static Tensor randn(Shape shape, Rng& rng, real sd, bool requires_grad = false);
  /// i.i.d. uniform in [-bound, bound].
  static Tensor uniform(Shape shape, Rng& rng, real bound, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  /// Rows/cols with rank-1 tensors treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const real> values() const { return node_->value; }
  std::span<real> values_mut() { return node_->value; }
  real value_at(std::size_t i) const { return node_->value[i]; }
  real scalar() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const real> grad() const;
  std::span<real> grad_mut();
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  std::shared_ptr<detail::Node> handle() const { return node_; }

  /// Same values, no graph ancestry, optionally grad-tracked.
  Tensor detached(bool requires_grad = false) const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape shape, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

/// Builds a graph node; value must be filled by the caller via values_mut().
/// The closure is kept only when some parent requires grad.
Tensor make_op(Shape shape, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_scalar(const Tensor& a, real c);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);
/// ln(1 + e^x), overflow-safe; strictly positive.
Tensor softplus(const Tensor& a);

// ---- broadcasts the models need ----
/// x[n x d] + v[d] per row.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
/// x[n x s] - v[n] per column.
Tensor sub_colvec(const Tensor& x, const Tensor& v);

// ---- dense linear algebra ----
/// a[n x k] * b[k x m].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[n x k] * b[m x k]^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// Row i of result = W * x_i + b, with W[d_out x d_in], b[d_out].
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

/// Per-row normalization to zero mean / unit variance over features, then
/// gain/bias. d == 1 degenerates to the bias row (variance is zero).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Max-shifted softmax along `axis` (rank-1 tensors use axis 0).
Tensor softmax(const Tensor& x, int axis);

// ---- structural ----
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor narrow_rows(const Tensor& t, std::size_t row0, std::size_t nrows);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor narrow_cols(const Tensor& t, std::size_t col0, std::size_t ncols);
/// Row r of the result is row indices[r] of t; indices may repeat.
Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& indices);
/// [n x d] -> [k*n x d], whole-block tiling.
Tensor repeat_rows(const Tensor& t, std::size_t k);
/// [n x d] -> [k*n x d], each row repeated k consecutive times.
Tensor repeat_each_row(const Tensor& t, std::size_t k);
/// All parts [n x s] -> [n x s*P] with out[:, c*P + p] = parts[p][:, c];
/// interleaves one column per part at a time.
Tensor interleave_cols(const std::vector<Tensor>& parts);
/// Column mean over rows: [n x d] -> [1 x d].
Tensor mean_rows(const Tensor& t);
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);
/// Flatten to rank 1 (view-like, shares no storage but copies are cheap).
Tensor flatten(const Tensor& t);
Tensor reshape_2d(const Tensor& t, std::size_t rows, std::size_t cols);

/// Cross-entropy over segments: logits[n x (seg*width)] holds `seg`
/// independent categorical blocks of `width` logits per row; returns the sum
/// over rows and blocks of -log softmax(block)[label[row]].
Tensor nll_categorical_segments(const Tensor& logits, const std::vector<int>& labels,
                                std::size_t width);

/// Reverse-mode sweep from a scalar loss. Grads on requires_grad leaves
/// accumulate across calls; intermediate grads are reset per sweep.
void backward(const Tensor& loss);

}  // namespace hnp::diff
