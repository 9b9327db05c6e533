#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Graphs are built define-by-run: every op returns a Node holding its value
// and, when any input requires a gradient, a closure that pushes the output
// gradient back into its parents. Parameters are long-lived leaf Nodes whose
// gradients accumulate across backward() calls until zeroed.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emr::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense rows x cols matrix of doubles. Vectors are 1 x n rows, scalars 1 x 1.
class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0);
  Array(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Array scalar(double v) { return Array(1, 1, v); }
  static Array row(std::vector<double> values);
  static Array identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Array& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }

  /// Value of a 1 x 1 array.
  double item() const;
  bool all_finite() const noexcept;
  void fill(double v);

  friend bool operator==(const Array&, const Array&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Array& a);

namespace detail {

struct NodeImpl {
  Array value;
  Array grad;  // lazily allocated
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<NodeImpl>> parents;
  std::function<void(NodeImpl&)> backward;

  Array& grad_ref() {
    if (grad.empty()) grad = Array(value.rows(), value.cols());
    return grad;
  }
};

}  // namespace detail

class Node {
 public:
  Node() = default;
  explicit Node(Array value, bool requires_grad = false);

  bool valid() const noexcept { return impl_ != nullptr; }
  const Array& value() const { return impl_->value; }
  /// Direct write access, for optimizers and tests. Does not invalidate graphs.
  Array& mutable_value() { return impl_->value; }
  std::size_t rows() const { return impl_->value.rows(); }
  std::size_t cols() const { return impl_->value.cols(); }
  double item() const { return impl_->value.item(); }

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient, or a zero array of the value's shape when nothing accumulated yet.
  Array grad() const;
  Array& grad_buffer() { return impl_->grad_ref(); }
  void zero_grad() { impl_->grad = Array(); }

  bool same(const Node& other) const noexcept { return impl_ == other.impl_; }

  const std::shared_ptr<detail::NodeImpl>& impl() const { return impl_; }
  explicit Node(std::shared_ptr<detail::NodeImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::NodeImpl> impl_;
};

Node constant(Array value);
Node parameter(Array value);
/// Copy of the value with no gradient path.
Node detach(const Node& x);

/// While alive on this thread, ops record no backward closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled() noexcept;

/// Accumulates d(root)/d(node) into every reachable node that requires a
/// gradient. Intermediate gradients are released afterwards; leaf gradients
/// persist and add up across calls.
void backward(const Node& root);

// ---- primitives ----------------------------------------------------------

Node matmul(const Node& a, const Node& b);
Node transpose(const Node& a);
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
/// a (n x m) + row (1 x m) broadcast over rows.
Node add_row(const Node& a, const Node& row);
/// alpha * a + beta, elementwise.
Node affine(const Node& a, double alpha, double beta = 0.0);
Node scale(const Node& a, double alpha);
Node sigmoid(const Node& a);
Node tanh(const Node& a);
Node relu(const Node& a);
Node exp(const Node& a);
Node log(const Node& a);
/// Softmax along each row (axis 1), max-subtracted.
Node softmax_rows(const Node& a);
Node log_softmax_rows(const Node& a);
Node concat_cols(std::span<const Node> parts);
Node concat_rows(std::span<const Node> parts);
Node slice_cols(const Node& a, std::size_t begin, std::size_t count);
Node slice_rows(const Node& a, std::size_t begin, std::size_t count);
/// 1 x 1 node holding a(r, c).
Node element(const Node& a, std::size_t r, std::size_t c);
/// Sum of all entries, 1 x 1.
Node sum(const Node& a);
/// Column sums, 1 x cols.
Node sum_rows(const Node& a);
/// Rows of `table` selected by `ids`.
Node lookup_rows(const Node& table, std::span<const int> ids);
/// Position-weighted bag of embeddings. Row s of the result is
/// sum_j weights(j, :) * table(tokens[s][j], :); token 0 (padding) is skipped.
Node weighted_bag(const Node& table, std::span<const std::vector<int>> sentences,
                  const Array& weights);

inline Node operator+(const Node& a, const Node& b) { return add(a, b); }
inline Node operator-(const Node& a, const Node& b) { return sub(a, b); }
inline Node operator*(const Node& a, const Node& b) { return mul(a, b); }

// ---- composites ----------------------------------------------------------

/// -log softmax(logits)[gold] for a 1 x V logits row.
Node cross_entropy(const Node& logits, int gold);
/// Shannon entropy of softmax(logits) for a 1 x A logits row.
Node entropy_from_logits(const Node& logits);

}  // namespace emr::ad
