#include "emr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace emr::ad {

// ---- Array ---------------------------------------------------------------

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("array extents must be positive");
}

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (rows == 0 || cols == 0) throw ShapeError("array extents must be positive");
  if (data_.size() != rows * cols) {
    throw ShapeError("array data length " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

Array Array::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array(1, n, std::move(values));
}

Array Array::identity(std::size_t n) {
  Array out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

double Array::item() const {
  if (rows_ != 1 || cols_ != 1) throw ShapeError("item() on non-scalar " + shape_string(*this));
  return data_[0];
}

bool Array::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Array& a) {
  std::ostringstream os;
  os << '(' << a.rows() << 'x' << a.cols() << ')';
  return os.str();
}

// ---- Node ----------------------------------------------------------------

Node::Node(Array value, bool requires_grad) : impl_(std::make_shared<detail::NodeImpl>()) {
  impl_->value = std::move(value);
  impl_->requires_grad = requires_grad;
}

Array Node::grad() const {
  if (impl_->grad.empty()) return Array(impl_->value.rows(), impl_->value.cols());
  return impl_->grad;
}

Node constant(Array value) { return Node(std::move(value), false); }
Node parameter(Array value) { return Node(std::move(value), true); }
Node detach(const Node& x) { return Node(x.value(), false); }

namespace {

thread_local bool g_grad_enabled = true;

using Impl = detail::NodeImpl;
using BackwardFn = std::function<void(Impl&)>;

Node make_result(Array value, std::initializer_list<const Node*> parents, BackwardFn fn,
                 const char* op) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string("non-finite output from ") + op + " " + shape_string(value));
  }
  bool needs = false;
  if (g_grad_enabled) {
    for (const Node* p : parents) needs = needs || p->requires_grad();
  }
  Node out(std::move(value), needs);
  if (needs) {
    auto& impl = *out.impl();
    impl.is_leaf = false;
    impl.parents.reserve(parents.size());
    for (const Node* p : parents) impl.parents.push_back(p->impl());
    impl.backward = std::move(fn);
  }
  return out;
}

Node make_result_n(Array value, std::span<const Node> parents, BackwardFn fn, const char* op) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string("non-finite output from ") + op + " " + shape_string(value));
  }
  bool needs = false;
  if (g_grad_enabled) {
    for (const Node& p : parents) needs = needs || p.requires_grad();
  }
  Node out(std::move(value), needs);
  if (needs) {
    auto& impl = *out.impl();
    impl.is_leaf = false;
    impl.parents.reserve(parents.size());
    for (const Node& p : parents) impl.parents.push_back(p.impl());
    impl.backward = std::move(fn);
  }
  return out;
}

// Parent i's gradient buffer, or nullptr when it takes no gradient.
Array* pgrad(Impl& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? &p.grad_ref() : nullptr;
}

void require_same(const Array& a, const Array& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

template <typename F, typename D>
Node unary(const Node& a, const char* op, F forward, D derivative_from_output) {
  const Array& x = a.value();
  Array y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  return make_result(
      std::move(y), {&a},
      [derivative_from_output](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        const Array& xin = self.parents[0]->value;
        for (std::size_t i = 0; i < self.value.size(); ++i) {
          (*g)[i] += self.grad[i] * derivative_from_output(xin[i], self.value[i]);
        }
      },
      op);
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

void backward(const Node& root) {
  if (!root.valid()) throw std::invalid_argument("backward on empty node");
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward requires a scalar root, got " + shape_string(root.value()));
  }
  if (!root.requires_grad()) return;
  if (root.impl()->is_leaf) {
    root.impl()->grad_ref()[0] += 1.0;
    return;
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->is_leaf && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.impl()->grad_ref()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (node->grad.empty() || !node->backward) continue;
    node->backward(*node);
    node->grad = Array();
  }
}

// ---- primitives ----------------------------------------------------------

Node matmul(const Node& a, const Node& b) {
  const Array& x = a.value();
  const Array& y = b.value();
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: inner extents differ " + shape_string(x) + " @ " + shape_string(y));
  }
  const std::size_t n = x.rows(), m = x.cols(), p = y.cols();
  Array out(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.row_ptr(i);
    const double* xrow = x.row_ptr(i);
    for (std::size_t k = 0; k < m; ++k) {
      const double xv = xrow[k];
      const double* yrow = y.row_ptr(k);
      for (std::size_t j = 0; j < p; ++j) orow[j] += xv * yrow[j];
    }
  }
  return make_result(
      std::move(out), {&a, &b},
      [n, m, p](Impl& self) {
        const Array& x = self.parents[0]->value;
        const Array& y = self.parents[1]->value;
        const Array& g = self.grad;
        if (Array* gx = pgrad(self, 0)) {
          for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g.row_ptr(i);
            double* gxrow = gx->row_ptr(i);
            for (std::size_t k = 0; k < m; ++k) {
              const double* yrow = y.row_ptr(k);
              double acc = 0.0;
              for (std::size_t j = 0; j < p; ++j) acc += grow[j] * yrow[j];
              gxrow[k] += acc;
            }
          }
        }
        if (Array* gy = pgrad(self, 1)) {
          for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g.row_ptr(i);
            const double* xrow = x.row_ptr(i);
            for (std::size_t k = 0; k < m; ++k) {
              const double xv = xrow[k];
              double* gyrow = gy->row_ptr(k);
              for (std::size_t j = 0; j < p; ++j) gyrow[j] += xv * grow[j];
            }
          }
        }
      },
      "matmul");
}

Node transpose(const Node& a) {
  const Array& x = a.value();
  Array out(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  return make_result(
      std::move(out), {&a},
      [](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < g->rows(); ++i)
          for (std::size_t j = 0; j < g->cols(); ++j) (*g)(i, j) += self.grad(j, i);
      },
      "transpose");
}

Node add(const Node& a, const Node& b) {
  require_same(a.value(), b.value(), "add");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(
      std::move(out), {&a, &b},
      [](Impl& self) {
        for (std::size_t p = 0; p < 2; ++p)
          if (Array* g = pgrad(self, p))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      },
      "add");
}

Node sub(const Node& a, const Node& b) {
  require_same(a.value(), b.value(), "sub");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(
      std::move(out), {&a, &b},
      [](Impl& self) {
        if (Array* g = pgrad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (Array* g = pgrad(self, 1))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
      },
      "sub");
}

Node mul(const Node& a, const Node& b) {
  require_same(a.value(), b.value(), "mul");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(
      std::move(out), {&a, &b},
      [](Impl& self) {
        const Array& x = self.parents[0]->value;
        const Array& y = self.parents[1]->value;
        if (Array* g = pgrad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
        if (Array* g = pgrad(self, 1))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
      },
      "mul");
}

Node add_row(const Node& a, const Node& row) {
  const Array& x = a.value();
  const Array& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("add_row: " + shape_string(r) + " does not broadcast over " +
                     shape_string(x));
  }
  Array out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* o = out.row_ptr(i);
    for (std::size_t j = 0; j < x.cols(); ++j) o[j] += r[j];
  }
  return make_result(
      std::move(out), {&a, &row},
      [](Impl& self) {
        const Array& g = self.grad;
        if (Array* ga = pgrad(self, 0))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Array* gr = pgrad(self, 1))
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) (*gr)[j] += g(i, j);
      },
      "add_row");
}

Node affine(const Node& a, double alpha, double beta) {
  Array out = a.value();
  for (double& v : out.values()) v = alpha * v + beta;
  return make_result(
      std::move(out), {&a},
      [alpha](Impl& self) {
        if (Array* g = pgrad(self, 0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += alpha * self.grad[i];
      },
      "affine");
}

Node scale(const Node& a, double alpha) { return affine(a, alpha, 0.0); }

Node sigmoid(const Node& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Node tanh(const Node& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Node relu(const Node& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Node exp(const Node& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Node log(const Node& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Node softmax_rows(const Node& a) {
  const Array& x = a.value();
  Array out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xr = x.row_ptr(i);
    double* o = out.row_ptr(i);
    const double mx = *std::max_element(xr, xr + x.cols());
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) total += (o[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < x.cols(); ++j) o[j] /= total;
  }
  return make_result(
      std::move(out), {&a},
      [](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        const Array& y = self.value;
        for (std::size_t i = 0; i < y.rows(); ++i) {
          const double* yr = y.row_ptr(i);
          const double* gr = self.grad.row_ptr(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += gr[j] * yr[j];
          double* out = g->row_ptr(i);
          for (std::size_t j = 0; j < y.cols(); ++j) out[j] += yr[j] * (gr[j] - dot);
        }
      },
      "softmax_rows");
}

Node log_softmax_rows(const Node& a) {
  const Array& x = a.value();
  Array out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xr = x.row_ptr(i);
    double* o = out.row_ptr(i);
    const double mx = *std::max_element(xr, xr + x.cols());
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) total += std::exp(xr[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < x.cols(); ++j) o[j] = xr[j] - lse;
  }
  return make_result(
      std::move(out), {&a},
      [](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        const Array& y = self.value;
        for (std::size_t i = 0; i < y.rows(); ++i) {
          const double* yr = y.row_ptr(i);
          const double* gr = self.grad.row_ptr(i);
          double total = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) total += gr[j];
          double* out = g->row_ptr(i);
          for (std::size_t j = 0; j < y.cols(); ++j) out[j] += gr[j] - std::exp(yr[j]) * total;
        }
      },
      "log_softmax_rows");
}

Node concat_cols(std::span<const Node> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Node& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Array out(rows, cols);
  std::size_t offset = 0;
  for (const Node& p : parts) {
    const Array& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(v.row_ptr(i), v.row_ptr(i) + v.cols(), out.row_ptr(i) + offset);
    offset += v.cols();
  }
  return make_result_n(
      std::move(out), parts,
      [](Impl& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          const std::size_t c = self.parents[p]->value.cols();
          if (Array* g = pgrad(self, p)) {
            for (std::size_t i = 0; i < g->rows(); ++i) {
              const double* src = self.grad.row_ptr(i) + off;
              double* dst = g->row_ptr(i);
              for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
          }
          off += c;
        }
      },
      "concat_cols");
}

Node concat_rows(std::span<const Node> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Node& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Array out(rows, cols);
  std::size_t offset = 0;
  for (const Node& p : parts) {
    const auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  return make_result_n(
      std::move(out), parts,
      [](Impl& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
          const std::size_t n = self.parents[p]->value.size();
          if (Array* g = pgrad(self, p))
            for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[off + i];
          off += n;
        }
      },
      "concat_rows");
}

Node slice_cols(const Node& a, std::size_t begin, std::size_t count) {
  const Array& x = a.value();
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols: range out of bounds for " + shape_string(x));
  }
  Array out(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i)
    std::copy(x.row_ptr(i) + begin, x.row_ptr(i) + begin + count, out.row_ptr(i));
  return make_result(
      std::move(out), {&a},
      [begin, count](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < g->rows(); ++i) {
          const double* src = self.grad.row_ptr(i);
          double* dst = g->row_ptr(i) + begin;
          for (std::size_t j = 0; j < count; ++j) dst[j] += src[j];
        }
      },
      "slice_cols");
}

Node slice_rows(const Node& a, std::size_t begin, std::size_t count) {
  const Array& x = a.value();
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows: range out of bounds for " + shape_string(x));
  }
  Array out(count, x.cols());
  std::copy(x.row_ptr(begin), x.row_ptr(begin) + count * x.cols(), out.row_ptr(0));
  return make_result(
      std::move(out), {&a},
      [begin](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        double* dst = g->row_ptr(begin);
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
      },
      "slice_rows");
}

Node element(const Node& a, std::size_t r, std::size_t c) {
  const Array& x = a.value();
  if (r >= x.rows() || c >= x.cols()) throw ShapeError("element: index out of bounds");
  return make_result(
      Array::scalar(x(r, c)), {&a},
      [r, c](Impl& self) {
        if (Array* g = pgrad(self, 0)) (*g)(r, c) += self.grad[0];
      },
      "element");
}

Node sum(const Node& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return make_result(
      Array::scalar(total), {&a},
      [](Impl& self) {
        if (Array* g = pgrad(self, 0))
          for (double& v : g->values()) v += self.grad[0];
      },
      "sum");
}

Node sum_rows(const Node& a) {
  const Array& x = a.value();
  Array out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  return make_result(
      std::move(out), {&a},
      [](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < g->rows(); ++i)
          for (std::size_t j = 0; j < g->cols(); ++j) (*g)(i, j) += self.grad[j];
      },
      "sum_rows");
}

Node lookup_rows(const Node& table, std::span<const int> ids) {
  const Array& t = table.value();
  if (ids.empty()) throw ShapeError("lookup_rows: no ids");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= t.rows()) {
      throw std::out_of_range("lookup_rows: id " + std::to_string(id) + " outside table of " +
                              std::to_string(t.rows()) + " rows");
    }
  }
  Array out(ids.size(), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(t.row_ptr(ids[i]), t.row_ptr(ids[i]) + t.cols(), out.row_ptr(i));
  std::vector<int> saved(ids.begin(), ids.end());
  return make_result(
      std::move(out), {&table},
      [saved = std::move(saved)](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < saved.size(); ++i) {
          const double* src = self.grad.row_ptr(i);
          double* dst = g->row_ptr(saved[i]);
          for (std::size_t j = 0; j < g->cols(); ++j) dst[j] += src[j];
        }
      },
      "lookup_rows");
}

Node weighted_bag(const Node& table, std::span<const std::vector<int>> sentences,
                  const Array& weights) {
  const Array& t = table.value();
  if (sentences.empty()) throw ShapeError("weighted_bag: no sentences");
  if (weights.cols() != t.cols()) throw ShapeError("weighted_bag: weight width differs from table");
  for (const auto& s : sentences) {
    if (s.size() > weights.rows()) throw ShapeError("weighted_bag: sentence longer than weights");
    for (int id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= t.rows()) {
        throw std::out_of_range("weighted_bag: token id " + std::to_string(id) +
                                " outside vocabulary of " + std::to_string(t.rows()));
      }
    }
  }
  const std::size_t k = t.cols();
  Array out(sentences.size(), k);
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    double* o = out.row_ptr(s);
    for (std::size_t j = 0; j < sentences[s].size(); ++j) {
      const int id = sentences[s][j];
      if (id == 0) continue;
      const double* w = weights.row_ptr(j);
      const double* e = t.row_ptr(id);
      for (std::size_t c = 0; c < k; ++c) o[c] += w[c] * e[c];
    }
  }
  std::vector<std::vector<int>> saved(sentences.begin(), sentences.end());
  return make_result(
      std::move(out), {&table},
      [saved = std::move(saved), weights](Impl& self) {
        Array* g = pgrad(self, 0);
        if (!g) return;
        const std::size_t k = g->cols();
        for (std::size_t s = 0; s < saved.size(); ++s) {
          const double* src = self.grad.row_ptr(s);
          for (std::size_t j = 0; j < saved[s].size(); ++j) {
            const int id = saved[s][j];
            if (id == 0) continue;
            const double* w = weights.row_ptr(j);
            double* dst = g->row_ptr(id);
            for (std::size_t c = 0; c < k; ++c) dst[c] += w[c] * src[c];
          }
        }
      },
      "weighted_bag");
}

// ---- composites ----------------------------------------------------------

Node cross_entropy(const Node& logits, int gold) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy expects a single logits row");
  if (gold < 0 || static_cast<std::size_t>(gold) >= logits.cols()) {
    throw std::out_of_range("cross_entropy: gold label outside logits");
  }
  return scale(element(log_softmax_rows(logits), 0, static_cast<std::size_t>(gold)), -1.0);
}

Node entropy_from_logits(const Node& logits) {
  if (logits.rows() != 1) throw ShapeError("entropy_from_logits expects a single logits row");
  const Node logp = log_softmax_rows(logits);
  const Node p = softmax_rows(logits);
  return scale(sum(mul(p, logp)), -1.0);
}

}  // namespace emr::ad
