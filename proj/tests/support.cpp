#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace emr::testing {

ad::Array random_array(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  ad::Array a(rows, cols);
  for (auto& v : a.values()) v = d(rng);
  return a;
}

ad::Node project(const ad::Node& out, const ad::Array& weights) {
  return ad::sum(out * ad::constant(weights));
}

GradCheck gradcheck(const std::function<ad::Node()>& f, const std::vector<ad::Node>& inputs,
                    const std::vector<std::string>& labels, double h) {
  for (auto in : inputs) in.zero_grad();
  ad::backward(f());
  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ad::Node in = inputs[i];
    const ad::Array analytic = in.grad();
    double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
    auto& values = in.mutable_value();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + h;
      const double plus = f().item();
      values[j] = saved - h;
      const double minus = f().item();
      values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      diff += (numeric - analytic[j]) * (numeric - analytic[j]);
      norm_a += analytic[j] * analytic[j];
      norm_n += numeric * numeric;
      ++result.checked;
    }
    const double denom = std::sqrt(norm_a) + std::sqrt(norm_n);
    // Floor on the scale: a gradient that is exactly zero (a bias shared by all
    // logits of a softmax) leaves only finite-difference roundoff of ~1e-10.
    const double rel = std::sqrt(diff) / std::max(denom, 1e-4);
    if (result.worst.empty() || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst = i < labels.size() ? labels[i] : "input " + std::to_string(i);
    }
    in.zero_grad();
  }
  return result;
}

namespace {

std::size_t dim(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 5) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Values kept away from 0 so that relu's kink is never inside the stencil.
ad::Array away_from_zero(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  ad::Array a = random_array(r, c, rng);
  for (auto& v : a.values()) v += v >= 0 ? 0.05 : -0.05;
  return a;
}

}  // namespace

std::vector<PrimitiveCase> primitive_cases(std::mt19937_64& rng) {
  std::vector<PrimitiveCase> cases;
  auto leaf = [&](std::size_t r, std::size_t c) { return ad::parameter(random_array(r, c, rng)); };
  auto add_case = [&](std::string name, std::vector<ad::Node> inputs, ad::Array proj,
                      std::function<ad::Node()> body) {
    cases.push_back({std::move(name), std::move(inputs),
                     [body = std::move(body), proj = std::move(proj)] { return project(body(), proj); }});
  };

  const std::size_t n = dim(rng), m = dim(rng), p = dim(rng);
  {
    auto a = leaf(n, m), b = leaf(m, p);
    add_case("matmul", {a, b}, random_array(n, p, rng), [a, b] { return ad::matmul(a, b); });
  }
  {
    auto a = leaf(n, m);
    add_case("transpose", {a}, random_array(m, n, rng), [a] { return ad::transpose(a); });
  }
  {
    auto a = leaf(n, m), b = leaf(n, m);
    add_case("add", {a, b}, random_array(n, m, rng), [a, b] { return a + b; });
    add_case("sub", {a, b}, random_array(n, m, rng), [a, b] { return a - b; });
    add_case("mul", {a, b}, random_array(n, m, rng), [a, b] { return a * b; });
  }
  {
    auto a = leaf(n, m), r = leaf(1, m);
    add_case("add_row", {a, r}, random_array(n, m, rng), [a, r] { return ad::add_row(a, r); });
  }
  {
    auto a = leaf(n, m);
    add_case("affine", {a}, random_array(n, m, rng), [a] { return ad::affine(a, -1.7, 0.3); });
    add_case("scale", {a}, random_array(n, m, rng), [a] { return ad::scale(a, 2.5); });
    add_case("sigmoid", {a}, random_array(n, m, rng), [a] { return ad::sigmoid(a); });
    add_case("tanh", {a}, random_array(n, m, rng), [a] { return ad::tanh(a); });
    add_case("exp", {a}, random_array(n, m, rng), [a] { return ad::exp(a); });
    add_case("softmax_rows", {a}, random_array(n, m, rng), [a] { return ad::softmax_rows(a); });
    add_case("log_softmax_rows", {a}, random_array(n, m, rng), [a] { return ad::log_softmax_rows(a); });
    add_case("sum", {a}, random_array(1, 1, rng), [a] { return ad::sum(a); });
    add_case("sum_rows", {a}, random_array(1, m, rng), [a] { return ad::sum_rows(a); });
  }
  {
    auto a = ad::parameter(away_from_zero(n, m, rng));
    add_case("relu", {a}, random_array(n, m, rng), [a] { return ad::relu(a); });
  }
  {
    ad::Array positive = random_array(n, m, rng);
    for (auto& v : positive.values()) v = 0.2 + std::abs(v);
    auto a = ad::parameter(positive);
    add_case("log", {a}, random_array(n, m, rng), [a] { return ad::log(a); });
  }
  {
    auto a = leaf(n, m), b = leaf(n, p);
    add_case("concat_cols", {a, b}, random_array(n, m + p, rng), [a, b] {
      const ad::Node parts[] = {a, b};
      return ad::concat_cols(parts);
    });
    auto c = leaf(p, m);
    add_case("concat_rows", {a, c}, random_array(n + p, m, rng), [a, c] {
      const ad::Node parts[] = {a, c};
      return ad::concat_rows(parts);
    });
  }
  {
    auto a = leaf(n + 2, m + 2);
    add_case("slice_cols", {a}, random_array(n + 2, m, rng), [a] { return ad::slice_cols(a, 1, a.cols() - 2); });
    add_case("slice_rows", {a}, random_array(n, m + 2, rng), [a] { return ad::slice_rows(a, 2, a.rows() - 2); });
    add_case("element", {a}, random_array(1, 1, rng), [a] { return ad::element(a, 1, 1); });
  }
  {
    const std::size_t vocab = dim(rng, 3, 7);
    auto table = leaf(vocab, m);
    std::vector<int> ids;
    for (std::size_t i = 0; i < n + 1; ++i) ids.push_back(static_cast<int>(dim(rng, 0, vocab - 1)));
    add_case("lookup_rows", {table}, random_array(ids.size(), m, rng),
             [table, ids] { return ad::lookup_rows(table, ids); });
    const std::size_t J = dim(rng, 2, 5);
    std::vector<std::vector<int>> sentences(n);
    for (auto& s : sentences) {
      for (std::size_t j = 0; j < J; ++j) s.push_back(static_cast<int>(dim(rng, 0, vocab - 1)));
    }
    const ad::Array weights = random_array(J, m, rng);
    add_case("weighted_bag", {table}, random_array(n, m, rng),
             [table, sentences, weights] { return ad::weighted_bag(table, sentences, weights); });
  }
  {
    auto logits = leaf(1, m + 1);
    const int gold = static_cast<int>(dim(rng, 0, m));
    cases.push_back({"cross_entropy", {logits}, [logits, gold] { return ad::cross_entropy(logits, gold); }});
    cases.push_back({"entropy_from_logits", {logits}, [logits] { return ad::entropy_from_logits(logits); }});
  }
  return cases;
}

std::vector<ad::Node> store_nodes(const ParameterStore& store, std::vector<std::string>* labels) {
  std::vector<ad::Node> out;
  for (const auto& [name, entry] : store.entries()) {
    out.push_back(entry.node);
    if (labels) labels->push_back(name);
  }
  return out;
}

RandomState random_state(std::size_t n, std::size_t k, std::mt19937_64& rng, double scale) {
  RandomState s;
  s.memory = MemoryState(n);
  for (std::size_t i = 0; i < n; ++i) {
    ad::Node v = ad::parameter(random_array(1, k, rng, scale));
    s.memory.entries.push_back({v, static_cast<int>(i + 1), {}});
    s.memory.usage.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    s.leaves.push_back(v);
  }
  ad::Node e = ad::parameter(random_array(1, k, rng, scale));
  s.incoming = {e, static_cast<int>(n + 1), {}};
  s.leaves.push_back(e);
  return s;
}

}  // namespace emr::testing
