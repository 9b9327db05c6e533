#pragma once

#include <random>
#include <string>
#include <vector>

#include "emr/autodiff.hpp"
#include "emr/parameter_store.hpp"

namespace emr {

/// Std-dev of the zero-mean Gaussian every weight matrix starts from.
inline constexpr double kInitStddev = 0.1;

/// y = x W + b, applied row-wise.
struct Linear {
  ad::Node weight;  // in x out
  ad::Node bias;    // 1 x out

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         std::mt19937_64& rng);
  ad::Node operator()(const ad::Node& x) const;
  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
};

/// Stack of Linear layers with ReLU between consecutive layers (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& widths,
      std::mt19937_64& rng);
  ad::Node operator()(const ad::Node& x) const;
};

/// Gated recurrent unit with fused gate weights, gate order (update, reset, candidate):
///   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br)
///   n = tanh(x Wn + bn + r * (h Un)), h' = (1 - z) * n + z * h
struct GruCell {
  ad::Node input_weight;   // in x 3h
  ad::Node hidden_weight;  // h x 3h
  ad::Node bias;           // 1 x 3h

  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
          std::mt19937_64& rng);

  std::size_t hidden_size() const { return hidden_weight.rows(); }
  /// x W + b for every row of a sequence at once (n x 3h).
  ad::Node project_inputs(const ad::Node& xs) const;
  /// One step from a precomputed input projection row (1 x 3h).
  ad::Node step_projected(const ad::Node& projected_row, const ad::Node& h) const;
  ad::Node step(const ad::Node& x, const ad::Node& h) const;
  /// Runs over the rows of `xs` (optionally reversed); returns the states stacked
  /// in input-row order, n x h.
  ad::Node run(const ad::Node& xs, bool reverse = false) const;
  ad::Node zero_state() const;
};

/// l(j, s) = (1 - j/J) - (s/k)(1 - 2j/J), j in 1..J, s in 1..k, as a J x k array.
ad::Array sentence_position_weights(std::size_t sentence_length, std::size_t dim);

/// Sinusoidal slot encodings for positions first..first+count-1, count x dim.
ad::Array sinusoidal_positions(std::size_t count, std::size_t dim, std::size_t first = 1);

}  // namespace emr
