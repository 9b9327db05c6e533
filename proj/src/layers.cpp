#include "emr/layers.hpp"

#include <cmath>

namespace emr {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng)
    : weight(store.add_gaussian(name + "/weight", in, out, kInitStddev, rng)),
      bias(store.add(name + "/bias", ad::Array(1, out))) {}

ad::Node Linear::operator()(const ad::Node& x) const {
  return ad::add_row(ad::matmul(x, weight), bias);
}

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& widths,
         std::mt19937_64& rng) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(store, name + "/layer" + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

ad::Node Mlp::operator()(const ad::Node& x) const {
  ad::Node h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

GruCell::GruCell(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                 std::mt19937_64& rng)
    : input_weight(store.add_gaussian(name + "/input_weight", in, 3 * hidden, kInitStddev, rng)),
      hidden_weight(store.add_gaussian(name + "/hidden_weight", hidden, 3 * hidden, kInitStddev, rng)),
      bias(store.add(name + "/bias", ad::Array(1, 3 * hidden))) {}

ad::Node GruCell::project_inputs(const ad::Node& xs) const {
  return ad::add_row(ad::matmul(xs, input_weight), bias);
}

ad::Node GruCell::step_projected(const ad::Node& px, const ad::Node& h) const {
  const std::size_t n = hidden_size();
  const ad::Node ph = ad::matmul(h, hidden_weight);
  const ad::Node z = ad::sigmoid(ad::slice_cols(px, 0, n) + ad::slice_cols(ph, 0, n));
  const ad::Node r = ad::sigmoid(ad::slice_cols(px, n, n) + ad::slice_cols(ph, n, n));
  const ad::Node cand = ad::tanh(ad::slice_cols(px, 2 * n, n) + r * ad::slice_cols(ph, 2 * n, n));
  // (1 - z) * cand + z * h  ==  cand + z * (h - cand)
  return cand + z * (h - cand);
}

ad::Node GruCell::step(const ad::Node& x, const ad::Node& h) const {
  return step_projected(project_inputs(x), h);
}

ad::Node GruCell::run(const ad::Node& xs, bool reverse) const {
  const std::size_t rows = xs.rows();
  const ad::Node projected = project_inputs(xs);
  std::vector<ad::Node> states(rows);
  ad::Node h = zero_state();
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t r = reverse ? rows - 1 - i : i;
    h = step_projected(ad::slice_rows(projected, r, 1), h);
    states[r] = h;
  }
  return ad::concat_rows(states);
}

ad::Node GruCell::zero_state() const { return ad::constant(ad::Array(1, hidden_size())); }

ad::Array sentence_position_weights(std::size_t sentence_length, std::size_t dim) {
  ad::Array w(sentence_length, dim);
  const double big_j = static_cast<double>(sentence_length);
  const double k = static_cast<double>(dim);
  for (std::size_t j = 1; j <= sentence_length; ++j) {
    for (std::size_t s = 1; s <= dim; ++s) {
      const double jj = static_cast<double>(j), ss = static_cast<double>(s);
      w(j - 1, s - 1) = (1.0 - jj / big_j) - (ss / k) * (1.0 - 2.0 * jj / big_j);
    }
  }
  return w;
}

ad::Array sinusoidal_positions(std::size_t count, std::size_t dim, std::size_t first) {
  ad::Array pe(count, dim);
  for (std::size_t p = 0; p < count; ++p) {
    const double pos = static_cast<double>(first + p);
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(pos / rate) : std::cos(pos / rate);
    }
  }
  return pe;
}

}  // namespace emr
