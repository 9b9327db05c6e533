#include "emr/policies.hpp"

#include <cmath>
#include <stdexcept>

namespace emr {

namespace {

void require_full(const MemoryState& memory) {
  if (memory.entries.empty() || !memory.full()) {
    throw std::invalid_argument("eviction policies are evaluated on a full memory only");
  }
}

std::vector<double> row_values(const ad::Node& n) {
  const auto v = n.value().values();
  return {v.begin(), v.end()};
}

ad::Node stack_with_incoming(const MemoryState& memory, const EncodedEntry& incoming) {
  std::vector<ad::Node> rows;
  rows.reserve(memory.size() + 1);
  for (const auto& e : memory.entries) rows.push_back(e.vector);
  rows.push_back(incoming.vector);
  return ad::concat_rows(rows);
}

PolicyOutput from_logits(ad::Node logits) {
  PolicyOutput out;
  out.probabilities = row_values(ad::softmax_rows(ad::detach(logits)));
  out.logits = std::move(logits);
  return out;
}

}  // namespace

PolicyOutput FifoPolicy::evaluate(const MemoryState& memory, const EncodedEntry&) const {
  require_full(memory);
  PolicyOutput out;
  out.probabilities.assign(memory.size(), 0.0);
  out.probabilities[0] = 1.0;
  return out;
}

PolicyOutput LifoPolicy::evaluate(const MemoryState& memory, const EncodedEntry&) const {
  require_full(memory);
  PolicyOutput out;
  out.probabilities.assign(memory.size() + 1, 0.0);
  out.probabilities.back() = 1.0;
  return out;
}

PolicyOutput UniformPolicy::evaluate(const MemoryState& memory, const EncodedEntry&) const {
  require_full(memory);
  PolicyOutput out;
  out.probabilities.assign(memory.size(), 1.0 / static_cast<double>(memory.size()));
  return out;
}

// ---- EMR-Independent -------------------------------------------------------

IndependentPolicy::IndependentPolicy(ParameterStore& store, std::size_t dim, std::mt19937_64& rng)
    : gate_weight_(store.add_gaussian("policy/independent/gate_weight", dim, 1, kInitStddev, rng)),
      gate_bias_(store.add("policy/independent/gate_bias", ad::Array(1, 1))) {}

PolicyOutput IndependentPolicy::evaluate(const MemoryState& memory,
                                         const EncodedEntry& incoming) const {
  require_full(memory);
  const std::size_t n = memory.size();
  const ad::Node slots = memory.stacked();
  const ad::Node attention =
      ad::softmax_rows(ad::transpose(ad::matmul(slots, ad::transpose(incoming.vector))));
  const ad::Node gamma =
      ad::transpose(ad::sigmoid(ad::add_row(ad::matmul(slots, gate_weight_), gate_bias_)));
  std::vector<double> previous = memory.usage;
  previous.resize(n, 0.0);
  const ad::Node usage_prev = ad::constant(ad::Array::row(previous));
  PolicyOutput out = from_logits(attention - gamma * usage_prev);
  out.hidden = slots;
  out.usage.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.usage[i] = 0.1 * previous[i] + 0.9 * attention.value()[i];
  return out;
}

// ---- EMR-biGRU -------------------------------------------------------------

BiGruPolicy::BiGruPolicy(ParameterStore& store, std::size_t dim, std::size_t hidden,
                         std::mt19937_64& rng)
    : forward_(store, "policy/bigru/forward", dim, hidden, rng),
      backward_(store, "policy/bigru/backward", dim, hidden, rng),
      head_(store, "policy/bigru/mlp", {2 * hidden, dim, dim, 1}, rng) {}

PolicyOutput BiGruPolicy::evaluate(const MemoryState& memory, const EncodedEntry& incoming) const {
  require_full(memory);
  const ad::Node sequence = stack_with_incoming(memory, incoming);
  const ad::Node both[] = {forward_.run(sequence, false), backward_.run(sequence, true)};
  const ad::Node states = ad::concat_cols(both);
  PolicyOutput out = from_logits(ad::transpose(head_(states)));
  out.hidden = states;
  return out;
}

// ---- EMR-Transformer -------------------------------------------------------

TransformerPolicy::TransformerPolicy(ParameterStore& store, std::size_t dim, std::size_t heads,
                                     bool position_encoding, std::mt19937_64& rng)
    : heads_(heads), position_encoding_(position_encoding) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("embedding dimension " + std::to_string(dim) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  query_ = store.add_gaussian("policy/transformer/query", dim, dim, kInitStddev, rng);
  key_ = store.add_gaussian("policy/transformer/key", dim, dim, kInitStddev, rng);
  value_ = store.add_gaussian("policy/transformer/value", dim, dim, kInitStddev, rng);
  output_ = store.add_gaussian("policy/transformer/output", dim, dim, kInitStddev, rng);
  head_ = Mlp(store, "policy/transformer/mlp", {dim, dim, dim, 1}, rng);
}

PolicyOutput TransformerPolicy::evaluate(const MemoryState& memory,
                                         const EncodedEntry& incoming) const {
  require_full(memory);
  ad::Node tokens = stack_with_incoming(memory, incoming);
  const std::size_t dim = tokens.cols();
  if (position_encoding_) tokens = tokens + ad::constant(sinusoidal_positions(tokens.rows(), dim));
  const ad::Node q = ad::matmul(tokens, query_);
  const ad::Node k = ad::matmul(tokens, key_);
  const ad::Node v = ad::matmul(tokens, value_);
  const std::size_t width = dim / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));

  std::vector<ad::Node> per_head;
  std::vector<ad::Array> attention;
  for (std::size_t h = 0; h < heads_; ++h) {
    const ad::Node qh = ad::slice_cols(q, h * width, width);
    const ad::Node kh = ad::slice_cols(k, h * width, width);
    const ad::Node vh = ad::slice_cols(v, h * width, width);
    const ad::Node a = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    attention.push_back(a.value());
    per_head.push_back(ad::matmul(a, vh));
  }
  const ad::Node states = ad::matmul(ad::concat_cols(per_head), output_);
  PolicyOutput out = from_logits(ad::transpose(head_(states)));
  out.hidden = states;
  out.attention = std::move(attention);
  return out;
}

// ---- value network ---------------------------------------------------------

ValueNetwork::ValueNetwork(ParameterStore& store, std::size_t input_dim, std::size_t dim,
                           std::mt19937_64& rng)
    : rho_(store, "value/rho", {input_dim, dim, dim}, rng),
      cell_(store, "value/gru", dim, dim, rng),
      head_(store, "value/mlp", {dim, dim, 1}, rng) {}

ValueNetwork::Output ValueNetwork::evaluate(const ad::Node& hidden_states,
                                            const ad::Node& previous_state) const {
  const ad::Node set_repr = rho_(ad::sum_rows(hidden_states));
  const ad::Node state = cell_.step(set_repr, previous_state);
  return {head_(state), state};
}

std::unique_ptr<EvictionPolicy> make_policy(PolicyKind kind, ParameterStore& store,
                                            std::size_t dim, std::size_t hidden, std::size_t heads,
                                            bool position_encoding, std::mt19937_64& rng) {
  switch (kind) {
    case PolicyKind::fifo: return std::make_unique<FifoPolicy>();
    case PolicyKind::lifo: return std::make_unique<LifoPolicy>();
    case PolicyKind::uniform: return std::make_unique<UniformPolicy>();
    case PolicyKind::emr_independent: return std::make_unique<IndependentPolicy>(store, dim, rng);
    case PolicyKind::emr_bigru: return std::make_unique<BiGruPolicy>(store, dim, hidden, rng);
    case PolicyKind::emr_transformer:
      return std::make_unique<TransformerPolicy>(store, dim, heads, position_encoding, rng);
  }
  throw std::invalid_argument("unknown policy kind");
}

}  // namespace emr
