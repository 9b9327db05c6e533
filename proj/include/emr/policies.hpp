#pragma once

#include <memory>
#include <random>

#include "emr/layers.hpp"
#include "emr/memory.hpp"
#include "emr/parameter_store.hpp"

namespace emr {

/// Evicts the oldest slot.
class FifoPolicy final : public EvictionPolicy {
 public:
  PolicyKind kind() const override { return PolicyKind::fifo; }
  std::size_t arity(std::size_t n) const override { return n; }
  PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const override;
};

/// Drops every newcomer once the memory is full.
class LifoPolicy final : public EvictionPolicy {
 public:
  PolicyKind kind() const override { return PolicyKind::lifo; }
  std::size_t arity(std::size_t n) const override { return n + 1; }
  PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const override;
};

/// Evicts a slot chosen uniformly at random, in every mode.
class UniformPolicy final : public EvictionPolicy {
 public:
  PolicyKind kind() const override { return PolicyKind::uniform; }
  std::size_t arity(std::size_t n) const override { return n; }
  PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const override;
  bool always_samples() const override { return true; }
};

/// Scores each slot on its own against the newcomer:
///   a = softmax(M e^T), gamma = sigmoid(M w + b), g = a - gamma * v_prev,
///   pi = softmax(g), v_new = 0.1 v_prev + 0.9 a.
/// The usage EMA is carried as data; no gradient flows through v_prev.
class IndependentPolicy final : public EvictionPolicy {
 public:
  IndependentPolicy(ParameterStore& store, std::size_t dim, std::mt19937_64& rng);
  PolicyKind kind() const override { return PolicyKind::emr_independent; }
  std::size_t arity(std::size_t n) const override { return n; }
  PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const override;
  std::size_t hidden_dim() const override { return gate_weight_.rows(); }
  bool learnable() const override { return true; }

  ad::Node gate_weight() const { return gate_weight_; }
  ad::Node gate_bias() const { return gate_bias_; }

 private:
  ad::Node gate_weight_;  // k x 1
  ad::Node gate_bias_;    // 1 x 1
};

/// Bidirectional GRU over (m_1..m_N, e); a shared 3-layer MLP scores each state.
class BiGruPolicy final : public EvictionPolicy {
 public:
  BiGruPolicy(ParameterStore& store, std::size_t dim, std::size_t hidden, std::mt19937_64& rng);
  PolicyKind kind() const override { return PolicyKind::emr_bigru; }
  std::size_t arity(std::size_t n) const override { return n + 1; }
  PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const override;
  std::size_t hidden_dim() const override { return 2 * forward_.hidden_size(); }
  bool learnable() const override { return true; }

  GruCell& forward_cell() { return forward_; }
  GruCell& backward_cell() { return backward_; }
  Mlp& head() { return head_; }

 private:
  GruCell forward_;
  GruCell backward_;
  Mlp head_;
};

/// Multi-head self-attention over (m_1..m_N, e) plus slot position encodings.
class TransformerPolicy final : public EvictionPolicy {
 public:
  TransformerPolicy(ParameterStore& store, std::size_t dim, std::size_t heads,
                    bool position_encoding, std::mt19937_64& rng);
  PolicyKind kind() const override { return PolicyKind::emr_transformer; }
  std::size_t arity(std::size_t n) const override { return n + 1; }
  PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const override;
  std::size_t hidden_dim() const override { return output_.cols(); }
  bool learnable() const override { return true; }

  std::size_t heads() const { return heads_; }
  ad::Node query() const { return query_; }
  ad::Node key() const { return key_; }
  ad::Node value() const { return value_; }
  ad::Node output() const { return output_; }
  const Mlp& head() const { return head_; }
  bool position_encoding() const { return position_encoding_; }

 private:
  std::size_t heads_;
  bool position_encoding_;
  ad::Node query_, key_, value_, output_;  // k x k each
  Mlp head_;
};

/// Critic: V = MLP(GRU(rho(sum_i h_i), previous state)).
class ValueNetwork {
 public:
  ValueNetwork(ParameterStore& store, std::size_t input_dim, std::size_t dim, std::mt19937_64& rng);

  struct Output {
    ad::Node value;  // 1 x 1
    ad::Node state;  // 1 x dim, feed to the next call
  };
  Output evaluate(const ad::Node& hidden_states, const ad::Node& previous_state) const;
  ad::Node initial_state() const { return cell_.zero_state(); }

 private:
  Mlp rho_;
  GruCell cell_;
  Mlp head_;
};

std::unique_ptr<EvictionPolicy> make_policy(PolicyKind kind, ParameterStore& store,
                                            std::size_t dim, std::size_t hidden, std::size_t heads,
                                            bool position_encoding, std::mt19937_64& rng);

}  // namespace emr
