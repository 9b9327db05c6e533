#pragma once

// End-to-end memory network reading whatever survives in the episodic memory.
// Adjacent weight tying: question embedding B = A1, A(h+1) = C(h), answer
// projection W = C(H)^T. Temporal tables follow the same tying.

#include <random>
#include <span>
#include <vector>

#include "emr/autodiff.hpp"
#include "emr/encoder.hpp"
#include "emr/parameter_store.hpp"
#include "emr/task_gen.hpp"

namespace emr {

struct SolverConfig {
  std::size_t vocabulary = 0;
  std::size_t embed_dim = 20;
  std::size_t hops = 3;
  bool temporal = true;
  std::size_t max_age = 64;
};

struct Answer {
  ad::Node logits;  // 1 x vocabulary
  TokenId predicted = 0;
  std::vector<ad::Array> attention;  // one 1 x n row per hop
};

class MemN2NSolver {
 public:
  MemN2NSolver(ParameterStore& store, const SolverConfig& config, std::mt19937_64& rng);

  /// Throws std::invalid_argument on an empty memory.
  Answer solve(std::span<const EncodedEntry> memory, const std::vector<TokenId>& question,
               int question_timestep) const;

  /// The value-memory tables C1..CH, the ones the value-sum encoder sums.
  std::vector<ad::Node> value_tables() const { return value_tables_; }
  const ad::Array& position_weights() const { return position_weights_; }
  const SolverConfig& config() const { return config_; }

  /// While on, hop attention uses raw scores instead of a softmax. Used early
  /// in supervised training to get out of the latest-sentence local optimum.
  void set_linear_attention(bool on) { linear_attention_ = on; }
  bool linear_attention() const { return linear_attention_; }

 private:
  ad::Node sentence_embedding(const ad::Node& table, std::span<const EncodedEntry> memory) const;

  SolverConfig config_;
  ad::Node input_table_;                // A1, also the question embedding
  std::vector<ad::Node> value_tables_;  // C1..CH
  ad::Node input_temporal_;             // TA1
  std::vector<ad::Node> value_temporal_;
  ad::Array position_weights_;
  bool linear_attention_ = false;
};

/// -log softmax(logits)[gold].
ad::Node solver_loss(const Answer& answer, TokenId gold);
/// Accuracy reward: 1 when the prediction is the gold token, else 0.
double reward(const Answer& answer, TokenId gold);

}  // namespace emr
