#include "emr/solver.hpp"

#include <algorithm>
#include <stdexcept>

#include "emr/layers.hpp"

namespace emr {

namespace {

void zero_padding_row(ad::Node& table) {
  auto& v = table.mutable_value();
  std::fill(v.row_ptr(0), v.row_ptr(0) + v.cols(), 0.0);
}

}  // namespace

MemN2NSolver::MemN2NSolver(ParameterStore& store, const SolverConfig& config, std::mt19937_64& rng)
    : config_(config),
      position_weights_(sentence_position_weights(kMaxSentenceLength, config.embed_dim)) {
  if (config.vocabulary < 2) throw std::invalid_argument("solver needs a vocabulary");
  if (config.hops == 0) throw std::invalid_argument("solver needs at least one hop");
  const std::size_t k = config.embed_dim;
  input_table_ = store.add_gaussian("solver/A1", config.vocabulary, k, kInitStddev, rng);
  zero_padding_row(input_table_);
  for (std::size_t h = 1; h <= config.hops; ++h) {
    value_tables_.push_back(
        store.add_gaussian("solver/C" + std::to_string(h), config.vocabulary, k, kInitStddev, rng));
    zero_padding_row(value_tables_.back());
  }
  if (config.temporal) {
    input_temporal_ = store.add_gaussian("solver/TA1", config.max_age, k, kInitStddev, rng);
    for (std::size_t h = 1; h <= config.hops; ++h) {
      value_temporal_.push_back(
          store.add_gaussian("solver/TC" + std::to_string(h), config.max_age, k, kInitStddev, rng));
    }
  }
}

ad::Node MemN2NSolver::sentence_embedding(const ad::Node& table,
                                          std::span<const EncodedEntry> memory) const {
  std::vector<std::vector<int>> sentences;
  sentences.reserve(memory.size());
  for (const auto& e : memory) sentences.push_back(e.source_tokens);
  return ad::weighted_bag(table, sentences, position_weights_);
}

Answer MemN2NSolver::solve(std::span<const EncodedEntry> memory,
                           const std::vector<TokenId>& question, int question_timestep) const {
  if (memory.empty()) throw std::invalid_argument("cannot answer from an empty memory");

  std::vector<int> ages;
  if (config_.temporal) {
    ages.reserve(memory.size());
    for (const auto& e : memory) {
      const int age = std::max(0, question_timestep - e.source_timestep);
      ages.push_back(std::min(age, static_cast<int>(config_.max_age) - 1));
    }
  }
  auto memory_rows = [&](const ad::Node& table, const ad::Node& temporal) {
    ad::Node m = sentence_embedding(table, memory);
    if (config_.temporal) m = m + ad::lookup_rows(temporal, ages);
    return m;
  };

  const std::vector<std::vector<int>> q{question};
  ad::Node u = ad::weighted_bag(input_table_, q, position_weights_);
  Answer answer;
  ad::Node keys = memory_rows(input_table_, input_temporal_);
  for (std::size_t h = 0; h < config_.hops; ++h) {
    const ad::Node values =
        memory_rows(value_tables_[h], config_.temporal ? value_temporal_[h] : ad::Node());
    const ad::Node scores = ad::matmul(u, ad::transpose(keys));
    const ad::Node p = linear_attention_ ? scores : ad::softmax_rows(scores);
    answer.attention.push_back(p.value());
    u = u + ad::matmul(p, values);
    keys = values;  // adjacent tying: next hop's input memory is this hop's value memory
  }
  // Answer projection over every token except padding, whose logit is pinned at 0.
  const ad::Node& last = value_tables_.back();
  const ad::Node scored = ad::matmul(u, ad::transpose(ad::slice_rows(last, 1, last.rows() - 1)));
  const ad::Node pad = ad::constant(ad::Array::scalar(0.0));
  const ad::Node parts[] = {pad, scored};
  answer.logits = ad::concat_cols(parts);

  const auto vals = answer.logits.value().values();
  answer.predicted = static_cast<TokenId>(std::max_element(vals.begin(), vals.end()) - vals.begin());
  return answer;
}

ad::Node solver_loss(const Answer& answer, TokenId gold) {
  return ad::cross_entropy(answer.logits, gold);
}

double reward(const Answer& answer, TokenId gold) { return answer.predicted == gold ? 1.0 : 0.0; }

}  // namespace emr
