#include "emr/encoder.hpp"

#include <stdexcept>

namespace emr {

namespace {

void require_fact(const StreamItem& item) {
  if (!item.is_fact()) throw std::invalid_argument("only fact items are encoded into memory");
}

}  // namespace

ValueSumEncoder::ValueSumEncoder(std::vector<ad::Node> value_tables, ad::Array position_weights)
    : tables_(std::move(value_tables)), position_weights_(std::move(position_weights)) {
  if (tables_.empty()) throw std::invalid_argument("value-sum encoder needs at least one table");
}

EncodedEntry ValueSumEncoder::encode(const StreamItem& item) const {
  require_fact(item);
  const std::vector<std::vector<int>> sentence{item.tokens};
  ad::Node vec = ad::weighted_bag(tables_[0], sentence, position_weights_);
  for (std::size_t h = 1; h < tables_.size(); ++h) {
    vec = vec + ad::weighted_bag(tables_[h], sentence, position_weights_);
  }
  return {vec, item.timestep, item.tokens};
}

GruEncoder::GruEncoder(ParameterStore& store, std::size_t vocabulary, std::size_t dim,
                       std::mt19937_64& rng)
    : embedding_(store.add_gaussian("encoder/embedding", vocabulary, dim, kInitStddev, rng)),
      cell_(store, "encoder/gru", dim, dim, rng) {
  std::fill(embedding_.mutable_value().row_ptr(0), embedding_.mutable_value().row_ptr(0) + dim, 0.0);
}

EncodedEntry GruEncoder::encode(const StreamItem& item) const {
  require_fact(item);
  std::vector<int> words;
  for (TokenId t : item.tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= embedding_.rows()) {
      throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary");
    }
    if (t != Vocabulary::kPad) words.push_back(t);
  }
  if (words.empty()) return {cell_.zero_state(), item.timestep, item.tokens};
  const ad::Node states = cell_.run(ad::lookup_rows(embedding_, words));
  return {ad::slice_rows(states, states.rows() - 1, 1), item.timestep, item.tokens};
}

}  // namespace emr
