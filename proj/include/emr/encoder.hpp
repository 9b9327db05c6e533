#pragma once

// Data encoders: map an incoming fact to its k-dimensional memory vector.

#include <memory>
#include <random>
#include <vector>

#include "emr/autodiff.hpp"
#include "emr/layers.hpp"
#include "emr/parameter_store.hpp"
#include "emr/task_gen.hpp"

namespace emr {

struct EncodedEntry {
  ad::Node vector;  // 1 x k; may be empty for solver-only memories
  int source_timestep = 0;
  std::vector<TokenId> source_tokens;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  /// Throws std::invalid_argument for questions, std::out_of_range for unknown token ids.
  virtual EncodedEntry encode(const StreamItem& item) const = 0;
  virtual std::size_t dim() const = 0;
};

/// Sum over the solver's hops of each hop's position-encoded value embedding.
/// Shares the tables with the solver, so encoder gradients land in them.
class ValueSumEncoder final : public Encoder {
 public:
  ValueSumEncoder(std::vector<ad::Node> value_tables, ad::Array position_weights);
  EncodedEntry encode(const StreamItem& item) const override;
  std::size_t dim() const override { return tables_.front().cols(); }

 private:
  std::vector<ad::Node> tables_;
  ad::Array position_weights_;
};

/// Word embeddings run through a GRU; the last state is the entry vector.
class GruEncoder final : public Encoder {
 public:
  GruEncoder(ParameterStore& store, std::size_t vocabulary, std::size_t dim, std::mt19937_64& rng);
  EncodedEntry encode(const StreamItem& item) const override;
  std::size_t dim() const override { return cell_.hidden_size(); }

 private:
  ad::Node embedding_;
  GruCell cell_;
};

}  // namespace emr
