#include "emr/model.hpp"

#include <fstream>
#include <random>

namespace emr {

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  const std::size_t k = config.embed_dim;
  SolverConfig sc;
  sc.vocabulary = config.resolved_vocabulary();
  sc.embed_dim = k;
  sc.hops = config.hops;
  sc.temporal = config.temporal;
  sc.max_age = config.max_age;
  solver_ = std::make_unique<MemN2NSolver>(store_, sc, rng);

  switch (config.encoder) {
    case EncoderKind::memn2n_value_sum:
      encoder_ = std::make_unique<ValueSumEncoder>(solver_->value_tables(), solver_->position_weights());
      break;
    case EncoderKind::gru:
      encoder_ = std::make_unique<GruEncoder>(store_, sc.vocabulary, k, rng);
      break;
  }
  policy_ = make_policy(config.policy, store_, k, config.resolved_hidden(), config.heads,
                        config.slot_position_encoding, rng);
  if (policy_->learnable()) {
    value_ = std::make_unique<ValueNetwork>(store_, policy_->hidden_dim(), k, rng);
  }
}

std::unique_ptr<Model> Model::clone() const {
  auto copy = std::make_unique<Model>(config_);
  copy->store_.copy_values_from(store_);
  return copy;
}

void save_model(const Model& model, const TrainConfig& config, const std::filesystem::path& dir) {
  save_checkpoint(model.params(), dir);
  TrainConfig stored = config;
  stored.model = model.config();
  std::ofstream os(dir / "config.txt");
  if (!os) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
  os << format_train_config(stored);
}

LoadedModel load_model(const std::filesystem::path& dir) {
  LoadedModel out;
  out.config = load_train_config(dir / "config.txt");
  out.model = std::make_unique<Model>(out.config.model, out.config.seed);
  load_checkpoint(out.model->params(), dir);
  return out;
}

}  // namespace emr
