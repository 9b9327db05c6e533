#pragma once

#include <filesystem>
#include <memory>

#include "emr/config.hpp"
#include "emr/encoder.hpp"
#include "emr/parameter_store.hpp"
#include "emr/policies.hpp"
#include "emr/solver.hpp"

namespace emr {

/// Encoder, solver, eviction policy and (for learned policies) value network,
/// all drawing their weights from one ParameterStore.
class Model {
 public:
  explicit Model(const ModelConfig& config, std::uint64_t seed = 1);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }
  const Encoder& encoder() const { return *encoder_; }
  const MemN2NSolver& solver() const { return *solver_; }
  MemN2NSolver& solver() { return *solver_; }
  const EvictionPolicy& policy() const { return *policy_; }
  EvictionPolicy& policy() { return *policy_; }
  /// Null for rule policies.
  const ValueNetwork* value_network() const { return value_.get(); }

  /// Same layout, copied values, fresh optimizer state.
  std::unique_ptr<Model> clone() const;

 private:
  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<MemN2NSolver> solver_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<EvictionPolicy> policy_;
  std::unique_ptr<ValueNetwork> value_;
};

/// Writes config.txt, manifest.tsv and weights.bin into `dir`.
void save_model(const Model& model, const TrainConfig& config, const std::filesystem::path& dir);

struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<Model> model;
};
LoadedModel load_model(const std::filesystem::path& dir);

}  // namespace emr
