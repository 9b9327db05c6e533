#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "emr/autodiff.hpp"

namespace emr {

/// Named, ordered collection of learnable leaf nodes plus Adam moments.
///
/// Entries are kept in name order so that iteration, checkpoint layout and
/// gradient merging are deterministic. A worker snapshot is an independent
/// deep copy; merge_gradients() folds a worker's accumulated gradients back.
class ParameterStore {
 public:
  struct Entry {
    ad::Node node;
    ad::Array first_moment;
    ad::Array second_moment;
    std::int64_t step = 0;
  };

  ParameterStore() = default;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  /// Registers a new parameter. Throws std::invalid_argument on duplicate names.
  ad::Node add(const std::string& name, ad::Array init);
  /// Registers a rows x cols parameter drawn from N(0, stddev^2).
  ad::Node add_gaussian(const std::string& name, std::size_t rows, std::size_t cols,
                        double stddev, std::mt19937_64& rng);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  ad::Node get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
  std::map<std::string, Entry>& entries() noexcept { return entries_; }

  void zero_grad();
  /// Global L2 norm of all accumulated gradients.
  double grad_norm() const;
  /// Rescales gradients so their global norm is at most max_norm; returns the norm before.
  double clip_grad_norm(double max_norm);

  /// Deep copy of the current values with fresh gradients, for one rollout worker.
  ParameterStore snapshot() const;
  /// Adds weight * worker gradients into this store's gradients (names must match).
  void merge_gradients(const ParameterStore& worker, double weight);
  /// Copies values (not optimizer state) from another store with identical layout.
  void copy_values_from(const ParameterStore& other);

 private:
  std::map<std::string, Entry> entries_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  NonFiniteGradientError(const std::string& name)
      : std::runtime_error("non-finite gradient in parameter '" + name + "'"), parameter(name) {}
  std::string parameter;
};

/// One bias-corrected Adam update over every entry, then zeroes gradients.
/// Throws NonFiniteGradientError before touching any value if a gradient is not finite.
void adam_step(ParameterStore& store, double learning_rate, const AdamOptions& options = {});

// Checkpoints live in a directory holding `manifest.tsv` (name, shape, dtype,
// byte offset per line) and `weights.bin` (little-endian float64 blob).
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& dir);
/// Loads values into an already-built store; every name and shape must match.
void load_checkpoint(ParameterStore& store, const std::filesystem::path& dir);

}  // namespace emr
