#pragma once

// Fixed-capacity episodic memory and the append-or-evict step.

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "emr/autodiff.hpp"
#include "emr/config.hpp"
#include "emr/encoder.hpp"

namespace emr {

struct MemoryState {
  std::size_t capacity = 0;
  std::vector<EncodedEntry> entries;  // append order, oldest first
  std::vector<double> usage;          // per entry usage EMA, moves with its entry

  explicit MemoryState(std::size_t n = 0) : capacity(n) {}
  std::size_t size() const noexcept { return entries.size(); }
  bool full() const noexcept { return entries.size() >= capacity; }
  /// Entry vectors stacked into size() x k.
  ad::Node stacked() const;
  std::vector<int> source_timesteps() const;
  bool contains_source(int timestep) const;
};

/// A distribution over eviction indices. Indices [0, N) name memory slots in
/// order; index N, when the arity is N + 1, names the incoming entry.
struct PolicyOutput {
  ad::Node logits;                  // 1 x arity; empty for rule policies
  std::vector<double> probabilities;
  ad::Node hidden;                  // per-position states for the value network
  std::vector<double> usage;        // updated usage EMA (EMR-Independent only)
  std::vector<ad::Array> attention; // per-head attention (EMR-Transformer only)
};

class EvictionPolicy {
 public:
  virtual ~EvictionPolicy() = default;
  virtual PolicyKind kind() const = 0;
  /// Number of actions for a full memory of `capacity` slots.
  virtual std::size_t arity(std::size_t capacity) const = 0;
  /// Scores a full memory against the incoming entry.
  virtual PolicyOutput evaluate(const MemoryState& memory, const EncodedEntry& incoming) const = 0;
  /// Width of PolicyOutput::hidden rows; 0 when the policy has none.
  virtual std::size_t hidden_dim() const { return 0; }
  virtual bool learnable() const { return false; }
  /// True when even test-time selection draws from the distribution.
  virtual bool always_samples() const { return false; }
};

enum class ActionMode { sample, argmax };

struct ActionRecord {
  std::size_t index = 0;
  std::size_t arity = 0;
  PolicyOutput output;
  ad::Node log_prob;  // empty for rule policies
  ad::Node entropy;   // empty for rule policies
  double probability = 1.0;
  int timestep = 0;                 // source timestep of the incoming entry
  bool dropped_incoming = false;
  int evicted_source_timestep = 0;  // equals `timestep` when the newcomer was dropped
};

/// Index drawn from `probabilities`, or the lowest-index maximum in argmax mode.
std::size_t select_action(const std::vector<double>& probabilities, ActionMode mode,
                          std::mt19937_64& rng);

/// Appends below capacity (returns nullopt). At capacity the policy picks an
/// index, that slot is removed (or the newcomer dropped), survivors keep their
/// order and the newcomer goes to the tail with usage 0.
std::optional<ActionRecord> append_or_evict(MemoryState& memory, EncodedEntry entry,
                                            const EvictionPolicy& policy, ActionMode mode,
                                            std::mt19937_64& rng);

}  // namespace emr
