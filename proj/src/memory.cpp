#include "emr/memory.hpp"

#include <algorithm>
#include <stdexcept>

namespace emr {

ad::Node MemoryState::stacked() const {
  std::vector<ad::Node> rows;
  rows.reserve(entries.size());
  for (const auto& e : entries) rows.push_back(e.vector);
  return ad::concat_rows(rows);
}

std::vector<int> MemoryState::source_timesteps() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.source_timestep);
  return out;
}

bool MemoryState::contains_source(int timestep) const {
  return std::any_of(entries.begin(), entries.end(),
                     [timestep](const EncodedEntry& e) { return e.source_timestep == timestep; });
}

std::size_t select_action(const std::vector<double>& probabilities, ActionMode mode,
                          std::mt19937_64& rng) {
  if (probabilities.empty()) throw std::invalid_argument("empty action distribution");
  if (mode == ActionMode::argmax) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probabilities.size(); ++i)
      if (probabilities[i] > probabilities[best]) best = i;
    return best;
  }
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] <= 0.0) continue;
    cumulative += probabilities[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

std::optional<ActionRecord> append_or_evict(MemoryState& memory, EncodedEntry entry,
                                            const EvictionPolicy& policy, ActionMode mode,
                                            std::mt19937_64& rng) {
  if (memory.capacity == 0) throw std::invalid_argument("memory capacity must be positive");
  if (memory.usage.size() != memory.entries.size()) memory.usage.resize(memory.entries.size(), 0.0);
  if (!memory.full()) {
    memory.entries.push_back(std::move(entry));
    memory.usage.push_back(0.0);
    return std::nullopt;
  }

  ActionRecord record;
  record.output = policy.evaluate(memory, entry);
  record.arity = record.output.probabilities.size();
  if (record.arity != policy.arity(memory.size())) {
    throw std::logic_error("policy returned a distribution of the wrong arity");
  }
  const ActionMode effective = policy.always_samples() ? ActionMode::sample : mode;
  record.index = select_action(record.output.probabilities, effective, rng);
  record.probability = record.output.probabilities[record.index];
  record.timestep = entry.source_timestep;
  if (record.output.logits.valid()) {
    record.log_prob = ad::element(ad::log_softmax_rows(record.output.logits), 0, record.index);
    record.entropy = ad::entropy_from_logits(record.output.logits);
  }
  if (!record.output.usage.empty()) memory.usage = record.output.usage;

  if (record.index == memory.size()) {
    record.dropped_incoming = true;
    record.evicted_source_timestep = entry.source_timestep;
    return record;
  }
  const auto pos = static_cast<std::ptrdiff_t>(record.index);
  record.evicted_source_timestep = memory.entries[record.index].source_timestep;
  memory.entries.erase(memory.entries.begin() + pos);
  memory.usage.erase(memory.usage.begin() + pos);
  memory.entries.push_back(std::move(entry));
  memory.usage.push_back(0.0);
  return record;
}

}  // namespace emr
