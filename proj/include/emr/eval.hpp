#pragma once

// Argmax evaluation: QA accuracy and the solvable rate (every supporting fact
// of a question still in memory when it arrives).

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emr/memory.hpp"
#include "emr/model.hpp"
#include "emr/task_gen.hpp"

namespace emr {

/// True iff every supporting timestep of `question` is a retained source.
bool solvable(const MemoryState& memory, const StreamItem& question);

struct LevelStats {
  std::size_t questions = 0;
  std::size_t correct = 0;
  std::size_t solvable = 0;
  double accuracy() const { return questions ? double(correct) / double(questions) : 0.0; }
  double solvable_rate() const { return questions ? double(solvable) / double(questions) : 0.0; }
  friend bool operator==(const LevelStats&, const LevelStats&) = default;
};

struct EvalReport {
  std::string policy;
  std::size_t memory_slots = 0;
  std::size_t episodes = 0;
  LevelStats total;
  std::map<double, LevelStats> by_noise;  // keyed by episode noise bucket
  std::uint64_t seed = 0;
  std::string digest;

  double accuracy() const { return total.accuracy(); }
  double solvable() const { return total.solvable_rate(); }

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Argmax rollouts over `episodes` at `memory_slots` (0 means the model's own).
/// Policies that always sample draw from a per-episode stream derived from `seed`.
EvalReport evaluate(const Model& model, const std::vector<Episode>& episodes,
                    std::size_t memory_slots, std::uint64_t seed, std::string digest = {});

struct RetainedSlot {
  int timestep = 0;
  std::string text;
  bool support = false;
  bool noise = false;
};

struct QuestionTrace {
  int timestep = 0;
  std::string question;
  std::string answer;
  std::string predicted;
  std::vector<int> supports;
  bool solvable = false;
  bool correct = false;
  std::vector<RetainedSlot> slots;
  std::vector<int> evicted;        // every source timestep evicted so far
  std::size_t evicted_noise = 0;   // how many of those were noise facts
  /// Solvable and at least one noise fact already evicted.
  bool kept_supports_dropped_noise() const { return solvable && evicted_noise > 0; }
};

/// Per-question view of the retained memory during one argmax rollout.
std::vector<QuestionTrace> inspect_episode(const Model& model, const Episode& episode,
                                           std::size_t memory_slots, std::uint64_t seed);
std::string format_traces(const std::vector<QuestionTrace>& traces);
nlohmann::json traces_to_json(const std::vector<QuestionTrace>& traces);

}  // namespace emr
