#pragma once

// Rollouts over episode streams and the two policy-gradient learners:
// synchronous advantage actor-critic and non-episodic REINFORCE with a
// difference reward. The solver is co-trained with cross-entropy.

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "emr/config.hpp"
#include "emr/memory.hpp"
#include "emr/model.hpp"
#include "emr/task_gen.hpp"

namespace emr {

struct StepRecord {
  int timestep = 0;  // timestep of the incoming fact that forced the decision
  std::size_t action = 0;
  std::size_t arity = 0;
  ad::Node log_prob;  // empty for rule policies
  ad::Node entropy;
  ad::Node value;  // critic estimate, a2c only
  double log_prob_value = 0.0;
  double entropy_value = 0.0;
  double value_estimate = 0.0;
  double reward = 0.0;
  // Solver correctness on the upcoming question before and after the action.
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  bool done = false;
};

struct QaOutcome {
  int timestep = 0;
  TokenId gold = 0;
  TokenId predicted = 0;
  bool correct = false;
  bool solvable = false;
  double noise_bucket = 0.0;
  ad::Node loss;  // solver cross-entropy, training rollouts only
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<QaOutcome> outcomes;
};

enum class RolloutMode { train, test };

struct RolloutOptions {
  RolloutMode mode = RolloutMode::test;
  /// Probe solver correctness around each action (needed by the difference reward).
  bool probe_accuracy = false;
  /// Evaluate the critic at each action.
  bool value_estimates = false;
  /// Record the solver's cross-entropy at each question.
  bool solver_loss = false;
  /// 0 means the model's configured memory size.
  std::size_t memory_slots = 0;
};

/// Optional hooks for inspection dumps.
struct RolloutObserver {
  std::function<void(const StreamItem&, const MemoryState&, const QaOutcome&)> on_question;
  std::function<void(const ActionRecord&, const MemoryState&)> on_action;
};

/// Streams one episode item by item through encoder, memory and solver, so
/// that a trainer can update parameters between items. Train mode samples
/// actions; test mode follows the argmax and records no gradients.
class EpisodeRunner {
 public:
  EpisodeRunner(const Episode& episode, const Model& model, const RolloutOptions& options,
                std::mt19937_64& rng, const RolloutObserver* observer = nullptr);

  bool done() const { return next_ >= episode_->items.size(); }
  /// Index of the next item to process.
  std::size_t position() const { return next_; }
  /// Processes one item; returns true if it forced an eviction decision.
  bool advance();
  /// Cuts the critic's recurrent state off from earlier graph history.
  void truncate_history();

  const Trajectory& trajectory() const { return trajectory_; }
  Trajectory& trajectory() { return trajectory_; }
  const MemoryState& memory() const { return memory_; }

 private:
  const Episode* episode_;
  const Model* model_;
  RolloutOptions options_;
  std::mt19937_64* rng_;
  const RolloutObserver* observer_;
  std::optional<ad::NoGradGuard> no_grad_;
  MemoryState memory_;
  ActionMode mode_;
  double bucket_;
  std::vector<const StreamItem*> upcoming_;
  const ValueNetwork* critic_ = nullptr;
  ad::Node critic_state_;
  std::optional<double> cached_;  // correctness of `cached_for_` on the current memory
  int cached_for_ = -1;
  std::size_t next_ = 0;
  Trajectory trajectory_;
};

/// Runs an EpisodeRunner to the end.
Trajectory rollout(const Episode& episode, const Model& model, const RolloutOptions& options,
                   std::mt19937_64& rng, const RolloutObserver* observer = nullptr);

struct RolloutMetrics {
  std::size_t questions = 0;
  std::size_t correct = 0;
  std::size_t solvable = 0;
  double accuracy() const { return questions ? double(correct) / double(questions) : 0.0; }
  double solvable_rate() const { return questions ? double(solvable) / double(questions) : 0.0; }
};
RolloutMetrics metrics(const Trajectory& trajectory);

/// Each step earns the 0/1 outcome of the first question after it; steps after
/// the last question earn 0.
void reward_terminal(Trajectory& trajectory);
/// R = accuracy_after - accuracy_before for every step.
void reward_difference(Trajectory& trajectory);
/// Successive differences acc[t] - acc[t-1], t >= 1.
std::vector<double> difference_rewards(std::span<const double> accuracies);

/// G_t = sum_j gamma^j R_{t+j}.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);
/// Discounted returns closed with gamma^(n - t) * bootstrap after the last reward.
std::vector<double> bootstrapped_returns(std::span<const double> rewards, double gamma,
                                         double bootstrap);

struct LossTerms {
  ad::Node total;  // empty when nothing is differentiable
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double solver = 0.0;
  std::size_t decisions = 0;
};

/// A contiguous slice of one trajectory: steps [first_step, end_step) and
/// question outcomes [first_outcome, end_outcome). Returns inside the slice are
/// closed with gamma^len * bootstrap.
struct Segment {
  const Trajectory* trajectory = nullptr;
  std::size_t first_step = 0, end_step = 0;
  std::size_t first_outcome = 0, end_outcome = 0;
  double bootstrap = 0.0;
  static Segment whole(const Trajectory& t);
};

/// Advantage actor-critic: -sum A_t log pi + c_v sum (G_t - V_t)^2
/// - c_e sum H_t + c_s CE, averaged over trajectories. A_t is a constant.
LossTerms a2c_loss(std::span<const Trajectory> trajectories, const TrainConfig& config);
LossTerms a2c_loss(std::span<const Segment> segments, const TrainConfig& config);
/// -sum R_t log pi - c_e sum H_t + c_s CE, averaged over trajectories.
LossTerms reinforce_loss(std::span<const Trajectory> trajectories, const TrainConfig& config);
LossTerms reinforce_loss(std::span<const Segment> segments, const TrainConfig& config);

/// Backward, clip, one Adam step.
LossTerms a2c_update(std::span<const Trajectory> trajectories, ParameterStore& params,
                     const TrainConfig& config);
LossTerms reinforce_update(std::span<const Trajectory> trajectories, ParameterStore& params,
                           const TrainConfig& config);

/// Memory holding the question's supporting facts plus random earlier facts,
/// up to `slots` entries, in stream order.
std::vector<EncodedEntry> oracle_memory(const Episode& episode, const StreamItem& question,
                                        std::size_t slots, std::mt19937_64& rng);

struct PretrainReport {
  std::size_t steps = 0;
  double final_loss = 0.0;
};
/// Supervised solver training on oracle memories; one step is one Adam update
/// over the questions of one episode. The first `linear_steps` steps run with
/// linear hop attention.
PretrainReport pretrain_solver(Model& model, const std::vector<Episode>& episodes,
                               std::size_t steps, double learning_rate, std::size_t slots,
                               std::uint64_t seed, std::size_t linear_steps = 0);
/// Solver accuracy with oracle memories of `slots` entries.
double oracle_memory_accuracy(const Model& model, const std::vector<Episode>& episodes,
                              std::size_t slots, std::uint64_t seed);

struct CurvePoint {
  std::size_t step = 0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  double eval_solvable = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::size_t updates = 0;
  std::size_t environment_steps = 0;
  double best_eval_accuracy = 0.0;
  double best_eval_solvable = 0.0;
  std::size_t best_step = 0;
  std::unique_ptr<Model> best_model;
};

std::string curve_csv(const std::vector<CurvePoint>& curve);

/// Pretrains (if configured), then streams training episodes for
/// config.total_steps items, updating on the configured schedule. Writes curves.csv, best/ and final/
/// checkpoints into `out_dir` when it is non-empty.
TrainResult train(const TrainConfig& config, const std::vector<Episode>& train_set,
                  const std::vector<Episode>& eval_set, const std::filesystem::path& out_dir);
/// Generates the train and eval splits from the config and trains into config.output_dir.
TrainResult train(const TrainConfig& config);

}  // namespace emr
