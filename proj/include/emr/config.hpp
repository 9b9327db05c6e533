#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "emr/task_gen.hpp"

namespace emr {

enum class EncoderKind { memn2n_value_sum, gru };
enum class PolicyKind { fifo, lifo, uniform, emr_independent, emr_bigru, emr_transformer };
enum class Algorithm { a2c, reinforce_diff };
enum class RewardScheme { terminal, difference };
/// When parameters are updated while streaming an episode.
enum class UpdateSchedule { episode, question, step };

std::string_view to_string(EncoderKind k);
std::string_view to_string(PolicyKind k);
std::string_view to_string(Algorithm a);
std::string_view to_string(RewardScheme r);
std::string_view to_string(UpdateSchedule u);
std::string_view to_string(SplitKind s);
EncoderKind parse_encoder(std::string_view s);
PolicyKind parse_policy(std::string_view s);
Algorithm parse_algorithm(std::string_view s);
RewardScheme parse_reward(std::string_view s);
UpdateSchedule parse_schedule(std::string_view s);
SplitKind parse_split(std::string_view s);

bool is_learned(PolicyKind k);

struct ModelConfig {
  std::size_t embed_dim = 20;
  EncoderKind encoder = EncoderKind::memn2n_value_sum;
  std::size_t hops = 3;
  bool temporal = true;
  PolicyKind policy = PolicyKind::emr_bigru;
  std::size_t memory_slots = 20;
  std::size_t heads = 4;
  /// 0 means "same as embed_dim".
  std::size_t policy_hidden = 0;
  bool slot_position_encoding = true;
  /// Rows of the temporal tables; ages beyond are clamped.
  std::size_t max_age = 64;
  std::size_t vocabulary_size = 0;  // 0 means the standard vocabulary

  std::size_t resolved_hidden() const { return policy_hidden == 0 ? embed_dim : policy_hidden; }
  std::size_t resolved_vocabulary() const;
};

struct TrainConfig {
  ModelConfig model;
  Algorithm algorithm = Algorithm::a2c;
  /// Defaults to terminal for a2c and difference for reinforce_diff.
  std::optional<RewardScheme> reward;
  /// Defaults to question for a2c (n-step segments closed by each question)
  /// and step for reinforce_diff. `step` needs the difference reward.
  std::optional<UpdateSchedule> update;
  double discount = 0.1;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double solver_coef = 1.0;
  double learning_rate = 0.0005;
  double grad_clip = 40.0;
  std::size_t workers = 1;
  std::size_t total_steps = 400000;
  std::uint64_t seed = 1;

  // Data and schedule.
  SplitKind split = SplitKind::noisy;
  std::size_t train_episodes = 2000;
  std::size_t eval_episodes = 200;
  std::uint64_t data_seed = 7;
  std::uint64_t eval_seed = 1007;
  std::size_t pretrain_steps = 0;
  /// Leading pretraining steps run with linear hop attention.
  std::size_t pretrain_linear_steps = 8000;
  std::size_t eval_interval = 20000;
  std::string output_dir = "run";

  RewardScheme resolved_reward() const;
  UpdateSchedule resolved_update() const;
  void validate() const;
};

/// Parses flat key=value text (# comments, blank lines allowed). Unknown keys throw.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& config);
/// Stable hex digest of the formatted configuration.
std::string config_digest(const TrainConfig& config);

}  // namespace emr
