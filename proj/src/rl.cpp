#include "emr/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "emr/eval.hpp"

namespace emr {

namespace {

double probe_correct(const Model& model, const MemoryState& memory, const StreamItem& question) {
  ad::NoGradGuard guard;
  return reward(model.solver().solve(memory.entries, question.tokens, question.timestep),
                question.answer);
}

ad::Node sum_nodes(const std::vector<ad::Node>& nodes) {
  return ad::sum(ad::concat_rows(nodes));
}

}  // namespace

EpisodeRunner::EpisodeRunner(const Episode& episode, const Model& model,
                             const RolloutOptions& options, std::mt19937_64& rng,
                             const RolloutObserver* observer)
    : episode_(&episode),
      model_(&model),
      options_(options),
      rng_(&rng),
      observer_(observer),
      memory_(options.memory_slots ? options.memory_slots : model.config().memory_slots),
      mode_(options.mode == RolloutMode::train ? ActionMode::sample : ActionMode::argmax),
      bucket_(episode.noise_bucket()),
      upcoming_(episode.items.size(), nullptr) {
  if (options.mode == RolloutMode::test) no_grad_.emplace();
  const StreamItem* next = nullptr;
  for (std::size_t i = episode.items.size(); i-- > 0;) {
    if (episode.items[i].is_question()) next = &episode.items[i];
    upcoming_[i] = next;
  }
  if (options.value_estimates) critic_ = model.value_network();
  if (critic_) critic_state_ = critic_->initial_state();
}

void EpisodeRunner::truncate_history() {
  if (critic_state_.valid()) critic_state_ = ad::detach(critic_state_);
}

bool EpisodeRunner::advance() {
  if (done()) throw std::logic_error("episode already finished");
  const std::size_t i = next_++;
  const StreamItem& item = episode_->items[i];
  const Model& model = *model_;

  if (item.is_question()) {
    const Answer answer = model.solver().solve(memory_.entries, item.tokens, item.timestep);
    QaOutcome outcome;
    outcome.timestep = item.timestep;
    outcome.gold = item.answer;
    outcome.predicted = answer.predicted;
    outcome.correct = answer.predicted == item.answer;
    outcome.solvable = solvable(memory_, item);
    outcome.noise_bucket = bucket_;
    if (options_.mode == RolloutMode::train && options_.solver_loss) {
      outcome.loss = solver_loss(answer, item.answer);
    }
    if (observer_ && observer_->on_question) observer_->on_question(item, memory_, outcome);
    trajectory_.outcomes.push_back(std::move(outcome));
    return false;
  }

  EncodedEntry entry = model.encoder().encode(item);
  const StreamItem* q = upcoming_[i];
  const bool probe = options_.probe_accuracy && q != nullptr && memory_.full();
  double before = 0.0;
  if (probe) {
    before = (cached_ && cached_for_ == q->timestep) ? *cached_ : probe_correct(model, memory_, *q);
  }
  auto action = append_or_evict(memory_, std::move(entry), model.policy(), mode_, *rng_);
  if (!action) {
    cached_.reset();
    return false;
  }
  StepRecord step;
  step.timestep = item.timestep;
  step.action = action->index;
  step.arity = action->arity;
  if (action->log_prob.valid()) {
    step.log_prob = action->log_prob;
    step.entropy = action->entropy;
    step.log_prob_value = action->log_prob.value().item();
    step.entropy_value = action->entropy.value().item();
  }
  if (critic_ && action->output.hidden.valid()) {
    // The critic reads the policy's states as data; only its own weights learn from its loss.
    const auto v = critic_->evaluate(ad::detach(action->output.hidden), critic_state_);
    step.value = v.value;
    step.value_estimate = v.value.value().item();
    critic_state_ = v.state;
  }
  if (probe) {
    step.accuracy_before = before;
    step.accuracy_after = probe_correct(model, memory_, *q);
    cached_ = step.accuracy_after;
    cached_for_ = q->timestep;
  }
  if (observer_ && observer_->on_action) observer_->on_action(*action, memory_);
  trajectory_.steps.push_back(std::move(step));
  return true;
}

Trajectory rollout(const Episode& episode, const Model& model, const RolloutOptions& options,
                   std::mt19937_64& rng, const RolloutObserver* observer) {
  EpisodeRunner runner(episode, model, options, rng, observer);
  while (!runner.done()) runner.advance();
  Trajectory out = std::move(runner.trajectory());
  if (!out.steps.empty()) out.steps.back().done = true;
  return out;
}

RolloutMetrics metrics(const Trajectory& trajectory) {
  RolloutMetrics m;
  for (const auto& o : trajectory.outcomes) {
    ++m.questions;
    m.correct += o.correct;
    m.solvable += o.solvable;
  }
  return m;
}

void reward_terminal(Trajectory& trajectory) {
  auto q = trajectory.outcomes.begin();
  for (auto& step : trajectory.steps) {
    while (q != trajectory.outcomes.end() && q->timestep <= step.timestep) ++q;
    step.reward = q == trajectory.outcomes.end() ? 0.0 : (q->correct ? 1.0 : 0.0);
  }
}

void reward_difference(Trajectory& trajectory) {
  for (auto& step : trajectory.steps) step.reward = step.accuracy_after - step.accuracy_before;
}

std::vector<double> difference_rewards(std::span<const double> accuracies) {
  std::vector<double> out;
  for (std::size_t t = 1; t < accuracies.size(); ++t) out.push_back(accuracies[t] - accuracies[t - 1]);
  return out;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("discount must lie in [0, 1]");
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

std::vector<double> bootstrapped_returns(std::span<const double> rewards, double gamma,
                                         double bootstrap) {
  std::vector<double> out = discounted_returns(rewards, gamma);
  double tail = bootstrap;
  for (std::size_t t = out.size(); t-- > 0;) {
    tail *= gamma;
    out[t] += tail;
  }
  return out;
}

Segment Segment::whole(const Trajectory& t) {
  return {&t, 0, t.steps.size(), 0, t.outcomes.size(), 0.0};
}

namespace {

enum class Objective { actor_critic, reinforce };

LossTerms combined_loss(std::span<const Segment> segments, const TrainConfig& config,
                        Objective objective) {
  LossTerms terms;
  if (segments.empty()) return terms;
  std::vector<ad::Node> parts;
  for (const auto& seg : segments) {
    const Trajectory& traj = *seg.trajectory;
    const std::size_t len = seg.end_step - seg.first_step;
    std::vector<double> weights(len);
    for (std::size_t j = 0; j < len; ++j) weights[j] = traj.steps[seg.first_step + j].reward;
    if (objective == Objective::actor_critic) {
      weights = bootstrapped_returns(weights, config.discount, seg.bootstrap);
    }
    for (std::size_t j = 0; j < len; ++j) {
      const StepRecord& step = traj.steps[seg.first_step + j];
      if (!step.log_prob.valid()) continue;
      ++terms.decisions;
      double weight = weights[j];
      if (objective == Objective::actor_critic && step.value.valid()) {
        weight -= step.value_estimate;  // advantage, held constant
        const ad::Node error = ad::affine(step.value, -1.0, weights[j]);
        const ad::Node squared = error * error;
        terms.value += squared.value().item();
        parts.push_back(ad::scale(squared, config.value_coef));
      }
      if (weight != 0.0) parts.push_back(ad::scale(step.log_prob, -weight));
      terms.policy -= weight * step.log_prob_value;
      terms.entropy += step.entropy_value;
      if (config.entropy_coef != 0.0) parts.push_back(ad::scale(step.entropy, -config.entropy_coef));
    }
    for (std::size_t o = seg.first_outcome; o < seg.end_outcome; ++o) {
      const ad::Node& loss = traj.outcomes[o].loss;
      if (!loss.valid()) continue;
      terms.solver += loss.value().item();
      if (config.solver_coef != 0.0) parts.push_back(ad::scale(loss, config.solver_coef));
    }
  }
  const double inv = 1.0 / static_cast<double>(segments.size());
  terms.policy *= inv;
  terms.value *= inv;
  terms.entropy *= inv;
  terms.solver *= inv;
  if (!parts.empty()) terms.total = ad::scale(sum_nodes(parts), inv);
  return terms;
}

std::vector<Segment> whole(std::span<const Trajectory> trajectories) {
  std::vector<Segment> out;
  for (const auto& t : trajectories) out.push_back(Segment::whole(t));
  return out;
}

LossTerms apply(LossTerms terms, ParameterStore& params, const TrainConfig& config) {
  if (!terms.total.valid()) return terms;
  ad::backward(terms.total);
  params.clip_grad_norm(config.grad_clip);
  adam_step(params, config.learning_rate);
  return terms;
}

}  // namespace

LossTerms a2c_loss(std::span<const Segment> segments, const TrainConfig& config) {
  return combined_loss(segments, config, Objective::actor_critic);
}

LossTerms a2c_loss(std::span<const Trajectory> trajectories, const TrainConfig& config) {
  return a2c_loss(whole(trajectories), config);
}

LossTerms reinforce_loss(std::span<const Segment> segments, const TrainConfig& config) {
  return combined_loss(segments, config, Objective::reinforce);
}

LossTerms reinforce_loss(std::span<const Trajectory> trajectories, const TrainConfig& config) {
  return reinforce_loss(whole(trajectories), config);
}

LossTerms a2c_update(std::span<const Trajectory> trajectories, ParameterStore& params,
                     const TrainConfig& config) {
  return apply(a2c_loss(trajectories, config), params, config);
}

LossTerms reinforce_update(std::span<const Trajectory> trajectories, ParameterStore& params,
                           const TrainConfig& config) {
  return apply(reinforce_loss(trajectories, config), params, config);
}

// ---- solver pretraining ----------------------------------------------------

std::vector<EncodedEntry> oracle_memory(const Episode& episode, const StreamItem& question,
                                        std::size_t slots, std::mt19937_64& rng) {
  std::vector<int> chosen = question.supports;
  std::vector<int> others;
  for (const auto& item : episode.items) {
    if (item.timestep >= question.timestep) break;
    if (item.is_fact() &&
        std::find(chosen.begin(), chosen.end(), item.timestep) == chosen.end()) {
      others.push_back(item.timestep);
    }
  }
  std::shuffle(others.begin(), others.end(), rng);
  for (int t : others) {
    if (chosen.size() >= slots) break;
    chosen.push_back(t);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<EncodedEntry> memory;
  for (int t : chosen) memory.push_back({ad::Node(), t, episode.at_timestep(t).tokens});
  return memory;
}

PretrainReport pretrain_solver(Model& model, const std::vector<Episode>& episodes,
                               std::size_t steps, double learning_rate, std::size_t slots,
                               std::uint64_t seed, std::size_t linear_steps) {
  PretrainReport report;
  if (steps == 0 || episodes.empty()) return report;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  for (std::size_t s = 0; s < steps; ++s) {
    model.solver().set_linear_attention(s < linear_steps);
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Episode& episode = episodes[order[cursor++]];
    std::vector<ad::Node> losses;
    for (const auto& item : episode.items) {
      if (!item.is_question()) continue;
      const auto memory = oracle_memory(episode, item, slots, rng);
      losses.push_back(solver_loss(model.solver().solve(memory, item.tokens, item.timestep),
                                   item.answer));
    }
    if (losses.empty()) continue;
    const ad::Node loss = ad::scale(sum_nodes(losses), 1.0 / static_cast<double>(losses.size()));
    ad::backward(loss);
    model.params().clip_grad_norm(40.0);
    adam_step(model.params(), learning_rate);
    report.final_loss = loss.value().item();
    ++report.steps;
  }
  model.solver().set_linear_attention(false);
  return report;
}

double oracle_memory_accuracy(const Model& model, const std::vector<Episode>& episodes,
                              std::size_t slots, std::uint64_t seed) {
  ad::NoGradGuard guard;
  std::mt19937_64 rng(seed);
  std::size_t questions = 0, correct = 0;
  for (const auto& episode : episodes) {
    for (const auto& item : episode.items) {
      if (!item.is_question()) continue;
      const auto memory = oracle_memory(episode, item, slots, rng);
      const Answer a = model.solver().solve(memory, item.tokens, item.timestep);
      ++questions;
      correct += a.predicted == item.answer;
    }
  }
  return questions ? double(correct) / double(questions) : 0.0;
}

// ---- training loop ---------------------------------------------------------

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "step,train_accuracy,eval_accuracy,eval_solvable,policy_loss,value_loss,entropy\n";
  os << std::setprecision(17);
  for (const auto& p : curve) {
    os << p.step << ',' << p.train_accuracy << ',' << p.eval_accuracy << ',' << p.eval_solvable
       << ',' << p.policy_loss << ',' << p.value_loss << ',' << p.entropy << '\n';
  }
  return os.str();
}

namespace {

struct Worker {
  Model* model = nullptr;
  std::unique_ptr<Model> owned;
  std::mt19937_64 rng;
  const Episode* episode = nullptr;
  std::optional<EpisodeRunner> runner;
  std::size_t step_mark = 0;     // first step of the open segment
  std::size_t outcome_mark = 0;  // first question outcome of the open segment
  double policy = 0.0, value = 0.0, entropy = 0.0;
};

struct Running {
  double questions = 0, correct = 0;
  double policy = 0, value = 0, entropy = 0;
  std::size_t episodes = 0;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<Episode>& train_set,
                  const std::vector<Episode>& eval_set, const std::filesystem::path& out_dir) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  Model master(config.model, config.seed);
  if (config.pretrain_steps > 0) {
    pretrain_solver(master, train_set, config.pretrain_steps, config.learning_rate,
                    config.model.memory_slots, splitmix64(config.seed ^ 0x9e7a1ULL),
                    config.pretrain_linear_steps);
  }

  const RewardScheme scheme = config.resolved_reward();
  const UpdateSchedule schedule = config.resolved_update();
  const bool actor_critic = config.algorithm == Algorithm::a2c;
  RolloutOptions options;
  options.mode = RolloutMode::train;
  options.probe_accuracy = scheme == RewardScheme::difference;
  options.value_estimates = actor_critic;
  options.solver_loss = true;

  const std::size_t worker_count = config.workers;
  std::vector<Worker> workers(worker_count);
  for (std::size_t w = 0; w < worker_count; ++w) {
    if (worker_count == 1) {
      workers[w].model = &master;
    } else {
      workers[w].owned = master.clone();
      workers[w].model = workers[w].owned.get();
    }
    workers[w].rng.seed(splitmix64(config.seed + 0x100 * (w + 1)));
  }

  std::mt19937_64 order_rng(splitmix64(config.seed ^ 0x0deULL));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_episode = [&]() -> const Episode& {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    return train_set[order[cursor++]];
  };

  // Closes each worker's open segment, backpropagates it, and takes one
  // optimizer step on the averaged gradients.
  auto update = [&](bool episode_end, bool decided) -> bool {
    bool any = false;
    for (auto& w : workers) {
      Trajectory& traj = w.runner->trajectory();
      if (scheme == RewardScheme::difference) {
        reward_difference(traj);
      } else {
        reward_terminal(traj);
      }
      Segment seg{&traj, w.step_mark, traj.steps.size(), w.outcome_mark, traj.outcomes.size(), 0.0};
      // Mid-episode actor-critic segments bootstrap from the decision just taken,
      // which then opens the next segment.
      if (actor_critic && !episode_end && decided && seg.end_step > seg.first_step) {
        --seg.end_step;
        seg.bootstrap = traj.steps[seg.end_step].value_estimate;
      }
      const std::span<const Segment> one(&seg, 1);
      const LossTerms terms = actor_critic ? a2c_loss(one, config) : reinforce_loss(one, config);
      if (terms.total.valid()) {
        ad::backward(terms.total);
        any = true;
      }
      w.policy += terms.policy;
      w.value += terms.value;
      w.entropy += terms.entropy;
      w.step_mark = seg.end_step;
      w.outcome_mark = seg.end_outcome;
      w.runner->truncate_history();
    }
    if (!any) return false;
    if (worker_count > 1) {
      const double weight = 1.0 / static_cast<double>(worker_count);
      for (auto& w : workers) {
        master.params().merge_gradients(w.model->params(), weight);
        w.model->params().zero_grad();
      }
    }
    master.params().clip_grad_norm(config.grad_clip);
    adam_step(master.params(), config.learning_rate);
    if (worker_count > 1) {
      for (auto& w : workers) w.model->params().copy_values_from(master.params());
    }
    return true;
  };

  TrainResult result;
  Running running;
  const std::string digest = config_digest(config);
  auto checkpoint = [&](std::size_t step) {
    CurvePoint point;
    point.step = step;
    if (running.questions > 0) point.train_accuracy = running.correct / running.questions;
    if (running.episodes > 0) {
      const double n = static_cast<double>(running.episodes);
      point.policy_loss = running.policy / n;
      point.value_loss = running.value / n;
      point.entropy = running.entropy / n;
    }
    if (!eval_set.empty()) {
      const EvalReport report = evaluate(master, eval_set, config.model.memory_slots,
                                         config.eval_seed, digest);
      point.eval_accuracy = report.accuracy();
      point.eval_solvable = report.solvable();
    }
    result.curve.push_back(point);
    running = Running{};
    const bool better =
        !result.best_model || point.eval_accuracy > result.best_eval_accuracy ||
        (point.eval_accuracy == result.best_eval_accuracy &&
         point.eval_solvable > result.best_eval_solvable);
    if (better) {
      result.best_eval_accuracy = point.eval_accuracy;
      result.best_eval_solvable = point.eval_solvable;
      result.best_step = step;
      result.best_model = master.clone();
      if (!out_dir.empty()) save_model(master, config, out_dir / "best");
    }
  };

  checkpoint(0);
  std::size_t steps = 0;
  std::size_t next_eval = config.eval_interval;
  while (steps < config.total_steps) {
    for (auto& w : workers) {
      w.episode = &next_episode();
      w.runner.emplace(*w.episode, *w.model, options, w.rng);
      w.step_mark = w.outcome_mark = 0;
      w.policy = w.value = w.entropy = 0.0;
    }
    const std::size_t length = workers.front().episode->items.size();
    for (const auto& w : workers) {
      if (w.episode->items.size() != length) {
        throw std::invalid_argument("workers stream episodes in lockstep; lengths must match");
      }
    }
    // Episodes share one layout, so decisions and questions line up across workers.
    const auto& items = workers.front().episode->items;
    for (std::size_t i = 0; i < length; ++i) {
      bool decided = false;
      for (auto& w : workers) decided = w.runner->advance() || decided;
      const bool last = i + 1 == length;
      const bool boundary =
          last || (schedule == UpdateSchedule::step && decided) ||
          (schedule == UpdateSchedule::question && i > 0 && items[i - 1].is_question());
      if (boundary && update(last, decided)) ++result.updates;
    }

    for (auto& w : workers) {
      const auto m = metrics(w.runner->trajectory());
      running.questions += static_cast<double>(m.questions);
      running.correct += static_cast<double>(m.correct);
      running.policy += w.policy;
      running.value += w.value;
      running.entropy += w.entropy;
      ++running.episodes;
      steps += length;
      w.runner.reset();
    }

    if (steps >= next_eval || steps >= config.total_steps) {
      checkpoint(steps);
      while (next_eval <= steps) next_eval += config.eval_interval;
    }
  }
  result.environment_steps = steps;

  if (!out_dir.empty()) {
    write_text(out_dir / "curves.csv", curve_csv(result.curve));
    save_model(master, config, out_dir / "final");
  }
  return result;
}

TrainResult train(const TrainConfig& config) {
  const auto train_set = generate_split(config.data_seed, config.train_episodes, config.split);
  const auto eval_set = generate_split(config.eval_seed, config.eval_episodes, config.split);
  return train(config, train_set, eval_set, config.output_dir);
}

}  // namespace emr
