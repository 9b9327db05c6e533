#include "emr/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "emr/rl.hpp"

namespace emr {

bool solvable(const MemoryState& memory, const StreamItem& question) {
  if (!question.is_question()) throw std::invalid_argument("solvable() needs a question item");
  return std::all_of(question.supports.begin(), question.supports.end(),
                     [&](int t) { return memory.contains_source(t); });
}

EvalReport evaluate(const Model& model, const std::vector<Episode>& episodes,
                    std::size_t memory_slots, std::uint64_t seed, std::string digest) {
  EvalReport report;
  report.policy = std::string(to_string(model.config().policy));
  report.memory_slots = memory_slots ? memory_slots : model.config().memory_slots;
  report.episodes = episodes.size();
  report.seed = seed;
  report.digest = std::move(digest);

  RolloutOptions options;
  options.mode = RolloutMode::test;
  options.memory_slots = report.memory_slots;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    std::mt19937_64 rng(splitmix64(seed + 0x2545f491ULL * (i + 1)));
    const Trajectory t = rollout(episodes[i], model, options, rng);
    LevelStats& level = report.by_noise[episodes[i].noise_bucket()];
    for (const auto& o : t.outcomes) {
      for (LevelStats* s : {&report.total, &level}) {
        ++s->questions;
        s->correct += o.correct;
        s->solvable += o.solvable;
      }
    }
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [noise, s] : by_noise) {
    std::ostringstream key;
    key << std::fixed << std::setprecision(2) << noise;
    levels[key.str()] = {{"questions", s.questions},
                         {"accuracy", s.accuracy()},
                         {"solvable", s.solvable_rate()}};
  }
  return {{"policy", policy},
          {"memory_slots", memory_slots},
          {"episodes", episodes},
          {"questions", total.questions},
          {"accuracy", accuracy()},
          {"solvable", solvable()},
          {"by_noise", levels},
          {"seed", seed},
          {"config_digest", digest}};
}

std::string EvalReport::csv_header() {
  return "policy,memory_slots,episodes,questions,accuracy,solvable,seed,config_digest";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os << std::setprecision(17) << policy << ',' << memory_slots << ',' << episodes << ','
     << total.questions << ',' << accuracy() << ',' << solvable() << ',' << seed << ',' << digest;
  return os.str();
}

std::vector<QuestionTrace> inspect_episode(const Model& model, const Episode& episode,
                                           std::size_t memory_slots, std::uint64_t seed) {
  const Vocabulary& vocab = Vocabulary::standard();
  std::vector<QuestionTrace> traces;
  std::vector<int> evicted;
  std::size_t evicted_noise = 0;

  RolloutObserver observer;
  observer.on_action = [&](const ActionRecord& action, const MemoryState&) {
    evicted.push_back(action.evicted_source_timestep);
    evicted_noise += episode.at_timestep(action.evicted_source_timestep).is_noise;
  };
  observer.on_question = [&](const StreamItem& q, const MemoryState& memory, const QaOutcome& o) {
    QuestionTrace trace;
    trace.timestep = q.timestep;
    trace.question = vocab.render(q.tokens);
    trace.answer = vocab.token(q.answer);
    trace.predicted = vocab.token(o.predicted);
    trace.supports = q.supports;
    trace.solvable = o.solvable;
    trace.correct = o.correct;
    for (const auto& e : memory.entries) {
      const StreamItem& fact = episode.at_timestep(e.source_timestep);
      trace.slots.push_back({e.source_timestep, vocab.render(fact.tokens),
                             std::count(q.supports.begin(), q.supports.end(), e.source_timestep) > 0,
                             fact.is_noise});
    }
    trace.evicted = evicted;
    trace.evicted_noise = evicted_noise;
    traces.push_back(std::move(trace));
  };

  RolloutOptions options;
  options.mode = RolloutMode::test;
  options.memory_slots = memory_slots;
  std::mt19937_64 rng(seed);
  rollout(episode, model, options, rng, &observer);
  return traces;
}

std::string format_traces(const std::vector<QuestionTrace>& traces) {
  std::ostringstream os;
  for (const auto& t : traces) {
    os << "t=" << t.timestep << "  " << t.question << "?  answer=" << t.answer
       << "  predicted=" << t.predicted << "  solvable=" << (t.solvable ? "yes" : "no")
       << "  evicted_noise=" << t.evicted_noise << '/' << t.evicted.size() << '\n';
    for (const auto& s : t.slots) {
      os << "  [" << std::setw(2) << s.timestep << "] " << (s.support ? '*' : ' ')
         << (s.noise ? '~' : ' ') << ' ' << s.text << '\n';
    }
  }
  return os.str();
}

nlohmann::json traces_to_json(const std::vector<QuestionTrace>& traces) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : traces) {
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& s : t.slots) {
      slots.push_back({{"t", s.timestep}, {"text", s.text}, {"support", s.support},
                       {"noise", s.noise}});
    }
    out.push_back({{"t", t.timestep},
                   {"question", t.question},
                   {"answer", t.answer},
                   {"predicted", t.predicted},
                   {"supports", t.supports},
                   {"solvable", t.solvable},
                   {"correct", t.correct},
                   {"evicted", t.evicted},
                   {"evicted_noise", t.evicted_noise},
                   {"slots", slots}});
  }
  return out;
}

}  // namespace emr
