#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emr/model.hpp"
#include "emr/policies.hpp"
#include "emr/rl.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace emr::checks {

using testing::gradcheck;
using testing::random_array;
using testing::random_state;

void Result::merge(const Result& other) {
  if (!other.ok) fail(other.detail);
  cases += other.cases;
  worst = std::max(worst, other.worst);
}

namespace {

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <class... Args>
std::string describe(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

std::unique_ptr<EvictionPolicy> random_policy(PolicyKind kind, ParameterStore& store, std::size_t k,
                                              std::size_t heads, std::mt19937_64& rng) {
  return make_policy(kind, store, k, k, heads, true, rng);
}

// Scales every weight up so activations leave the near-linear regime of the init.
void spread_weights(ParameterStore& store, std::mt19937_64& rng, double scale) {
  for (auto& [name, entry] : store.entries()) entry.node.mutable_value() = random_array(
      entry.node.rows(), entry.node.cols(), rng, scale);
}

oracle::Vec row_vec(const ad::Array& a) { return {a.values().begin(), a.values().end()}; }

}  // namespace

Result primitive_gradients(std::size_t rounds, std::uint64_t seed, double tolerance) {
  Result r;
  std::mt19937_64 rng(seed);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (auto& c : testing::primitive_cases(rng)) {
      const auto g = gradcheck(c.forward, c.inputs);
      ++r.cases;
      r.worst = std::max(r.worst, g.max_relative_error);
      if (!(g.max_relative_error < tolerance))
        r.fail(describe(c.name, " relative error ", g.max_relative_error));
    }
  }
  return r;
}

Result network_gradients(PolicyKind kind, bool value_network, std::size_t configs,
                         std::uint64_t seed, double tolerance) {
  Result r;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < configs; ++c) {
    const std::size_t n = draw(rng, 1, 5);
    const std::size_t heads = draw(rng, 1, 2);
    const std::size_t k = heads * draw(rng, 1, 3);
    ParameterStore store;
    std::function<ad::Node()> f;
    std::vector<ad::Node> inputs;
    std::vector<std::string> labels;
    std::unique_ptr<EvictionPolicy> policy;
    std::unique_ptr<ValueNetwork> critic;
    testing::RandomState state;

    if (value_network) {
      const std::size_t width = draw(rng, 1, 4);
      critic = std::make_unique<ValueNetwork>(store, width, k, rng);
      spread_weights(store, rng, 0.7);
      auto hidden = ad::parameter(random_array(n + 1, width, rng));
      auto previous = ad::parameter(random_array(1, k, rng, 0.5));
      const ad::Array mix = random_array(1, k, rng);
      f = [&critic, hidden, previous, mix] {
        const auto out = critic->evaluate(hidden, previous);
        return out.value + testing::project(out.state, mix);
      };
      inputs = testing::store_nodes(store, &labels);
      inputs.push_back(hidden);
      inputs.push_back(previous);
    } else {
      policy = random_policy(kind, store, k, heads, rng);
      spread_weights(store, rng, 0.7);
      state = random_state(n, k, rng);
      const std::size_t arity = policy->arity(n);
      const std::size_t action = draw(rng, 0, arity - 1);
      const auto probe = policy->evaluate(state.memory, state.incoming);
      const ad::Array mix = random_array(probe.hidden.rows(), probe.hidden.cols(), rng);
      f = [&policy, &state, action, mix] {
        const auto out = policy->evaluate(state.memory, state.incoming);
        const ad::Node logp = ad::element(ad::log_softmax_rows(out.logits), 0, action);
        return logp + ad::scale(ad::entropy_from_logits(out.logits), 0.3) +
               testing::project(out.hidden, mix);
      };
      inputs = testing::store_nodes(store, &labels);
      for (const auto& leaf : state.leaves) {
        inputs.push_back(leaf);
        labels.push_back("state");
      }
    }
    const auto g = gradcheck(f, inputs, labels);
    ++r.cases;
    r.worst = std::max(r.worst, g.max_relative_error);
    if (!(g.max_relative_error < tolerance)) {
      r.fail(describe("config ", c, " (N=", n, ", k=", k, ") worst tensor ", g.worst, " error ",
                      g.max_relative_error));
    }
  }
  return r;
}

Result independent_oracle(std::size_t instances, std::uint64_t seed, double tolerance) {
  Result r;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = draw(rng, 1, 4), k = draw(rng, 1, 4);
    ParameterStore store;
    IndependentPolicy policy(store, k, rng);
    spread_weights(store, rng, 1.0);
    const auto state = random_state(n, k, rng, 1.5);
    const auto out = policy.evaluate(state.memory, state.incoming);

    oracle::Mat M;
    for (const auto& e : state.memory.entries) M.push_back(row_vec(e.vector.value()));
    const auto expected =
        oracle::independent(M, row_vec(state.incoming.vector.value()),
                            row_vec(policy.gate_weight().value()), policy.gate_bias().value().item(),
                            state.memory.usage);
    ++r.cases;
    for (std::size_t j = 0; j < n; ++j) {
      const double err = std::max(std::abs(out.probabilities[j] - expected.pi[j]),
                                  std::abs(out.usage[j] - expected.usage[j]));
      r.worst = std::max(r.worst, err);
      if (!(err <= tolerance)) r.fail(describe("instance ", i, " slot ", j, " error ", err));
    }
  }
  return r;
}

Result transformer_oracle(std::size_t instances, std::uint64_t seed, double tolerance) {
  Result r;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = draw(rng, 1, 4);
    const std::size_t heads = draw(rng, 1, 2);
    const std::size_t k = heads * draw(rng, 1, 4 / heads);
    const bool positions = draw(rng, 0, 3) != 0;
    ParameterStore store;
    TransformerPolicy policy(store, k, heads, positions, rng);
    spread_weights(store, rng, 1.0);
    const auto state = random_state(n, k, rng, 1.5);
    const auto out = policy.evaluate(state.memory, state.incoming);

    oracle::TransformerWeights w;
    w.query = oracle::to_mat(policy.query().value());
    w.key = oracle::to_mat(policy.key().value());
    w.value = oracle::to_mat(policy.value().value());
    w.output = oracle::to_mat(policy.output().value());
    for (const auto& layer : policy.head().layers)
      w.head.push_back({oracle::to_mat(layer.weight.value()), row_vec(layer.bias.value())});
    w.heads = heads;
    w.positions = positions;
    oracle::Mat X;
    for (const auto& e : state.memory.entries) X.push_back(row_vec(e.vector.value()));
    X.push_back(row_vec(state.incoming.vector.value()));
    const auto pi = oracle::transformer(X, w);

    ++r.cases;
    if (pi.size() != out.probabilities.size()) {
      r.fail(describe("instance ", i, ": arity ", out.probabilities.size(), " vs ", pi.size()));
      continue;
    }
    for (std::size_t j = 0; j < pi.size(); ++j) {
      const double err = std::abs(out.probabilities[j] - pi[j]);
      r.worst = std::max(r.worst, err);
      if (!(err <= tolerance)) r.fail(describe("instance ", i, " index ", j, " error ", err));
    }
  }
  return r;
}

Result returns_oracle(std::size_t instances, std::uint64_t seed, double tolerance) {
  Result r;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t len = draw(rng, 1, 12);
    std::vector<double> rewards(len);
    for (auto& x : rewards) x = draw(rng, 0, 2) == 0 ? unit(rng) * 2 - 1 : double(draw(rng, 0, 1));
    const double gamma = i % 5 == 0 ? 0.1 : unit(rng);
    const double bootstrap = i % 3 == 0 ? 0.0 : unit(rng) * 4 - 2;
    const auto got = bootstrapped_returns(rewards, gamma, bootstrap);
    const auto expected = oracle::returns(rewards, gamma, bootstrap);
    const auto plain = discounted_returns(rewards, gamma);
    const auto plain_expected = oracle::returns(rewards, gamma, 0.0);
    ++r.cases;
    for (std::size_t t = 0; t < len; ++t) {
      const double err = std::max(std::abs(got[t] - expected[t]), std::abs(plain[t] - plain_expected[t])) /
                         std::max(1.0, std::abs(expected[t]));
      r.worst = std::max(r.worst, err);
      if (!(err <= tolerance)) r.fail(describe("instance ", i, " t=", t, " error ", err));
    }
  }
  return r;
}

Result rule_replay(PolicyKind kind, std::size_t episodes, std::size_t slots, std::uint64_t seed) {
  Result r;
  ModelConfig mc;
  mc.policy = kind;
  mc.memory_slots = slots;
  const Model model(mc, seed);
  const auto split = generate_split(seed, episodes, SplitKind::noisy);
  std::mt19937_64 rng(seed);
  for (std::size_t ep = 0; ep < split.size(); ++ep) {
    std::vector<int> seen;
    std::vector<std::size_t> evictions;
    for (const auto& item : split[ep].items)
      if (!item.is_question()) seen.push_back(item.timestep);
    RolloutObserver observer;
    observer.on_action = [&](const ActionRecord& a, const MemoryState&) {
      evictions.push_back(a.index);
      if (kind == PolicyKind::fifo && a.index != 0) r.fail(describe("fifo evicted index ", a.index));
      if (kind == PolicyKind::lifo && !a.dropped_incoming) r.fail("lifo kept a newcomer");
      if (kind == PolicyKind::uniform && a.index >= slots) r.fail("uniform dropped the newcomer");
    };
    observer.on_question = [&](const StreamItem& q, const MemoryState& memory, const QaOutcome&) {
      std::vector<int> prefix;
      for (int t : seen)
        if (t < q.timestep) prefix.push_back(t);
      std::vector<int> expected;
      switch (kind) {
        case PolicyKind::fifo: expected = oracle::fifo_replay(prefix, slots); break;
        case PolicyKind::lifo: expected = oracle::lifo_replay(prefix, slots); break;
        default: expected = oracle::indexed_replay(prefix, slots, evictions); break;
      }
      ++r.cases;
      if (memory.source_timesteps() != expected) {
        r.fail(describe("episode ", ep, " question ", q.timestep, ": memory differs from replay"));
      }
    };
    RolloutOptions options;
    options.memory_slots = slots;
    rollout(split[ep], model, options, rng, &observer);
  }
  return r;
}

Result uniform_frequencies(std::size_t slots, std::size_t draws, std::uint64_t seed) {
  Result r;
  std::mt19937_64 rng(seed);
  UniformPolicy policy;
  std::vector<std::size_t> counts(slots, 0);
  MemoryState memory(slots);
  for (std::size_t i = 0; i < slots; ++i) memory.entries.push_back({ad::Node(), int(i + 1), {}});
  for (std::size_t d = 0; d < draws; ++d) {
    const auto a = append_or_evict(memory, {ad::Node(), int(slots + d + 1), {}}, policy,
                                   ActionMode::argmax, rng);
    if (!a || a->index >= slots) {
      r.fail("uniform made no valid eviction");
      return r;
    }
    ++counts[a->index];
  }
  const double p = 1.0 / double(slots);
  const double sigma = std::sqrt(double(draws) * p * (1 - p));
  for (std::size_t i = 0; i < slots; ++i) {
    const double z = std::abs(double(counts[i]) - double(draws) * p) / sigma;
    ++r.cases;
    r.worst = std::max(r.worst, z);
    if (z > 3.0) r.fail(describe("slot ", i, " count ", counts[i], " is ", z, " sigma off"));
  }
  return r;
}

Result distribution_validity(PolicyKind kind, std::size_t states, std::uint64_t seed) {
  Result r;
  std::mt19937_64 rng(seed);
  const std::size_t k = 8;
  ParameterStore store;
  auto policy = random_policy(kind, store, k, 4, rng);
  for (std::size_t s = 0; s < states; ++s) {
    if (s % 50 == 0) spread_weights(store, rng, 0.2 + 0.01 * double(s % 200));
    const std::size_t n = draw(rng, 1, 10);
    const auto state = random_state(n, k, rng, s % 2 ? 3.0 : 1.0);
    const auto out = policy->evaluate(state.memory, state.incoming);
    const std::size_t want = kind == PolicyKind::lifo || kind == PolicyKind::emr_bigru ||
                                     kind == PolicyKind::emr_transformer
                                 ? n + 1
                                 : n;
    ++r.cases;
    if (out.probabilities.size() != want || policy->arity(n) != want) {
      r.fail(describe("state ", s, ": arity ", out.probabilities.size(), ", expected ", want));
      continue;
    }
    double total = 0;
    for (double p : out.probabilities) {
      total += p;
      if (!(p >= 0.0)) r.fail(describe("state ", s, ": negative probability"));
    }
    r.worst = std::max(r.worst, std::abs(total - 1.0));
    if (!(std::abs(total - 1.0) <= 1e-6)) r.fail(describe("state ", s, ": pi sums to ", total));

    // Lowest-index tie-break on this distribution with injected ties.
    auto tied = out.probabilities;
    const std::size_t hi = draw(rng, 0, tied.size() - 1), lo = draw(rng, 0, hi);
    const double top = *std::max_element(tied.begin(), tied.end());
    tied[lo] = tied[hi] = top;
    const std::size_t first = static_cast<std::size_t>(std::find(tied.begin(), tied.end(), top) - tied.begin());
    if (select_action(tied, ActionMode::argmax, rng) != first) {
      r.fail(describe("state ", s, ": argmax ignored the lowest tied index"));
    }
  }

  // A memory of identical slots gives every slot the same score.
  if (kind == PolicyKind::emr_independent || kind == PolicyKind::emr_transformer ||
      kind == PolicyKind::fifo) {
    ParameterStore plain;
    auto p = make_policy(kind, plain, k, k, 4, false, rng);
    const ad::Array same = random_array(1, k, rng);
    for (std::size_t n : {2, 3, 6}) {
      MemoryState memory(n);
      for (std::size_t i = 0; i < n; ++i) memory.entries.push_back({ad::constant(same), int(i + 1), {}});
      memory.usage.assign(n, 0.0);
      const auto a = append_or_evict(memory, {ad::constant(same), int(n + 1), {}}, *p,
                                     ActionMode::argmax, rng);
      ++r.cases;
      if (!a || a->index != 0) r.fail(describe("identical slots with N=", n, ": argmax picked ", a->index));
    }
  }
  return r;
}

}  // namespace emr::checks
