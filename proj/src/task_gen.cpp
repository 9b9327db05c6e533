#include "emr/task_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace emr {

namespace {

const std::vector<std::string> kPeople = {"john", "mary", "sandra", "daniel"};
const std::vector<std::string> kLocations = {"kitchen", "garden",  "hallway",
                                             "bathroom", "bedroom", "office"};
const std::vector<std::string> kObjects = {"football", "apple", "milk"};
const std::vector<std::string> kNoisePeople = {"bill", "fred", "julie"};
const std::vector<std::string> kNoiseVerbs = {"likes", "hates", "sees"};
const std::vector<std::string> kNoiseThings = {"cat", "dog", "bird", "tree"};

std::vector<std::string> standard_tokens() {
  std::vector<std::string> t = {"<pad>", "<unk>"};
  auto append = [&](const std::vector<std::string>& words) { t.insert(t.end(), words.begin(), words.end()); };
  append(kPeople);
  append({"went", "to", "the", "got", "dropped", "where", "is"});
  append(kLocations);
  append(kObjects);
  append(kNoisePeople);
  append(kNoiseVerbs);
  append(kNoiseThings);
  return t;
}

std::vector<TokenId> sentence(const Vocabulary& vocab, std::initializer_list<std::string_view> words) {
  std::vector<TokenId> ids;
  for (auto w : words) ids.push_back(vocab.id(w));
  ids.resize(kMaxSentenceLength, Vocabulary::kPad);
  return ids;
}

struct World {
  std::vector<int> location;    // per person, -1 before the first move
  std::vector<int> last_move;   // per person, timestep of latest move, 0 if none
  std::vector<int> holder;      // per object, -1 when on the floor
  std::vector<int> pickup_time; // per object, timestep of the current holder's pickup
};

class EpisodeBuilder {
 public:
  EpisodeBuilder(std::uint64_t seed, const GeneratorOptions& opts)
      : rng_(seed), opts_(opts), vocab_(Vocabulary::standard()) {
    if (opts.people < 1 || opts.people > static_cast<int>(kPeople.size()) || opts.objects < 1 ||
        opts.objects > static_cast<int>(kObjects.size()) || opts.locations < 1 ||
        opts.locations > static_cast<int>(kLocations.size())) {
      throw std::invalid_argument("generator inventory exceeds the vocabulary");
    }
  }

  Episode build(std::size_t noise_count) {
    for (;;) {
      if (auto ep = attempt(noise_count)) return *ep;
    }
  }

 private:
  int uniform(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  std::optional<Episode> attempt(std::size_t noise_count) {
    std::vector<bool> noise(kFactsPerEpisode, false);
    std::fill(noise.begin(), noise.begin() + static_cast<std::ptrdiff_t>(noise_count), true);
    std::shuffle(noise.begin(), noise.end(), rng_);

    World world{std::vector<int>(opts_.people, -1), std::vector<int>(opts_.people, 0),
                std::vector<int>(opts_.objects, -1), std::vector<int>(opts_.objects, 0)};
    Episode ep;
    ep.vocabulary_size = vocab_.size();
    int t = 0;
    for (std::size_t block = 0; block < kQuestionsPerEpisode; ++block) {
      bool done = false;
      for (int tries = 0; tries < 64 && !done; ++tries) {
        World trial = world;
        std::vector<StreamItem> items;
        int tt = t;
        for (std::size_t j = 0; j < kFactsBetweenQuestions; ++j) {
          const bool is_noise = noise[block * kFactsBetweenQuestions + j];
          items.push_back(is_noise ? noise_fact(++tt) : event(trial, ++tt));
        }
        if (auto q = question(trial, ++tt)) {
          items.push_back(*q);
          ep.items.insert(ep.items.end(), items.begin(), items.end());
          world = trial;
          t = tt;
          done = true;
        }
      }
      if (!done) return std::nullopt;
    }
    return ep;
  }

  StreamItem noise_fact(int t) {
    StreamItem item;
    item.timestep = t;
    item.is_noise = true;
    item.tokens = sentence(vocab_, {kNoisePeople[uniform(3)], kNoiseVerbs[uniform(3)], "the",
                                    kNoiseThings[uniform(4)]});
    return item;
  }

  StreamItem event(World& w, int t) {
    StreamItem item;
    item.timestep = t;
    const int p = uniform(opts_.people);
    std::vector<int> held, free;
    for (int o = 0; o < opts_.objects; ++o) {
      if (w.holder[o] == p) held.push_back(o);
      if (w.holder[o] < 0) free.push_back(o);
    }
    const double wm = opts_.move_weight;
    const double wp = free.empty() ? 0.0 : opts_.pickup_weight;
    const double wd = held.empty() ? 0.0 : opts_.drop_weight;
    const double r = unit() * (wm + wp + wd);
    if (r < wm) {
      int loc = uniform(opts_.locations);
      if (loc == w.location[p]) loc = (loc + 1 + uniform(opts_.locations - 1)) % opts_.locations;
      w.location[p] = loc;
      w.last_move[p] = t;
      item.tokens = sentence(vocab_, {kPeople[p], "went", "to", "the", kLocations[loc]});
    } else if (r < wm + wp) {
      const int o = free[uniform(static_cast<int>(free.size()))];
      w.holder[o] = p;
      w.pickup_time[o] = t;
      item.tokens = sentence(vocab_, {kPeople[p], "got", "the", kObjects[o]});
    } else {
      const int o = held[uniform(static_cast<int>(held.size()))];
      w.holder[o] = -1;
      item.tokens = sentence(vocab_, {kPeople[p], "dropped", "the", kObjects[o]});
    }
    return item;
  }

  std::optional<StreamItem> question(const World& w, int t) {
    std::vector<int> eligible;
    for (int o = 0; o < opts_.objects; ++o) {
      const int p = w.holder[o];
      if (p >= 0 && w.last_move[p] > w.pickup_time[o]) eligible.push_back(o);
    }
    if (eligible.empty()) return std::nullopt;
    const int o = eligible[uniform(static_cast<int>(eligible.size()))];
    const int p = w.holder[o];
    StreamItem q;
    q.kind = ItemKind::question;
    q.timestep = t;
    q.tokens = sentence(vocab_, {"where", "is", "the", kObjects[o]});
    q.answer = vocab_.id(kLocations[w.location[p]]);
    q.supports = {w.pickup_time[o], w.last_move[p]};
    return q;
  }

  std::mt19937_64 rng_;
  GeneratorOptions opts_;
  const Vocabulary& vocab_;
};

}  // namespace

// ---- Vocabulary ----------------------------------------------------------

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab(standard_tokens());
  return vocab;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) throw std::invalid_argument("vocabulary needs padding and unknown tokens");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::render(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPad) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void Vocabulary::write(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::read(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(is, line);) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

// ---- Episodes ------------------------------------------------------------

std::size_t Episode::noise_count() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const StreamItem& i) { return i.is_noise; }));
}

std::size_t Episode::fact_count() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const StreamItem& i) { return i.is_fact(); }));
}

double Episode::noise_bucket() const {
  const std::size_t facts = fact_count();
  const double frac = facts == 0 ? 0.0 : static_cast<double>(noise_count()) / static_cast<double>(facts);
  double best = kNoiseLevels[0];
  for (double level : kNoiseLevels)
    if (std::abs(level - frac) < std::abs(best - frac)) best = level;
  return best;
}

std::optional<double> parse_noise_level(double level) {
  for (double l : kNoiseLevels)
    if (std::abs(l - level) < 1e-9) return l;
  return std::nullopt;
}

Episode generate_episode(std::uint64_t seed, double noise_level, const GeneratorOptions& options) {
  const auto level = parse_noise_level(noise_level);
  if (!level) throw std::invalid_argument("noise level must be one of 0, 0.30, 0.45, 0.60");
  const auto noise_count =
      static_cast<std::size_t>(std::lround(*level * static_cast<double>(kFactsPerEpisode)));
  return EpisodeBuilder(seed, options).build(noise_count);
}

std::vector<Episode> generate_split(std::uint64_t seed, std::size_t episode_count, SplitKind kind,
                                    const GeneratorOptions& options) {
  std::vector<double> levels(episode_count, 0.0);
  if (kind == SplitKind::noisy) {
    if (episode_count < 10) throw std::invalid_argument("a noisy split needs at least 10 episodes");
    const std::size_t per_level = episode_count / 10;
    std::size_t pos = 0;
    for (double l : {0.30, 0.45, 0.60})
      for (std::size_t i = 0; i < per_level; ++i) levels[pos++] = l;
    std::mt19937_64 order_rng(splitmix64(seed ^ 0x5eedULL));
    std::shuffle(levels.begin(), levels.end(), order_rng);
  }
  std::vector<Episode> out;
  out.reserve(episode_count);
  for (std::size_t i = 0; i < episode_count; ++i) {
    out.push_back(generate_episode(splitmix64(seed + 0x1000 * (i + 1)), levels[i], options));
  }
  return out;
}

std::optional<TokenId> answer_from_facts(const StreamItem& question,
                                         const std::vector<const StreamItem*>& facts,
                                         const Vocabulary& vocab) {
  // question: where is the <object>
  const TokenId object = question.tokens.at(3);
  const TokenId got = vocab.id("got"), went = vocab.id("went");
  std::optional<TokenId> holder;
  std::optional<TokenId> location;
  std::vector<const StreamItem*> ordered = facts;
  std::sort(ordered.begin(), ordered.end(),
            [](const StreamItem* a, const StreamItem* b) { return a->timestep < b->timestep; });
  for (const StreamItem* f : ordered) {
    if (f->tokens[1] == got && f->tokens[3] == object) {
      holder = f->tokens[0];
      location.reset();
    } else if (f->tokens[1] == went && holder && f->tokens[0] == *holder) {
      location = f->tokens[4];
    }
  }
  return location;
}

void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (const auto& item : episodes[e].items) {
      nlohmann::json j;
      j["episode"] = e;
      j["t"] = item.timestep;
      j["kind"] = item.is_fact() ? "fact" : "question";
      j["tokens"] = item.tokens;
      j["answer"] = item.answer;
      j["supports"] = item.supports;
      j["noise"] = item.is_noise;
      j["vocab"] = episodes[e].vocabulary_size;
      os << j.dump() << '\n';
    }
  }
}

std::vector<Episode> read_episodes(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<Episode> out;
  long current = -1;
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& err) {
      throw EpisodeParseError(lineno, std::string("malformed JSON: ") + err.what());
    }
    try {
      const long episode = j.at("episode").get<long>();
      const std::string kind = j.at("kind").get<std::string>();
      if (kind != "fact" && kind != "question") throw EpisodeParseError(lineno, "unknown kind " + kind);
      if (episode != current) {
        if (episode != current + 1) throw EpisodeParseError(lineno, "episode ids must be consecutive");
        current = episode;
        out.emplace_back();
        out.back().vocabulary_size = j.value("vocab", Vocabulary::standard().size());
      }
      StreamItem item;
      item.kind = kind == "fact" ? ItemKind::fact : ItemKind::question;
      item.timestep = j.at("t").get<int>();
      item.tokens = j.at("tokens").get<std::vector<TokenId>>();
      item.answer = j.at("answer").get<TokenId>();
      item.supports = j.at("supports").get<std::vector<int>>();
      item.is_noise = j.at("noise").get<bool>();
      if (item.tokens.size() != kMaxSentenceLength) {
        throw EpisodeParseError(lineno, "tokens must have length " + std::to_string(kMaxSentenceLength));
      }
      if (item.timestep != static_cast<int>(out.back().items.size()) + 1) {
        throw EpisodeParseError(lineno, "timesteps must be consecutive from 1");
      }
      out.back().items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& err) {
      throw EpisodeParseError(lineno, std::string("bad record: ") + err.what());
    }
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace emr
