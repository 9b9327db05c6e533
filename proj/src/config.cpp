#include "emr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace emr {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<std::string_view, E> (&table)[N], const char* what) {
  for (const auto& [name, value] : table)
    if (name == s) return value;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E e, const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [name, value] : table)
    if (value == e) return name;
  return "?";
}

constexpr std::pair<std::string_view, EncoderKind> kEncoders[] = {
    {"memn2n_value_sum", EncoderKind::memn2n_value_sum}, {"gru", EncoderKind::gru}};
constexpr std::pair<std::string_view, PolicyKind> kPolicies[] = {
    {"fifo", PolicyKind::fifo},
    {"lifo", PolicyKind::lifo},
    {"uniform", PolicyKind::uniform},
    {"emr_independent", PolicyKind::emr_independent},
    {"emr_bigru", PolicyKind::emr_bigru},
    {"emr_transformer", PolicyKind::emr_transformer}};
constexpr std::pair<std::string_view, Algorithm> kAlgorithms[] = {
    {"a2c", Algorithm::a2c}, {"reinforce_diff", Algorithm::reinforce_diff}};
constexpr std::pair<std::string_view, RewardScheme> kRewards[] = {
    {"terminal", RewardScheme::terminal}, {"difference", RewardScheme::difference}};
constexpr std::pair<std::string_view, UpdateSchedule> kSchedules[] = {
    {"episode", UpdateSchedule::episode},
    {"question", UpdateSchedule::question},
    {"step", UpdateSchedule::step}};
constexpr std::pair<std::string_view, SplitKind> kSplits[] = {{"original", SplitKind::original},
                                                              {"noisy", SplitKind::noisy}};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    try {
      out = static_cast<T>(std::stod(value, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) {
      throw std::invalid_argument("config key '" + key + "': not a number: '" + value + "'");
    }
  } else {
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw std::invalid_argument("config key '" + key + "': not an integer: '" + value + "'");
    }
  }
  return out;
}

bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected on/off, got '" + value + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(EncoderKind k) { return enum_name(k, kEncoders); }
std::string_view to_string(PolicyKind k) { return enum_name(k, kPolicies); }
std::string_view to_string(Algorithm a) { return enum_name(a, kAlgorithms); }
std::string_view to_string(RewardScheme r) { return enum_name(r, kRewards); }
std::string_view to_string(UpdateSchedule u) { return enum_name(u, kSchedules); }
std::string_view to_string(SplitKind s) { return enum_name(s, kSplits); }
EncoderKind parse_encoder(std::string_view s) { return parse_enum(s, kEncoders, "encoder"); }
PolicyKind parse_policy(std::string_view s) { return parse_enum(s, kPolicies, "policy"); }
Algorithm parse_algorithm(std::string_view s) { return parse_enum(s, kAlgorithms, "algorithm"); }
RewardScheme parse_reward(std::string_view s) { return parse_enum(s, kRewards, "reward"); }
UpdateSchedule parse_schedule(std::string_view s) { return parse_enum(s, kSchedules, "update"); }
SplitKind parse_split(std::string_view s) { return parse_enum(s, kSplits, "split"); }

bool is_learned(PolicyKind k) {
  return k == PolicyKind::emr_independent || k == PolicyKind::emr_bigru ||
         k == PolicyKind::emr_transformer;
}

std::size_t ModelConfig::resolved_vocabulary() const {
  return vocabulary_size == 0 ? Vocabulary::standard().size() : vocabulary_size;
}

RewardScheme TrainConfig::resolved_reward() const {
  if (reward) return *reward;
  return algorithm == Algorithm::a2c ? RewardScheme::terminal : RewardScheme::difference;
}

UpdateSchedule TrainConfig::resolved_update() const {
  if (update) return *update;
  return algorithm == Algorithm::a2c ? UpdateSchedule::question : UpdateSchedule::step;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid config: " + msg); };
  if (discount < 0.0 || discount > 1.0) fail("discount must lie in [0, 1]");
  if (learning_rate <= 0.0) fail("learning_rate must be positive");
  if (workers == 0) fail("workers must be at least 1");
  if (model.memory_slots == 0) fail("memory_slots must be at least 1");
  if (model.embed_dim == 0) fail("embed_dim must be positive");
  if (model.hops == 0) fail("hops must be positive");
  if (model.policy == PolicyKind::emr_transformer && model.embed_dim % model.heads != 0) {
    fail("embed_dim must be divisible by heads");
  }
  if (split == SplitKind::noisy && train_episodes < 10) fail("a noisy split needs >= 10 episodes");
  if (eval_interval == 0) fail("eval_interval must be positive");
  if (resolved_update() == UpdateSchedule::step && resolved_reward() != RewardScheme::difference) {
    fail("per-step updates need the difference reward");
  }
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"embed_dim", [&](auto& k, auto& v) { c.model.embed_dim = parse_number<std::size_t>(k, v); }},
      {"encoder", [&](auto&, auto& v) { c.model.encoder = parse_encoder(v); }},
      {"hops", [&](auto& k, auto& v) { c.model.hops = parse_number<std::size_t>(k, v); }},
      {"tying", [&](auto&, auto& v) {
         if (v != "adjacent") throw std::invalid_argument("only adjacent tying is supported");
       }},
      {"temporal", [&](auto& k, auto& v) { c.model.temporal = parse_switch(k, v); }},
      {"policy", [&](auto&, auto& v) { c.model.policy = parse_policy(v); }},
      {"memory_slots", [&](auto& k, auto& v) { c.model.memory_slots = parse_number<std::size_t>(k, v); }},
      {"heads", [&](auto& k, auto& v) { c.model.heads = parse_number<std::size_t>(k, v); }},
      {"policy_hidden", [&](auto& k, auto& v) { c.model.policy_hidden = parse_number<std::size_t>(k, v); }},
      {"slot_position_encoding", [&](auto& k, auto& v) { c.model.slot_position_encoding = parse_switch(k, v); }},
      {"max_age", [&](auto& k, auto& v) { c.model.max_age = parse_number<std::size_t>(k, v); }},
      {"algorithm", [&](auto&, auto& v) { c.algorithm = parse_algorithm(v); }},
      {"reward", [&](auto&, auto& v) { c.reward = parse_reward(v); }},
      {"update", [&](auto&, auto& v) { c.update = parse_schedule(v); }},
      {"discount", [&](auto& k, auto& v) { c.discount = parse_number<double>(k, v); }},
      {"entropy_coef", [&](auto& k, auto& v) { c.entropy_coef = parse_number<double>(k, v); }},
      {"value_coef", [&](auto& k, auto& v) { c.value_coef = parse_number<double>(k, v); }},
      {"solver_coef", [&](auto& k, auto& v) { c.solver_coef = parse_number<double>(k, v); }},
      {"learning_rate", [&](auto& k, auto& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"grad_clip", [&](auto& k, auto& v) { c.grad_clip = parse_number<double>(k, v); }},
      {"workers", [&](auto& k, auto& v) { c.workers = parse_number<std::size_t>(k, v); }},
      {"total_steps", [&](auto& k, auto& v) { c.total_steps = parse_number<std::size_t>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"split", [&](auto&, auto& v) { c.split = parse_split(v); }},
      {"train_episodes", [&](auto& k, auto& v) { c.train_episodes = parse_number<std::size_t>(k, v); }},
      {"eval_episodes", [&](auto& k, auto& v) { c.eval_episodes = parse_number<std::size_t>(k, v); }},
      {"data_seed", [&](auto& k, auto& v) { c.data_seed = parse_number<std::uint64_t>(k, v); }},
      {"eval_seed", [&](auto& k, auto& v) { c.eval_seed = parse_number<std::uint64_t>(k, v); }},
      {"pretrain_steps", [&](auto& k, auto& v) { c.pretrain_steps = parse_number<std::size_t>(k, v); }},
      {"pretrain_linear_steps", [&](auto& k, auto& v) { c.pretrain_linear_steps = parse_number<std::size_t>(k, v); }},
      {"eval_interval", [&](auto& k, auto& v) { c.eval_interval = parse_number<std::size_t>(k, v); }},
      {"output_dir", [&](auto&, auto& v) { c.output_dir = v; }},
  };

  std::istringstream in{std::string(text)};
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    it->second(key, value);
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "embed_dim=" << c.model.embed_dim << '\n'
     << "encoder=" << to_string(c.model.encoder) << '\n'
     << "hops=" << c.model.hops << '\n'
     << "tying=adjacent\n"
     << "temporal=" << (c.model.temporal ? "on" : "off") << '\n'
     << "policy=" << to_string(c.model.policy) << '\n'
     << "memory_slots=" << c.model.memory_slots << '\n'
     << "heads=" << c.model.heads << '\n'
     << "policy_hidden=" << c.model.policy_hidden << '\n'
     << "slot_position_encoding=" << (c.model.slot_position_encoding ? "on" : "off") << '\n'
     << "max_age=" << c.model.max_age << '\n'
     << "algorithm=" << to_string(c.algorithm) << '\n'
     << "reward=" << to_string(c.resolved_reward()) << '\n'
     << "update=" << to_string(c.resolved_update()) << '\n'
     << "discount=" << fmt_double(c.discount) << '\n'
     << "entropy_coef=" << fmt_double(c.entropy_coef) << '\n'
     << "value_coef=" << fmt_double(c.value_coef) << '\n'
     << "solver_coef=" << fmt_double(c.solver_coef) << '\n'
     << "learning_rate=" << fmt_double(c.learning_rate) << '\n'
     << "grad_clip=" << fmt_double(c.grad_clip) << '\n'
     << "workers=" << c.workers << '\n'
     << "total_steps=" << c.total_steps << '\n'
     << "seed=" << c.seed << '\n'
     << "split=" << to_string(c.split) << '\n'
     << "train_episodes=" << c.train_episodes << '\n'
     << "eval_episodes=" << c.eval_episodes << '\n'
     << "data_seed=" << c.data_seed << '\n'
     << "eval_seed=" << c.eval_seed << '\n'
     << "pretrain_steps=" << c.pretrain_steps << '\n'
     << "pretrain_linear_steps=" << c.pretrain_linear_steps << '\n'
     << "eval_interval=" << c.eval_interval << '\n'
     << "output_dir=" << c.output_dir << '\n';
  return os.str();
}

std::string config_digest(const TrainConfig& config) {
  // FNV-1a, 64 bit
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_train_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace emr
