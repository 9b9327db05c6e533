#pragma once

// Synthetic two-supporting-facts episodes: people move between rooms while
// picking up and dropping objects; each question asks where an object is.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emr {

using TokenId = int;

inline constexpr std::size_t kMaxSentenceLength = 8;
inline constexpr std::size_t kFactsPerEpisode = 40;
inline constexpr std::size_t kQuestionsPerEpisode = 5;
inline constexpr std::size_t kFactsBetweenQuestions = 8;
inline constexpr std::size_t kEpisodeLength = kFactsPerEpisode + kQuestionsPerEpisode;

/// Token <-> id map. Id 0 is padding, id 1 unknown.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnknown = 1;

  /// The built-in task vocabulary.
  static const Vocabulary& standard();

  explicit Vocabulary(std::vector<std::string> tokens);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Space-joined tokens, padding dropped.
  std::string render(const std::vector<TokenId>& ids) const;

  void write(const std::filesystem::path& path) const;
  static Vocabulary read(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

enum class ItemKind { fact, question };

struct StreamItem {
  ItemKind kind = ItemKind::fact;
  int timestep = 0;             // 1-based position in the episode stream
  std::vector<TokenId> tokens;  // padded to kMaxSentenceLength
  TokenId answer = 0;           // questions only
  std::vector<int> supports;    // fact timesteps, questions only
  bool is_noise = false;        // facts only

  bool is_fact() const noexcept { return kind == ItemKind::fact; }
  bool is_question() const noexcept { return kind == ItemKind::question; }
  friend bool operator==(const StreamItem&, const StreamItem&) = default;
};

struct Episode {
  std::vector<StreamItem> items;
  std::size_t vocabulary_size = 0;

  std::size_t noise_count() const;
  std::size_t fact_count() const;
  /// Nearest level of {0, 0.30, 0.45, 0.60} to the realised noise fraction.
  double noise_bucket() const;
  const StreamItem& at_timestep(int t) const { return items.at(static_cast<std::size_t>(t - 1)); }
  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Seed mixer used to derive independent per-episode streams.
std::uint64_t splitmix64(std::uint64_t x);

inline constexpr double kNoiseLevels[] = {0.0, 0.30, 0.45, 0.60};

/// Knobs of the world simulation. Defaults are what every experiment uses.
struct GeneratorOptions {
  int people = 4;
  int objects = 3;
  int locations = 6;
  double move_weight = 0.55;
  double pickup_weight = 0.25;
  double drop_weight = 0.20;
};

std::optional<double> parse_noise_level(double level);

/// One episode; noise_level must be one of kNoiseLevels. Deterministic in seed.
Episode generate_episode(std::uint64_t seed, double noise_level,
                         const GeneratorOptions& options = {});

enum class SplitKind { original, noisy };

/// `episode_count` episodes. The noisy schedule assigns floor(10%) of the
/// count to each of 0.30/0.45/0.60 and the rest to zero noise.
std::vector<Episode> generate_split(std::uint64_t seed, std::size_t episode_count,
                                    SplitKind kind = SplitKind::noisy,
                                    const GeneratorOptions& options = {});

/// Answers a question from exactly its supporting facts by replaying the
/// pickup and the move. Returns nullopt if the facts do not determine it.
std::optional<TokenId> answer_from_facts(const StreamItem& question,
                                         const std::vector<const StreamItem*>& facts,
                                         const Vocabulary& vocab = Vocabulary::standard());

class EpisodeParseError : public std::runtime_error {
 public:
  EpisodeParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

// One JSON object per line, one line per stream item:
// {"episode":0,"t":1,"kind":"fact","tokens":[..],"answer":0,"supports":[],"noise":false}
void write_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes(const std::filesystem::path& path);

}  // namespace emr
