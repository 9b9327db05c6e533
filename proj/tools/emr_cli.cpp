// Command-line front end: generate data, train, evaluate and inspect.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "emr/config.hpp"
#include "emr/eval.hpp"
#include "emr/model.hpp"
#include "emr/rl.hpp"
#include "emr/task_gen.hpp"

namespace fs = std::filesystem;

namespace {

int run_generate(std::size_t episodes, std::uint64_t seed, const std::string& split,
                 const fs::path& out, const fs::path& vocab_out) {
  const auto data = emr::generate_split(seed, episodes, emr::parse_split(split));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  emr::write_episodes(out, data);
  const fs::path vocab = vocab_out.empty() ? fs::path(out).replace_extension(".vocab") : vocab_out;
  emr::Vocabulary::standard().write(vocab);
  std::cout << "wrote " << data.size() << " episodes to " << out.string() << " (vocabulary "
            << vocab.string() << ")\n";
  return 0;
}

int run_train(const fs::path& config_path, const std::string& out_override) {
  emr::TrainConfig config = emr::load_train_config(config_path);
  if (!out_override.empty()) config.output_dir = out_override;
  const auto result = emr::train(config);
  std::cout << "updates " << result.updates << ", environment steps " << result.environment_steps
            << "\nbest eval accuracy " << result.best_eval_accuracy << " solvable "
            << result.best_eval_solvable << " at step " << result.best_step << "\ncheckpoints in "
            << config.output_dir << "/best and " << config.output_dir << "/final\n";
  return 0;
}

std::vector<emr::Episode> eval_data(const emr::TrainConfig& config, const std::string& data,
                                    std::size_t episodes, std::uint64_t seed,
                                    const std::string& split) {
  if (!data.empty()) return emr::read_episodes(data);
  return emr::generate_split(seed, episodes ? episodes : config.eval_episodes,
                             split.empty() ? config.split : emr::parse_split(split));
}

int run_eval(const fs::path& checkpoint, std::size_t slots, const std::string& data,
             std::size_t episodes, std::uint64_t seed, const std::string& split, bool csv) {
  const auto loaded = emr::load_model(checkpoint);
  const auto dataset = eval_data(loaded.config, data, episodes, seed, split);
  const auto report = emr::evaluate(*loaded.model, dataset, slots, seed,
                                    emr::config_digest(loaded.config));
  if (csv) {
    std::cout << emr::EvalReport::csv_header() << '\n' << report.csv_row() << '\n';
  } else {
    std::cout << report.to_json().dump(2) << '\n';
  }
  return 0;
}

int run_inspect(const fs::path& checkpoint, std::uint64_t episode_seed, double noise,
                std::size_t slots, bool json) {
  const auto level = emr::parse_noise_level(noise);
  if (!level) throw std::invalid_argument("noise must be one of 0, 0.30, 0.45, 0.60");
  const auto loaded = emr::load_model(checkpoint);
  const auto episode = emr::generate_episode(episode_seed, *level);
  const auto traces = emr::inspect_episode(*loaded.model, episode, slots, episode_seed);
  if (json) {
    std::cout << emr::traces_to_json(traces).dump(2) << '\n';
  } else {
    std::cout << "policy " << emr::to_string(loaded.config.model.policy) << ", memory "
              << (slots ? slots : loaded.config.model.memory_slots)
              << " slots, noise facts " << episode.noise_count() << "/" << episode.fact_count()
              << "  (* supporting fact, ~ noise)\n"
              << emr::format_traces(traces);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned memory eviction for streaming question answering"};
  app.require_subcommand(1);

  std::size_t episodes = 1000;
  std::uint64_t seed = 7;
  std::string split = "noisy";
  std::string out;
  std::string vocab_out;
  auto* gen = app.add_subcommand("generate", "Write a split of synthetic episodes as JSONL");
  gen->add_option("--episodes", episodes, "Number of episodes")->required();
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--out", out, "Output episode file")->required();
  gen->add_option("--split", split, "original or noisy")->capture_default_str();
  gen->add_option("--vocab-out", vocab_out, "Vocabulary file (default: OUT with .vocab)");

  std::string config_path;
  std::string train_out;
  auto* tr = app.add_subcommand("train", "Train a policy and solver from a config file");
  tr->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", train_out, "Override output_dir");

  std::string checkpoint;
  std::size_t slots = 0;
  std::string data;
  std::size_t eval_episodes = 0;
  std::uint64_t eval_seed = 1007;
  std::string eval_split;
  bool csv = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint in argmax mode");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--memory-slots", slots, "Memory size (default: trained size)");
  ev->add_option("--data", data, "Episode file (default: generate a split)");
  ev->add_option("--episodes", eval_episodes, "Episodes to generate (default: eval_episodes)");
  ev->add_option("--seed", eval_seed, "Evaluation seed")->capture_default_str();
  ev->add_option("--split", eval_split, "original or noisy (default: config split)");
  ev->add_flag("--csv", csv, "Print a CSV row instead of JSON");

  std::uint64_t episode_seed = 0;
  double noise = 0.30;
  bool json = false;
  auto* in = app.add_subcommand("inspect", "Dump retained memory at each question of one episode");
  in->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  in->add_option("--episode-seed", episode_seed, "Episode seed")->required();
  in->add_option("--noise", noise, "Noise level of the episode")->capture_default_str();
  in->add_option("--memory-slots", slots, "Memory size (default: trained size)");
  in->add_flag("--json", json, "Print JSON");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return run_generate(episodes, seed, split, out, vocab_out);
    if (tr->parsed()) return run_train(config_path, train_out);
    if (ev->parsed()) return run_eval(checkpoint, slots, data, eval_episodes, eval_seed, eval_split, csv);
    if (in->parsed()) return run_inspect(checkpoint, episode_seed, noise, slots, json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
