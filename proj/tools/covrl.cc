// Command-line front end for the experiment harness.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "covrl/errors.h"
#include "covrl/harness.h"

namespace {

struct Overrides {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string map;
  std::optional<double> noise;
  std::string out;
  std::optional<int> episodes;
  std::optional<int> step_cap;
  std::string method;
  std::optional<int> jobs;
  bool print_config = false;
};

void add_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seeds, "Seed list")->delimiter(',');
  cmd->add_option("--map", o.map, "Map file, replaces the configured maps");
  cmd->add_option("--noise", o.noise, "Sensor flip probability");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--episodes", o.episodes,
                  "Training episodes, or evaluation episodes for eval");
  cmd->add_option("--step-cap", o.step_cap, "Step cap per episode");
  cmd->add_option("--method", o.method, "zigzag, ba_star, rl or hybrid");
  cmd->add_option("--jobs", o.jobs, "Seeds run concurrently");
  cmd->add_flag("--print-config", o.print_config, "Print the effective config and exit");
}

covrl::ExperimentConfig build(covrl::Mode mode, const Overrides& o) {
  covrl::ExperimentConfig c;
  if (!o.config.empty()) c = covrl::load_config(o.config);
  c.mode = mode;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.map.empty()) c.maps = {o.map};
  if (o.noise) c.sensor.flip_prob = *o.noise;
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.episodes) {
    if (mode == covrl::Mode::kEval) {
      c.eval_episodes = *o.episodes;
    } else {
      c.agent.episodes = *o.episodes;
    }
  }
  if (o.step_cap) c.episode.step_cap = *o.step_cap;
  if (!o.method.empty()) c.method = covrl::parse_method(o.method);
  if (o.jobs) c.jobs = *o.jobs;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coverage path planning with deep Q-learning"};
  app.require_subcommand(1);
  Overrides o;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"train", "Train a learning method with greedy checkpoints"},
      {"eval", "Evaluate a method"},
      {"bench", "Compare methods across maps and noise levels"},
      {"sweep", "Train over a grid of config overrides"},
      {"contraction", "Tabular contraction and rate experiments"},
  };
  for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    const covrl::ExperimentConfig cfg = build(covrl::parse_mode(name), o);
    if (o.print_config) {
      std::cout << covrl::to_json(cfg).dump(2) << '\n';
      return 0;
    }
    const covrl::RunRecord r = covrl::run(cfg);
    std::cout << r.summary.dump(2) << '\n';
  } catch (const covrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
