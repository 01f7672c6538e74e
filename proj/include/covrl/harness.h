#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "covrl/agent.h"
#include "covrl/contraction.h"
#include "covrl/grid_map.h"

namespace covrl {

enum class Mode { kTrain, kEval, kBench, kSweep, kContraction };
enum class Method { kZigzag, kBaStar, kRl, kHybrid };

const char* mode_name(Mode m);
const char* method_name(Method m);
Mode parse_mode(const std::string& s);      // throws ConfigError
Method parse_method(const std::string& s);  // throws ConfigError
bool is_learning(Method m);

struct CheckpointConfig {
  int every = 25;     // greedy evaluation interval in episodes, 0 disables
  int episodes = 1;   // greedy episodes per checkpoint
};

// A checkpoint passes when its mean coverage is at least `coverage` and its
// mean overlap is below `overlap` (both in percent).
struct Milestone {
  double coverage = 90.0;
  double overlap = 25.0;
};

struct ContractionSettings {
  int mdps = 50;
  int states = 5;
  int actions = 2;
  double gamma = 0.9;
  int iters = 5000;
  double skew_ratio = 100.0;
  double lr_scale = 0.5;
  double alpha_per = 0.6;
  double per_epsilon = 1e-6;
  double target_fraction = 1e-2;  // error level compared between schedules
};

struct ExperimentConfig {
  Mode mode = Mode::kTrain;
  // Map files; when empty a map is generated per seed from `generator`.
  std::vector<std::string> maps;
  MapGenParams generator;
  ActionMode action_mode = ActionMode::kCardinal;
  std::vector<double> action_costs;  // empty means zero cost
  EpisodeConfig episode;
  SensorModel sensor;
  TrainConfig agent;
  Method method = Method::kRl;  // train and eval
  std::vector<Method> methods = {Method::kBaStar, Method::kRl, Method::kHybrid};
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "out";
  int eval_episodes = 10;
  CheckpointConfig checkpoint;
  Milestone milestone;
  bool stop_at_milestone = false;
  int smoothing_window = 10;
  std::string params_file;          // network for eval of learning methods
  std::vector<double> noise_levels; // bench: empty means sensor.flip_prob only
  std::vector<nlohmann::json> sweep;  // each entry patches this config
  ContractionSettings contraction;
  int jobs = 1;  // seeds run concurrently
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys and bad values throw
// ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
// Throws ConfigError for an empty seed list, missing files or values out of
// range.
void validate(const ExperimentConfig& cfg);
// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Environment factory for one seed and map.
EnvFactory make_env_factory(const ExperimentConfig& cfg, const GridMap& map);
GridMap resolve_map(const ExperimentConfig& cfg, size_t map_index,
                    std::uint64_t seed);

struct Checkpoint {
  int episode = 0;
  double coverage_pct = 0.0;
  double overlap_pct = 0.0;
  double steps = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  std::vector<Checkpoint> checkpoints;
  std::optional<int> milestone_episode;
  std::optional<NetworkParams> params;
  // Network at the best greedy checkpoint: among those reaching the milestone
  // coverage the lowest overlap, otherwise the highest coverage.
  std::optional<NetworkParams> best_params;
  std::optional<Checkpoint> best_checkpoint;
};

// True when checkpoint `a` ranks above `b` under the rule above.
bool better_checkpoint(const Checkpoint& a, const Checkpoint& b,
                       const Milestone& m);

// Trains one learning method on one map with greedy checkpoints.
SeedRun train_seed(const ExperimentConfig& cfg, const GridMap& map,
                   Method method, std::uint64_t seed);

// Mean over `episodes` evaluation episodes. Learning methods act greedily
// with `params`.
struct EvalStats {
  double coverage_pct = 0.0;
  double overlap_pct = 0.0;
  double steps = 0.0;
  double ret = 0.0;
  std::vector<EpisodeResult> episodes;
};
EvalStats evaluate_method(const ExperimentConfig& cfg, const GridMap& map,
                          Method method, const NetworkParams* params,
                          int episodes, std::uint64_t seed);

struct SeedSummary {
  std::uint64_t seed = 0;
  double coverage_pct = 0.0;  // mean over the final 10% of episodes
  double overlap_pct = 0.0;
  double ret = 0.0;
  std::optional<int> milestone_episode;
};
SeedSummary summarize(const SeedRun& run);
// Mean over the final ceil(10%) of the rows.
double tail_mean(const std::vector<MetricsRow>& rows, double MetricsRow::*field);

struct BenchRow {
  std::string map;
  Method method = Method::kBaStar;
  double noise = 0.0;
  double coverage_pct = 0.0;
  double overlap_pct = 0.0;
  double steps = 0.0;
};

// Every method on `map` under each noise level, averaged over seeds.
// Learning methods are trained under that noise level first.
std::vector<BenchRow> noise_study(const ExperimentConfig& cfg,
                                  const std::string& map_name,
                                  const GridMap& map,
                                  const std::vector<double>& noise_levels,
                                  const std::vector<Method>& methods);

struct SweepRow {
  int combo = 0;
  std::string overrides;
  double converged_reward = 0.0;  // final-10% mean return, averaged over seeds
};

struct ContractionRow {
  int mdp = 0;
  int iters_uniform = -1;
  int iters_prioritized = -1;
  bool envelope_held = true;
  double max_ratio = 0.0;
  double beta_min = 1.0;
};

struct RunRecord {
  std::string config_hash;
  Mode mode = Mode::kTrain;
  std::vector<SeedRun> runs;  // train and eval
  std::vector<BenchRow> bench;
  std::vector<SweepRow> sweep;
  std::vector<ContractionRow> contraction;
  std::optional<RateTable> rate_curve;  // first MDP of the contraction lab
  nlohmann::json summary;
};

// Executes the configured mode and writes metrics.csv, summary.json and
// plotdata/ under cfg.out_dir.
RunRecord run(const ExperimentConfig& cfg);

// Trailing moving average; a window of 1 is the identity.
std::vector<double> smooth(const std::vector<double>& xs, int window);

struct Band {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};
// Per-index mean and range across series, truncated to the shortest one.
std::vector<Band> band(const std::vector<std::vector<double>>& series);

// seed,episode,steps,coverage_pct,overlap_pct,return,epsilon,loss_mean
void write_metrics_csv(std::ostream& os, const std::vector<SeedRun>& runs);
// Smoothed learning curves with mean and range across seeds.
void write_learning_curves(std::ostream& os, const std::vector<SeedRun>& runs,
                           int window);
void emit_plotdata(const RunRecord& record, const std::string& dir, int window);

}  // namespace covrl
