#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "covrl/encoder.h"
#include "covrl/env.h"
#include "covrl/net.h"
#include "covrl/replay.h"

namespace covrl {

struct TrainConfig {
  double gamma = 0.99;
  int target_sync = 8000;  // gradient updates between target-network copies
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  long epsilon_decay_steps = 10000;
  int batch_size = 32;
  ReplayConfig replay;
  double beta_start = 0.4;
  double beta_end = 1.0;
  int train_start = 1000;  // buffer size before the first update
  int train_every = 1;     // environment steps per gradient update
  int episodes = 2000;
  bool double_q = true;
  AdamConfig adam;
  // Layer widths and head; input size and action count are filled in from
  // the environment.
  NetworkSpec net;
  EncoderConfig encoder;
};

// Throws ConfigError for out-of-range fields.
void validate(const TrainConfig& cfg);

// Linear anneal from epsilon_start to epsilon_end over epsilon_decay_steps.
double epsilon(long t, const TrainConfig& cfg);
// Importance-sampling exponent, linear from beta_start to beta_end over
// `horizon` steps.
double per_beta(long t, long horizon, const TrainConfig& cfg);

// Lowest index among the maximal entries.
int greedy_action(const std::vector<double>& q);
int act(const NetworkParams& params, const StateTensor& x, double eps,
        std::mt19937_64& rng);

// Row i: r_i if done_i, else r_i + gamma * Q_target(s'_i, a*) with
// a* = argmax Q_online(s'_i, .) (or argmax Q_target when double_q is off).
std::vector<double> td_targets(const RowMatrix& q_online_next,
                               const RowMatrix& q_target_next,
                               const std::vector<double>& rewards,
                               const std::vector<std::uint8_t>& dones,
                               double gamma, bool double_q = true);

// Online/target networks, replay memory and the exploration schedule.
class DqnAgent {
 public:
  // `beta_horizon` is the step count over which the IS exponent anneals.
  DqnAgent(const TrainConfig& cfg, int map_height, int map_width,
           int num_actions, std::uint64_t seed, long beta_horizon);
  // Frozen policy around existing weights (evaluation only).
  DqnAgent(const TrainConfig& cfg, NetworkParams params, std::uint64_t seed);

  StateTensor encode(const Observation& obs) const;
  // epsilon-greedy when `explore`, greedy otherwise.
  int select(const Observation& obs, bool explore);

  // Stores the transition and runs a gradient update when due; returns the
  // update's loss.
  std::optional<double> observe(Transition t);
  double train_step();
  void sync_target() { copy_weights(online_, target_); }

  const NetworkParams& online() const { return online_; }
  NetworkParams& online() { return online_; }
  const NetworkParams& target() const { return target_; }
  const ReplayBuffer& replay() const { return replay_; }
  const TrainConfig& config() const { return cfg_; }
  long env_steps() const { return env_steps_; }
  long updates() const { return updates_; }
  double current_epsilon() const { return epsilon(env_steps_, cfg_); }

 private:
  TrainConfig cfg_;
  NetworkParams online_;
  NetworkParams target_;
  ReplayBuffer replay_;
  std::mt19937_64 rng_;
  long beta_horizon_ = 1;
  long env_steps_ = 0;
  long updates_ = 0;
  Gradients grads_;
};

struct EpisodeResult {
  int steps = 0;
  double coverage = 0.0;  // fraction at episode end
  double overlap = 0.0;   // reported overlap fraction
  double ret = 0.0;
  bool reached_eta = false;
  int agent_actions = 0;  // steps chosen by the network
  double loss_sum = 0.0;
  int loss_count = 0;
};

// One episode driven by the network alone. Transitions are stored (and
// updates run) only when `training`.
EpisodeResult rl_episode(CoverageEnv& env, DqnAgent& agent, bool training);

using EnvFactory = std::function<CoverageEnv(std::uint64_t episode_seed)>;
using EpisodeRunner =
    std::function<EpisodeResult(CoverageEnv&, DqnAgent&, bool training)>;

struct MetricsRow {
  int episode = 0;
  int steps = 0;
  double coverage_pct = 0.0;
  double overlap_pct = 0.0;
  double ret = 0.0;
  double epsilon = 0.0;
  double loss_mean = 0.0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  NetworkParams params;
};

// Called after every training episode with the rows so far and the agent;
// returning true ends training.
using StopRule =
    std::function<bool(const std::vector<MetricsRow>&, const DqnAgent&)>;

TrainResult train(const EnvFactory& make_env, const TrainConfig& cfg,
                  std::uint64_t seed, const EpisodeRunner& runner = rl_episode,
                  const StopRule& stop = {});

struct EvalSummary {
  double coverage_pct = 0.0;
  double overlap_pct = 0.0;
  double ret = 0.0;
  double steps = 0.0;
};

// Greedy (epsilon = 0) rollouts averaged over `episodes`.
EvalSummary evaluate(const EnvFactory& make_env, DqnAgent& agent, int episodes,
                     std::uint64_t seed, const EpisodeRunner& runner = rl_episode);

}  // namespace covrl
