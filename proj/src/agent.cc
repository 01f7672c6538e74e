#include "covrl/agent.h"

#include <algorithm>
#include <cmath>

#include "covrl/errors.h"
#include "covrl/seeding.h"

namespace covrl {

double epsilon(long t, const TrainConfig& cfg) {
  if (t >= cfg.epsilon_decay_steps || cfg.epsilon_decay_steps <= 0) {
    return cfg.epsilon_end;
  }
  const double frac = static_cast<double>(std::max(t, 0L)) /
                      static_cast<double>(cfg.epsilon_decay_steps);
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

double per_beta(long t, long horizon, const TrainConfig& cfg) {
  const double frac =
      horizon <= 0 ? 1.0
                   : std::clamp(static_cast<double>(t) / static_cast<double>(horizon),
                                0.0, 1.0);
  return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac;
}

int greedy_action(const std::vector<double>& q) {
  if (q.empty()) throw InvalidArgument("empty Q vector");
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

int act(const NetworkParams& params, const StateTensor& x, double eps,
        std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < eps) {
    return std::uniform_int_distribution<int>(0, params.spec.num_actions - 1)(rng);
  }
  return greedy_action(forward(params, x));
}

std::vector<double> td_targets(const RowMatrix& q_online_next,
                               const RowMatrix& q_target_next,
                               const std::vector<double>& rewards,
                               const std::vector<std::uint8_t>& dones,
                               double gamma, bool double_q) {
  const auto n = static_cast<Eigen::Index>(rewards.size());
  if (n < 1) throw InvalidArgument("td_targets needs a nonempty batch");
  if (static_cast<Eigen::Index>(dones.size()) != n || q_target_next.rows() != n ||
      (double_q && (q_online_next.rows() != n ||
                    q_online_next.cols() != q_target_next.cols()))) {
    throw ShapeError("td_targets inputs differ in batch size");
  }
  std::vector<double> y(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dones[i]) {
      y[i] = rewards[i];
      continue;
    }
    Eigen::Index best = 0;
    if (double_q) {
      q_online_next.row(i).maxCoeff(&best);
    } else {
      q_target_next.row(i).maxCoeff(&best);
    }
    y[i] = rewards[i] + gamma * q_target_next(i, best);
  }
  return y;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1]");
  }
  if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
  if (cfg.target_sync < 1) throw ConfigError("target_sync must be positive");
  if (cfg.train_every < 1) throw ConfigError("train_every must be positive");
  if (cfg.episodes < 1) throw ConfigError("episode budget must be positive");
  if (cfg.train_start < 0) throw ConfigError("train_start must be nonnegative");
  if (cfg.epsilon_decay_steps < 0) throw ConfigError("epsilon decay must be nonnegative");
  if (!(cfg.epsilon_start >= 0.0 && cfg.epsilon_start <= 1.0 &&
        cfg.epsilon_end >= 0.0 && cfg.epsilon_end <= 1.0)) {
    throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (!(cfg.adam.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.replay.capacity < 1) throw ConfigError("replay capacity must be positive");
  if (!(cfg.replay.alpha >= 0.0) || !(cfg.replay.epsilon > 0.0)) {
    throw ConfigError("replay alpha must be nonnegative and epsilon positive");
  }
  if (cfg.net.conv1_filters < 1 || cfg.net.conv2_filters < 1) {
    throw ConfigError("conv layers need at least one filter");
  }
  for (int u : cfg.net.fc_units) {
    if (u < 1) throw ConfigError("fully-connected layers need at least one unit");
  }
}

namespace {

NetworkSpec sized_spec(const TrainConfig& cfg, int map_height, int map_width,
                       int num_actions) {
  NetworkSpec spec = cfg.net;
  const auto [h, w] = encoded_shape(cfg.encoder, map_height, map_width);
  spec.height = h;
  spec.width = w;
  spec.in_channels = kStateChannels;
  spec.num_actions = num_actions;
  return spec;
}

ReplayConfig frozen_replay(ReplayConfig r) {
  r.capacity = 1;
  return r;
}

}  // namespace

DqnAgent::DqnAgent(const TrainConfig& cfg, int map_height, int map_width,
                   int num_actions, std::uint64_t seed, long beta_horizon)
    : cfg_(cfg),
      online_(init_params(sized_spec(cfg, map_height, map_width, num_actions),
                          derive_seed(seed, 0))),
      target_(online_),
      replay_(cfg.replay),
      rng_(derive_seed(seed, 1)),
      beta_horizon_(beta_horizon) {
  validate(cfg_);
}

DqnAgent::DqnAgent(const TrainConfig& cfg, NetworkParams params,
                   std::uint64_t seed)
    : cfg_(cfg),
      online_(std::move(params)),
      target_(online_),
      replay_(frozen_replay(cfg.replay)),
      rng_(derive_seed(seed, 1)) {}

StateTensor DqnAgent::encode(const Observation& obs) const {
  return covrl::encode(obs, cfg_.encoder);
}

int DqnAgent::select(const Observation& obs, bool explore) {
  return act(online_, encode(obs), explore ? current_epsilon() : 0.0, rng_);
}

std::optional<double> DqnAgent::observe(Transition t) {
  replay_.push(std::move(t));
  ++env_steps_;
  if (replay_.size() < std::max(cfg_.train_start, cfg_.batch_size) ||
      env_steps_ % cfg_.train_every != 0) {
    return std::nullopt;
  }
  return train_step();
}

double DqnAgent::train_step() {
  const int k = cfg_.batch_size;
  const ReplaySample s =
      replay_.sample(k, per_beta(env_steps_, beta_horizon_, cfg_), rng_);

  std::vector<StateTensor> cur(k), next(k);
  std::vector<const StateTensor*> cur_ptr(k), next_ptr(k);
  std::vector<double> rewards(k);
  std::vector<std::uint8_t> dones(k);
  TrainBatch batch;
  batch.actions.resize(k);
  for (int i = 0; i < k; ++i) {
    const Transition& t = *s.items[i];
    cur[i] = encode(t.state);
    next[i] = encode(t.next_state);
    cur_ptr[i] = &cur[i];
    next_ptr[i] = &next[i];
    rewards[i] = t.reward;
    dones[i] = t.done ? 1 : 0;
    batch.actions[i] = t.action;
  }
  const RowMatrix next_in = pack_batch(next_ptr);
  const RowMatrix q_target_next = forward_batch(target_, next_in);
  const RowMatrix q_online_next =
      cfg_.double_q ? forward_batch(online_, next_in) : RowMatrix();
  batch.targets = td_targets(q_online_next, q_target_next, rewards, dones,
                             cfg_.gamma, cfg_.double_q);
  batch.inputs = pack_batch(cur_ptr);
  batch.weights = s.weights;

  backward(online_, batch, grads_);
  adam_step(online_, grads_.grad, cfg_.adam);
  replay_.update_priorities(s.indices, grads_.residuals);
  ++updates_;
  if (updates_ % cfg_.target_sync == 0) copy_weights(online_, target_);
  return grads_.loss;
}

EpisodeResult rl_episode(CoverageEnv& env, DqnAgent& agent, bool training) {
  EpisodeResult r;
  while (!env.done()) {
    Observation obs = env.observe();
    const int a = agent.select(obs, training);
    const StepOutcome out = env.step(a);
    ++r.agent_actions;
    if (training) {
      const std::optional<double> loss = agent.observe(
          {std::move(obs), a, out.reward, env.observe(), env.target_reached()});
      if (loss) {
        r.loss_sum += *loss;
        ++r.loss_count;
      }
    }
  }
  r.steps = env.steps();
  r.coverage = env.coverage_fraction();
  r.overlap = env.reported_overlap();
  r.ret = env.total_reward();
  r.reached_eta = env.target_reached();
  return r;
}

TrainResult train(const EnvFactory& make_env, const TrainConfig& cfg,
                  std::uint64_t seed, const EpisodeRunner& runner,
                  const StopRule& stop) {
  validate(cfg);
  const CoverageEnv probe = make_env(derive_seed(seed, 0));
  const long horizon =
      static_cast<long>(cfg.episodes) * probe.config().step_cap;
  DqnAgent agent(cfg, probe.map().height(), probe.map().width(),
                 probe.action_set().size(), seed, horizon);

  TrainResult out;
  out.rows.reserve(static_cast<size_t>(cfg.episodes));
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    CoverageEnv env = make_env(derive_seed(seed, 1 + static_cast<std::uint64_t>(ep)));
    const EpisodeResult r = runner(env, agent, true);
    MetricsRow row;
    row.episode = ep + 1;
    row.steps = r.steps;
    row.coverage_pct = 100.0 * r.coverage;
    row.overlap_pct = 100.0 * r.overlap;
    row.ret = r.ret;
    row.epsilon = agent.current_epsilon();
    row.loss_mean = r.loss_count > 0 ? r.loss_sum / r.loss_count : 0.0;
    out.rows.push_back(row);
    if (stop && stop(out.rows, agent)) break;
  }
  out.params = agent.online();
  return out;
}

EvalSummary evaluate(const EnvFactory& make_env, DqnAgent& agent, int episodes,
                     std::uint64_t seed, const EpisodeRunner& runner) {
  if (episodes < 1) throw InvalidArgument("evaluation needs at least one episode");
  EvalSummary s;
  for (int ep = 0; ep < episodes; ++ep) {
    CoverageEnv env = make_env(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    const EpisodeResult r = runner(env, agent, false);
    s.coverage_pct += 100.0 * r.coverage;
    s.overlap_pct += 100.0 * r.overlap;
    s.ret += r.ret;
    s.steps += r.steps;
  }
  s.coverage_pct /= episodes;
  s.overlap_pct /= episodes;
  s.ret /= episodes;
  s.steps /= episodes;
  return s;
}

}  // namespace covrl
