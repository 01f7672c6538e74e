#include "covrl/harness.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "covrl/errors.h"
#include "covrl/planners.h"
#include "covrl/seeding.h"

namespace covrl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kCheckpointStream = 99;

template <typename T>
std::vector<T> parallel_map(size_t n, int jobs, const std::function<T(size_t)>& fn) {
  std::vector<T> out(n);
  const size_t workers = std::min<size_t>(static_cast<size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json opt_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

// Rejects keys of `j` that have no counterpart in `reference`.
void check_keys(const json& j, const json& reference, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown config key: " + path);
    const json& ref = reference.at(it.key());
    if (ref.is_object() && it.value().is_object()) check_keys(it.value(), ref, path);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for ") + key + ": " + e.what());
  }
}

const json* section(const json& j, const char* key) {
  if (!j.contains(key)) return nullptr;
  if (!j.at(key).is_object()) throw ConfigError(std::string(key) + " must be an object");
  return &j.at(key);
}

std::string shape_name(ObstacleShape s) {
  return s == ObstacleShape::kUnitCells ? "unit_cells" : "rectangles";
}

ObstacleShape parse_shape(const std::string& s) {
  if (s == "unit_cells") return ObstacleShape::kUnitCells;
  if (s == "rectangles") return ObstacleShape::kRectangles;
  throw ConfigError("unknown obstacle shape: " + s);
}

std::string map_label(const ExperimentConfig& cfg, size_t i) {
  return cfg.maps.empty() ? "generated" : fs::path(cfg.maps[i]).stem().string();
}

EpisodeResult run_method(CoverageEnv& env, Method method, DqnAgent* agent) {
  switch (method) {
    case Method::kZigzag: return zigzag_episode(env);
    case Method::kBaStar: return ba_star_episode(env);
    case Method::kRl: return rl_episode(env, *agent, false);
    case Method::kHybrid: return hybrid_episode(env, *agent, false);
  }
  throw InvalidArgument("unknown method");
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kTrain: return "train";
    case Mode::kEval: return "eval";
    case Mode::kBench: return "bench";
    case Mode::kSweep: return "sweep";
    case Mode::kContraction: return "contraction";
  }
  return "?";
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kZigzag: return "zigzag";
    case Method::kBaStar: return "ba_star";
    case Method::kRl: return "rl";
    case Method::kHybrid: return "hybrid";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::kTrain, Mode::kEval, Mode::kBench, Mode::kSweep, Mode::kContraction}) {
    if (s == mode_name(m)) return m;
  }
  throw ConfigError("unknown mode: " + s);
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::kZigzag, Method::kBaStar, Method::kRl, Method::kHybrid}) {
    if (s == method_name(m)) return m;
  }
  throw ConfigError("unknown method: " + s);
}

bool is_learning(Method m) { return m == Method::kRl || m == Method::kHybrid; }

json to_json(const ExperimentConfig& c) {
  const TrainConfig& a = c.agent;
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(method_name(m));
  return {
      {"mode", mode_name(c.mode)},
      {"maps", c.maps},
      {"generator",
       {{"width", c.generator.width},
        {"height", c.generator.height},
        {"obstacle_density", c.generator.obstacle_density},
        {"shape", shape_name(c.generator.shape)},
        {"max_rect_w", c.generator.max_rect_w},
        {"max_rect_h", c.generator.max_rect_h},
        {"seed", c.generator.seed},
        {"max_attempts", c.generator.max_attempts}}},
      {"actions", c.action_mode == ActionMode::kCardinal ? "cardinal" : "differential"},
      {"action_costs", c.action_costs},
      {"episode",
       {{"eta", c.episode.eta},
        {"step_cap", c.episode.step_cap},
        {"lambda", c.episode.lambda},
        {"bump_penalty", c.episode.bump_penalty ? json(*c.episode.bump_penalty)
                                                : json(nullptr)},
        {"report_coverage", c.episode.report_coverage}}},
      {"sensor", {{"flip_prob", c.sensor.flip_prob}, {"range", c.sensor.range}}},
      {"encoder",
       {{"mode", a.encoder.mode == EncoderMode::kKnownArea ? "known" : "unknown"},
        {"n", a.encoder.n}}},
      {"agent",
       {{"gamma", a.gamma},
        {"target_sync", a.target_sync},
        {"epsilon_start", a.epsilon_start},
        {"epsilon_end", a.epsilon_end},
        {"epsilon_decay_steps", a.epsilon_decay_steps},
        {"batch_size", a.batch_size},
        {"train_start", a.train_start},
        {"train_every", a.train_every},
        {"episodes", a.episodes},
        {"double_q", a.double_q},
        {"beta_start", a.beta_start},
        {"beta_end", a.beta_end},
        {"learning_rate", a.adam.learning_rate},
        {"replay",
         {{"capacity", a.replay.capacity},
          {"prioritized", a.replay.prioritized},
          {"alpha", a.replay.alpha},
          {"epsilon", a.replay.epsilon}}},
        {"net",
         {{"conv1_filters", a.net.conv1_filters},
          {"conv2_filters", a.net.conv2_filters},
          {"fc_units", a.net.fc_units},
          {"head", a.net.head == HeadType::kDueling ? "dueling" : "plain"}}}}},
      {"method", method_name(c.method)},
      {"methods", methods},
      {"seeds", c.seeds},
      {"out_dir", c.out_dir},
      {"eval_episodes", c.eval_episodes},
      {"checkpoint", {{"every", c.checkpoint.every}, {"episodes", c.checkpoint.episodes}}},
      {"milestone", {{"coverage", c.milestone.coverage}, {"overlap", c.milestone.overlap}}},
      {"stop_at_milestone", c.stop_at_milestone},
      {"smoothing_window", c.smoothing_window},
      {"params_file", c.params_file},
      {"noise_levels", c.noise_levels},
      {"sweep", c.sweep},
      {"contraction",
       {{"mdps", c.contraction.mdps},
        {"states", c.contraction.states},
        {"actions", c.contraction.actions},
        {"gamma", c.contraction.gamma},
        {"iters", c.contraction.iters},
        {"skew_ratio", c.contraction.skew_ratio},
        {"lr_scale", c.contraction.lr_scale},
        {"alpha_per", c.contraction.alpha_per},
        {"per_epsilon", c.contraction.per_epsilon},
        {"target_fraction", c.contraction.target_fraction}}},
      {"jobs", c.jobs},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, to_json(c), "");
  std::string s;
  if (j.contains("mode")) {
    read(j, "mode", s);
    c.mode = parse_mode(s);
  }
  read(j, "maps", c.maps);
  if (const json* g = section(j, "generator")) {
    read(*g, "width", c.generator.width);
    read(*g, "height", c.generator.height);
    read(*g, "obstacle_density", c.generator.obstacle_density);
    if (g->contains("shape")) {
      read(*g, "shape", s);
      c.generator.shape = parse_shape(s);
    }
    read(*g, "max_rect_w", c.generator.max_rect_w);
    read(*g, "max_rect_h", c.generator.max_rect_h);
    read(*g, "seed", c.generator.seed);
    read(*g, "max_attempts", c.generator.max_attempts);
  }
  if (j.contains("actions")) {
    read(j, "actions", s);
    if (s == "cardinal") {
      c.action_mode = ActionMode::kCardinal;
    } else if (s == "differential") {
      c.action_mode = ActionMode::kDifferential;
    } else {
      throw ConfigError("unknown action set: " + s);
    }
  }
  read(j, "action_costs", c.action_costs);
  if (const json* e = section(j, "episode")) {
    read(*e, "eta", c.episode.eta);
    read(*e, "step_cap", c.episode.step_cap);
    read(*e, "lambda", c.episode.lambda);
    if (e->contains("bump_penalty")) {
      if (e->at("bump_penalty").is_null()) {
        c.episode.bump_penalty.reset();
      } else {
        double v = 0.0;
        read(*e, "bump_penalty", v);
        c.episode.bump_penalty = v;
      }
    }
    read(*e, "report_coverage", c.episode.report_coverage);
  }
  if (const json* e = section(j, "sensor")) {
    read(*e, "flip_prob", c.sensor.flip_prob);
    read(*e, "range", c.sensor.range);
  }
  TrainConfig& a = c.agent;
  if (const json* e = section(j, "encoder")) {
    if (e->contains("mode")) {
      read(*e, "mode", s);
      if (s == "known") {
        a.encoder.mode = EncoderMode::kKnownArea;
      } else if (s == "unknown") {
        a.encoder.mode = EncoderMode::kUnknownArea;
      } else {
        throw ConfigError("unknown encoder mode: " + s);
      }
    }
    read(*e, "n", a.encoder.n);
  }
  if (const json* e = section(j, "agent")) {
    read(*e, "gamma", a.gamma);
    read(*e, "target_sync", a.target_sync);
    read(*e, "epsilon_start", a.epsilon_start);
    read(*e, "epsilon_end", a.epsilon_end);
    read(*e, "epsilon_decay_steps", a.epsilon_decay_steps);
    read(*e, "batch_size", a.batch_size);
    read(*e, "train_start", a.train_start);
    read(*e, "train_every", a.train_every);
    read(*e, "episodes", a.episodes);
    read(*e, "double_q", a.double_q);
    read(*e, "beta_start", a.beta_start);
    read(*e, "beta_end", a.beta_end);
    read(*e, "learning_rate", a.adam.learning_rate);
    if (const json* r = section(*e, "replay")) {
      read(*r, "capacity", a.replay.capacity);
      read(*r, "prioritized", a.replay.prioritized);
      read(*r, "alpha", a.replay.alpha);
      read(*r, "epsilon", a.replay.epsilon);
    }
    if (const json* n = section(*e, "net")) {
      read(*n, "conv1_filters", a.net.conv1_filters);
      read(*n, "conv2_filters", a.net.conv2_filters);
      read(*n, "fc_units", a.net.fc_units);
      if (n->contains("head")) {
        read(*n, "head", s);
        if (s == "dueling") {
          a.net.head = HeadType::kDueling;
        } else if (s == "plain") {
          a.net.head = HeadType::kPlain;
        } else {
          throw ConfigError("unknown head: " + s);
        }
      }
    }
  }
  if (j.contains("method")) {
    read(j, "method", s);
    c.method = parse_method(s);
  }
  if (j.contains("methods")) {
    std::vector<std::string> names;
    read(j, "methods", names);
    c.methods.clear();
    for (const std::string& n : names) c.methods.push_back(parse_method(n));
  }
  read(j, "seeds", c.seeds);
  read(j, "out_dir", c.out_dir);
  read(j, "eval_episodes", c.eval_episodes);
  if (const json* e = section(j, "checkpoint")) {
    read(*e, "every", c.checkpoint.every);
    read(*e, "episodes", c.checkpoint.episodes);
  }
  if (const json* e = section(j, "milestone")) {
    read(*e, "coverage", c.milestone.coverage);
    read(*e, "overlap", c.milestone.overlap);
  }
  read(j, "stop_at_milestone", c.stop_at_milestone);
  read(j, "smoothing_window", c.smoothing_window);
  read(j, "params_file", c.params_file);
  read(j, "noise_levels", c.noise_levels);
  if (j.contains("sweep")) {
    if (!j.at("sweep").is_array()) throw ConfigError("sweep must be a list of overrides");
    c.sweep = j.at("sweep").get<std::vector<json>>();
  }
  if (const json* e = section(j, "contraction")) {
    read(*e, "mdps", c.contraction.mdps);
    read(*e, "states", c.contraction.states);
    read(*e, "actions", c.contraction.actions);
    read(*e, "gamma", c.contraction.gamma);
    read(*e, "iters", c.contraction.iters);
    read(*e, "skew_ratio", c.contraction.skew_ratio);
    read(*e, "lr_scale", c.contraction.lr_scale);
    read(*e, "alpha_per", c.contraction.alpha_per);
    read(*e, "per_epsilon", c.contraction.per_epsilon);
    read(*e, "target_fraction", c.contraction.target_fraction);
  }
  read(j, "jobs", c.jobs);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("seed list is empty");
  for (const std::string& m : c.maps) {
    if (!fs::exists(m)) throw ConfigError("map file not found: " + m);
  }
  if (c.mode == Mode::kEval && is_learning(c.method)) {
    if (c.params_file.empty()) throw ConfigError("eval of a learning method needs params_file");
    if (!fs::exists(c.params_file)) {
      throw ConfigError("params file not found: " + c.params_file);
    }
  }
  if ((c.mode == Mode::kTrain || c.mode == Mode::kSweep) && !is_learning(c.method)) {
    throw ConfigError("training needs method rl or hybrid");
  }
  if (c.mode == Mode::kBench && c.methods.empty()) throw ConfigError("bench needs methods");
  if (c.mode == Mode::kSweep && c.sweep.empty()) throw ConfigError("sweep grid is empty");
  if (!(c.episode.eta > 0.0 && c.episode.eta <= 1.0)) {
    throw ConfigError("eta must lie in (0, 1]");
  }
  if (c.episode.step_cap < 1) throw ConfigError("step cap must be positive");
  if (!(c.episode.lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  auto check_noise = [](double rho) {
    if (!(rho >= 0.0 && rho < 0.5)) throw ConfigError("noise must lie in [0, 0.5)");
  };
  check_noise(c.sensor.flip_prob);
  for (double rho : c.noise_levels) check_noise(rho);
  if (c.sensor.range < 1) throw ConfigError("sensor range must be positive");
  if (!c.action_costs.empty()) {
    try {
      ActionSet(c.action_mode, c.action_costs);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
  if (c.checkpoint.every < 0 || c.checkpoint.episodes < 1) {
    throw ConfigError("checkpoint interval must be nonnegative and episodes positive");
  }
  if (c.smoothing_window < 1) throw ConfigError("smoothing window must be positive");
  if (c.jobs < 1) throw ConfigError("jobs must be positive");
  if (c.agent.encoder.n < 3) throw ConfigError("encoder size must be at least 3");
  const ContractionSettings& k = c.contraction;
  if (k.mdps < 1 || k.states < 1 || k.actions < 1 || k.iters < 1 ||
      !(k.gamma >= 0.0 && k.gamma < 1.0) || !(k.skew_ratio >= 1.0) ||
      !(k.lr_scale > 0.0 && k.lr_scale <= 1.0) || !(k.per_epsilon > 0.0) ||
      !(k.target_fraction > 0.0 && k.target_fraction < 1.0)) {
    throw ConfigError("contraction settings out of range");
  }
  validate(c.agent);
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("out_dir");
  j.erase("jobs");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

GridMap resolve_map(const ExperimentConfig& cfg, size_t map_index,
                    std::uint64_t seed) {
  if (!cfg.maps.empty()) return load_map_file(cfg.maps.at(map_index));
  MapGenParams g = cfg.generator;
  g.seed = derive_seed(cfg.generator.seed, seed);
  return generate_map(g);
}

EnvFactory make_env_factory(const ExperimentConfig& cfg, const GridMap& map) {
  auto shared = std::make_shared<const GridMap>(map);
  const ActionSet actions = cfg.action_costs.empty()
                                ? ActionSet(cfg.action_mode)
                                : ActionSet(cfg.action_mode, cfg.action_costs);
  return [shared, actions, ep = cfg.episode, sensor = cfg.sensor](std::uint64_t s) {
    return CoverageEnv(shared, ep, sensor, actions, s);
  };
}

EvalStats evaluate_method(const ExperimentConfig& cfg, const GridMap& map,
                          Method method, const NetworkParams* params,
                          int episodes, std::uint64_t seed) {
  if (episodes < 1) throw InvalidArgument("evaluation needs at least one episode");
  std::optional<DqnAgent> agent;
  if (is_learning(method)) {
    if (!params) throw InvalidArgument("learning methods need network parameters");
    agent.emplace(cfg.agent, *params, seed);
  }
  const EnvFactory make_env = make_env_factory(cfg, map);
  EvalStats s;
  for (int ep = 0; ep < episodes; ++ep) {
    CoverageEnv env = make_env(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    const EpisodeResult r = run_method(env, method, agent ? &*agent : nullptr);
    s.coverage_pct += 100.0 * r.coverage;
    s.overlap_pct += 100.0 * r.overlap;
    s.steps += r.steps;
    s.ret += r.ret;
    s.episodes.push_back(r);
  }
  s.coverage_pct /= episodes;
  s.overlap_pct /= episodes;
  s.steps /= episodes;
  s.ret /= episodes;
  return s;
}

bool better_checkpoint(const Checkpoint& a, const Checkpoint& b,
                       const Milestone& m) {
  const bool pa = a.coverage_pct >= m.coverage;
  const bool pb = b.coverage_pct >= m.coverage;
  if (pa != pb) return pa;
  if (pa) return a.overlap_pct < b.overlap_pct;
  return a.coverage_pct > b.coverage_pct;
}

SeedRun train_seed(const ExperimentConfig& cfg, const GridMap& map,
                   Method method, std::uint64_t seed) {
  if (!is_learning(method)) throw InvalidArgument("only learning methods train");
  const EnvFactory make_env = make_env_factory(cfg, map);
  const EpisodeRunner runner =
      method == Method::kHybrid ? EpisodeRunner(hybrid_episode) : EpisodeRunner(rl_episode);
  SeedRun out;
  out.seed = seed;
  const StopRule stop = [&](const std::vector<MetricsRow>& rows, const DqnAgent& agent) {
    const int every = cfg.checkpoint.every;
    if (every <= 0 || rows.size() % static_cast<size_t>(every) != 0) return false;
    const EvalStats e = evaluate_method(cfg, map, method, &agent.online(),
                                        cfg.checkpoint.episodes,
                                        derive_seed(seed, kCheckpointStream));
    const Checkpoint cp{rows.back().episode, e.coverage_pct, e.overlap_pct, e.steps};
    out.checkpoints.push_back(cp);
    if (!out.best_checkpoint || better_checkpoint(cp, *out.best_checkpoint, cfg.milestone)) {
      out.best_checkpoint = cp;
      out.best_params = agent.online();
    }
    if (!out.milestone_episode && e.coverage_pct >= cfg.milestone.coverage &&
        e.overlap_pct < cfg.milestone.overlap) {
      out.milestone_episode = rows.back().episode;
      return cfg.stop_at_milestone;
    }
    return false;
  };
  TrainResult r = train(make_env, cfg.agent, seed, runner, stop);
  out.rows = std::move(r.rows);
  out.params = std::move(r.params);
  return out;
}

double tail_mean(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
  if (rows.empty()) return 0.0;
  const size_t n = std::max<size_t>(1, (rows.size() + 9) / 10);
  double sum = 0.0;
  for (size_t i = rows.size() - n; i < rows.size(); ++i) sum += rows[i].*field;
  return sum / static_cast<double>(n);
}

SeedSummary summarize(const SeedRun& run) {
  SeedSummary s;
  s.seed = run.seed;
  s.coverage_pct = tail_mean(run.rows, &MetricsRow::coverage_pct);
  s.overlap_pct = tail_mean(run.rows, &MetricsRow::overlap_pct);
  s.ret = tail_mean(run.rows, &MetricsRow::ret);
  s.milestone_episode = run.milestone_episode;
  return s;
}

std::vector<BenchRow> noise_study(const ExperimentConfig& cfg,
                                  const std::string& map_name,
                                  const GridMap& map,
                                  const std::vector<double>& noise_levels,
                                  const std::vector<Method>& methods) {
  std::vector<BenchRow> out;
  for (double rho : noise_levels) {
    ExperimentConfig c = cfg;
    c.sensor.flip_prob = rho;
    for (Method m : methods) {
      const std::vector<EvalStats> per_seed = parallel_map<EvalStats>(
          c.seeds.size(), c.jobs, [&](size_t i) {
            const std::uint64_t seed = c.seeds[i];
            if (!is_learning(m)) {
              return evaluate_method(c, map, m, nullptr, c.eval_episodes, seed);
            }
            const SeedRun trained = train_seed(c, map, m, seed);
            return evaluate_method(c, map, m, &*trained.params, c.eval_episodes, seed);
          });
      BenchRow row{map_name, m, rho};
      for (const EvalStats& e : per_seed) {
        row.coverage_pct += e.coverage_pct;
        row.overlap_pct += e.overlap_pct;
        row.steps += e.steps;
      }
      const double n = static_cast<double>(per_seed.size());
      row.coverage_pct /= n;
      row.overlap_pct /= n;
      row.steps /= n;
      out.push_back(row);
    }
  }
  return out;
}

std::vector<double> smooth(const std::vector<double>& xs, int window) {
  if (window < 1) throw InvalidArgument("smoothing window must be positive");
  if (window == 1) return xs;
  std::vector<double> out(xs.size());
  double sum = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sum += xs[i];
    if (i >= static_cast<size_t>(window)) sum -= xs[i - window];
    out[i] = sum / static_cast<double>(std::min<size_t>(i + 1, window));
  }
  return out;
}

std::vector<Band> band(const std::vector<std::vector<double>>& series) {
  if (series.empty()) return {};
  size_t n = series.front().size();
  for (const auto& s : series) n = std::min(n, s.size());
  std::vector<Band> out(n);
  for (size_t i = 0; i < n; ++i) {
    Band b{0.0, series.front()[i], series.front()[i]};
    for (const auto& s : series) {
      b.mean += s[i];
      b.min = std::min(b.min, s[i]);
      b.max = std::max(b.max, s[i]);
    }
    b.mean /= static_cast<double>(series.size());
    out[i] = b;
  }
  return out;
}

void write_metrics_csv(std::ostream& os, const std::vector<SeedRun>& runs) {
  os << "seed,episode,steps,coverage_pct,overlap_pct,return,epsilon,loss_mean\n";
  for (const SeedRun& run : runs) {
    for (const MetricsRow& r : run.rows) {
      os << run.seed << ',' << r.episode << ',' << r.steps << ',' << r.coverage_pct
         << ',' << r.overlap_pct << ',' << r.ret << ',' << r.epsilon << ','
         << r.loss_mean << '\n';
    }
  }
}

void write_learning_curves(std::ostream& os, const std::vector<SeedRun>& runs,
                           int window) {
  std::vector<std::vector<double>> cov, ovl, ret;
  for (const SeedRun& run : runs) {
    std::vector<double> c, o, r;
    for (const MetricsRow& row : run.rows) {
      c.push_back(row.coverage_pct);
      o.push_back(row.overlap_pct);
      r.push_back(row.ret);
    }
    cov.push_back(smooth(c, window));
    ovl.push_back(smooth(o, window));
    ret.push_back(smooth(r, window));
  }
  const std::vector<Band> bc = band(cov), bo = band(ovl), br = band(ret);
  os << "episode,coverage_mean,coverage_min,coverage_max,overlap_mean,overlap_min,"
        "overlap_max,return_mean,return_min,return_max\n";
  for (size_t i = 0; i < bc.size(); ++i) {
    os << i + 1 << ',' << bc[i].mean << ',' << bc[i].min << ',' << bc[i].max << ','
       << bo[i].mean << ',' << bo[i].min << ',' << bo[i].max << ',' << br[i].mean
       << ',' << br[i].min << ',' << br[i].max << '\n';
  }
}

namespace {

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "map,method,noise,coverage_pct,overlap_pct,steps\n";
  for (const BenchRow& r : rows) {
    os << r.map << ',' << method_name(r.method) << ',' << r.noise << ','
       << r.coverage_pct << ',' << r.overlap_pct << ',' << r.steps << '\n';
  }
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "combo,overrides,converged_reward\n";
  for (const SweepRow& r : rows) {
    os << r.combo << ',' << csv_quote(r.overrides) << ',' << r.converged_reward << '\n';
  }
}

void write_contraction_csv(std::ostream& os, const std::vector<ContractionRow>& rows) {
  os << "mdp,iters_uniform,iters_prioritized,envelope_held,max_ratio,beta_min\n";
  for (const ContractionRow& r : rows) {
    os << r.mdp << ',' << r.iters_uniform << ',' << r.iters_prioritized << ','
       << (r.envelope_held ? 1 : 0) << ',' << r.max_ratio << ',' << r.beta_min << '\n';
  }
}

void write_checkpoints_csv(std::ostream& os, const std::vector<SeedRun>& runs) {
  os << "seed,episode,coverage_pct,overlap_pct,steps\n";
  for (const SeedRun& run : runs) {
    for (const Checkpoint& c : run.checkpoints) {
      os << run.seed << ',' << c.episode << ',' << c.coverage_pct << ','
         << c.overlap_pct << ',' << c.steps << '\n';
    }
  }
}

json seed_summaries(const std::vector<SeedRun>& runs) {
  json seeds = json::array();
  double cov = 0.0, ovl = 0.0, ret = 0.0;
  for (const SeedRun& run : runs) {
    const SeedSummary s = summarize(run);
    seeds.push_back({{"seed", s.seed},
                     {"episodes", run.rows.size()},
                     {"coverage_pct", s.coverage_pct},
                     {"overlap_pct", s.overlap_pct},
                     {"return", s.ret},
                     {"milestone_episode", opt_int(s.milestone_episode)}});
    cov += s.coverage_pct;
    ovl += s.overlap_pct;
    ret += s.ret;
  }
  const double n = static_cast<double>(std::max<size_t>(runs.size(), 1));
  return {{"seeds", seeds},
          {"mean_coverage_pct", cov / n},
          {"mean_overlap_pct", ovl / n},
          {"mean_return", ret / n}};
}

std::vector<SeedRun> train_all(const ExperimentConfig& cfg) {
  return parallel_map<SeedRun>(cfg.seeds.size(), cfg.jobs, [&](size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    return train_seed(cfg, resolve_map(cfg, 0, seed), cfg.method, seed);
  });
}

SeedRun eval_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                  const NetworkParams* params) {
  const EvalStats e = evaluate_method(cfg, resolve_map(cfg, 0, seed), cfg.method,
                                      params, cfg.eval_episodes, seed);
  SeedRun run;
  run.seed = seed;
  for (size_t i = 0; i < e.episodes.size(); ++i) {
    const EpisodeResult& r = e.episodes[i];
    MetricsRow row;
    row.episode = static_cast<int>(i) + 1;
    row.steps = r.steps;
    row.coverage_pct = 100.0 * r.coverage;
    row.overlap_pct = 100.0 * r.overlap;
    row.ret = r.ret;
    run.rows.push_back(row);
  }
  return run;
}

// Mean over every row, used for evaluation summaries.
json eval_summary(const std::vector<SeedRun>& runs) {
  json seeds = json::array();
  double cov = 0.0, ovl = 0.0, ret = 0.0, steps = 0.0;
  size_t count = 0;
  for (const SeedRun& run : runs) {
    double c = 0.0, o = 0.0, r = 0.0, s = 0.0;
    for (const MetricsRow& row : run.rows) {
      c += row.coverage_pct;
      o += row.overlap_pct;
      r += row.ret;
      s += row.steps;
    }
    const double n = static_cast<double>(run.rows.size());
    seeds.push_back({{"seed", run.seed},
                     {"coverage_pct", c / n},
                     {"overlap_pct", o / n},
                     {"return", r / n},
                     {"steps", s / n}});
    cov += c;
    ovl += o;
    ret += r;
    steps += s;
    count += run.rows.size();
  }
  const double n = static_cast<double>(std::max<size_t>(count, 1));
  return {{"seeds", seeds},
          {"mean_coverage_pct", cov / n},
          {"mean_overlap_pct", ovl / n},
          {"mean_return", ret / n},
          {"mean_steps", steps / n}};
}

std::vector<ContractionRow> contraction_lab(const ExperimentConfig& cfg,
                                            std::optional<RateTable>& first,
                                            bool& zero_entry_stalled) {
  const ContractionSettings& k = cfg.contraction;
  const std::uint64_t base = cfg.seeds.front();
  Schedule uni;
  uni.skew_ratio = k.skew_ratio;
  uni.lr_scale = k.lr_scale;
  Schedule pri = uni;
  pri.kind = ScheduleKind::kPrioritized;
  pri.alpha_per = k.alpha_per;
  pri.epsilon = k.per_epsilon;
  std::vector<RateTable> tables(static_cast<size_t>(k.mdps));
  std::vector<ContractionRow> rows = parallel_map<ContractionRow>(
      static_cast<size_t>(k.mdps), cfg.jobs, [&](size_t i) {
        const std::uint64_t seed = derive_seed(base, i);
        const TabularMDP mdp = random_mdp(k.states, k.actions, k.gamma, seed);
        RateTable t = rate_table(mdp, uni, pri, k.iters, seed);
        ContractionRow row;
        row.mdp = static_cast<int>(i);
        row.iters_uniform = iterations_to(t.error_uniform, k.target_fraction);
        row.iters_prioritized = iterations_to(t.error_prioritized, k.target_fraction);
        for (size_t s = 0; s < t.error_uniform.size(); ++s) {
          if (t.error_uniform[s] > t.envelope_min[s] * (1.0 + 1e-12) + 1e-300) {
            row.envelope_held = false;
          }
        }
        const SamplingDist d = skewed_dist(k.states, k.actions, k.skew_ratio, seed);
        const ContractionReport rep =
            contraction_check(mdp, d, k.lr_scale / d.max(), 1000, seed);
        row.max_ratio = rep.max_ratio;
        row.beta_min = rep.beta_min;
        tables[i] = std::move(t);
        return row;
      });
  first = std::move(tables.front());

  // A distribution with one zero entry leaves that entry's error untouched.
  const TabularMDP mdp = random_mdp(k.states, k.actions, k.gamma, derive_seed(base, 0));
  const QTable qs = q_star(mdp);
  SamplingDist d = skewed_dist(k.states, k.actions, k.skew_ratio, derive_seed(base, 0));
  d.rho(0, 0) = 0.0;
  d.rho /= d.rho.sum();
  QTable q = QTable::Zero(k.states, k.actions);
  const double lr = k.lr_scale / d.max();
  for (int t = 0; t < k.iters; ++t) q = apply_U(q, mdp, d, lr);
  zero_entry_stalled = q(0, 0) == 0.0 && qs(0, 0) != 0.0;
  return rows;
}

}  // namespace

void emit_plotdata(const RunRecord& record, const std::string& dir, int window) {
  const fs::path root(dir);
  make_dirs(root);
  if (!record.runs.empty()) {
    std::ofstream os = open_out(root / "learning_curves.csv");
    write_learning_curves(os, record.runs, window);
  }
  if (!record.bench.empty()) {
    std::ofstream os = open_out(root / "bench.csv");
    write_bench_csv(os, record.bench);
  }
  if (!record.sweep.empty()) {
    std::ofstream os = open_out(root / "sweep.csv");
    write_sweep_csv(os, record.sweep);
  }
  if (record.rate_curve) {
    std::ofstream os = open_out(root / "contraction_rate.csv");
    os << std::setprecision(17);
    write_csv(os, *record.rate_curve);
  }
}

RunRecord run(const ExperimentConfig& cfg) {
  validate(cfg);
  const fs::path out(cfg.out_dir);
  make_dirs(out);
  RunRecord rec;
  rec.config_hash = config_hash(cfg);
  rec.mode = cfg.mode;
  json summary = {{"config_hash", rec.config_hash}, {"mode", mode_name(cfg.mode)}};

  switch (cfg.mode) {
    case Mode::kTrain: {
      rec.runs = train_all(cfg);
      for (const SeedRun& r : rec.runs) {
        const std::string tag = std::to_string(r.seed) + ".bin";
        save_checkpoint(*r.params, (out / ("params_seed" + tag)).string());
        if (r.best_params) {
          save_checkpoint(*r.best_params, (out / ("params_best_seed" + tag)).string());
        }
      }
      std::ofstream cp = open_out(out / "checkpoints.csv");
      write_checkpoints_csv(cp, rec.runs);
      summary["method"] = method_name(cfg.method);
      summary.update(seed_summaries(rec.runs));
      break;
    }
    case Mode::kEval: {
      std::optional<NetworkParams> params;
      if (is_learning(cfg.method)) params = load_checkpoint(cfg.params_file);
      rec.runs = parallel_map<SeedRun>(cfg.seeds.size(), cfg.jobs, [&](size_t i) {
        return eval_seed(cfg, cfg.seeds[i], params ? &*params : nullptr);
      });
      summary["method"] = method_name(cfg.method);
      summary.update(eval_summary(rec.runs));
      break;
    }
    case Mode::kBench: {
      const std::vector<double> levels =
          cfg.noise_levels.empty() ? std::vector<double>{cfg.sensor.flip_prob}
                                   : cfg.noise_levels;
      const size_t maps = std::max<size_t>(cfg.maps.size(), 1);
      for (size_t i = 0; i < maps; ++i) {
        const GridMap map = resolve_map(cfg, i, cfg.seeds.front());
        const std::vector<BenchRow> rows =
            noise_study(cfg, map_label(cfg, i), map, levels, cfg.methods);
        rec.bench.insert(rec.bench.end(), rows.begin(), rows.end());
      }
      std::ofstream os = open_out(out / "bench.csv");
      write_bench_csv(os, rec.bench);
      json rows = json::array();
      for (const BenchRow& r : rec.bench) {
        rows.push_back({{"map", r.map},
                        {"method", method_name(r.method)},
                        {"noise", r.noise},
                        {"coverage_pct", r.coverage_pct},
                        {"overlap_pct", r.overlap_pct},
                        {"steps", r.steps}});
      }
      summary["bench"] = rows;
      break;
    }
    case Mode::kSweep: {
      json combos = json::array();
      for (size_t k = 0; k < cfg.sweep.size(); ++k) {
        json j = to_json(cfg);
        j.merge_patch(cfg.sweep[k]);
        ExperimentConfig c = config_from_json(j);
        c.mode = Mode::kTrain;
        validate(c);
        const std::vector<SeedRun> runs = train_all(c);
        SweepRow row{static_cast<int>(k), cfg.sweep[k].dump(), 0.0};
        for (const SeedRun& r : runs) row.converged_reward += tail_mean(r.rows, &MetricsRow::ret);
        row.converged_reward /= static_cast<double>(runs.size());
        rec.sweep.push_back(row);
        std::ofstream os = open_out(out / ("metrics_combo" + std::to_string(k) + ".csv"));
        write_metrics_csv(os, runs);
        combos.push_back({{"combo", row.combo},
                          {"overrides", cfg.sweep[k]},
                          {"converged_reward", row.converged_reward}});
      }
      std::ofstream os = open_out(out / "sweep.csv");
      write_sweep_csv(os, rec.sweep);
      summary["sweep"] = combos;
      break;
    }
    case Mode::kContraction: {
      bool stalled = false;
      rec.contraction = contraction_lab(cfg, rec.rate_curve, stalled);
      std::ofstream os = open_out(out / "contraction.csv");
      write_contraction_csv(os, rec.contraction);
      int faster = 0, held = 0;
      for (const ContractionRow& r : rec.contraction) {
        if (r.iters_prioritized >= 0 &&
            (r.iters_uniform < 0 || r.iters_prioritized < r.iters_uniform)) {
          ++faster;
        }
        if (r.envelope_held) ++held;
      }
      summary["mdps"] = rec.contraction.size();
      summary["prioritized_faster"] = faster;
      summary["envelope_held"] = held;
      summary["zero_entry_stalled"] = stalled;
      break;
    }
  }

  if (!rec.runs.empty()) {
    std::ofstream os = open_out(out / "metrics.csv");
    write_metrics_csv(os, rec.runs);
  }
  rec.summary = summary;
  {
    std::ofstream os = open_out(out / "summary.json");
    os << summary.dump(2) << '\n';
  }
  emit_plotdata(rec, (out / "plotdata").string(), cfg.smoothing_window);
  return rec;
}

}  // namespace covrl
