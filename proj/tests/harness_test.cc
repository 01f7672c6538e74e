#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "covrl/errors.h"
#include "covrl/harness.h"
#include "test_util.h"

namespace covrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("covrl_harness_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

ExperimentConfig tiny_train(const fs::path& out) {
  ExperimentConfig c;
  c.mode = Mode::kTrain;
  c.maps = {testing::fixture_path("maze7.txt")};
  c.episode.step_cap = 60;
  c.agent.episodes = 8;
  c.agent.net.conv1_filters = 2;
  c.agent.net.conv2_filters = 2;
  c.agent.net.fc_units = {8};
  c.agent.batch_size = 4;
  c.agent.train_start = 16;
  c.agent.replay.capacity = 1000;
  c.checkpoint.every = 4;
  c.seeds = {0, 1};
  c.out_dir = out.string();
  return c;
}

TEST_CASE("config survives a JSON round trip") {
  ExperimentConfig c;
  c.mode = Mode::kBench;
  c.maps = {"a.txt", "b.txt"};
  c.episode.bump_penalty = 0.75;
  c.sensor.flip_prob = 0.1;
  c.agent.net.fc_units = {32, 16};
  c.agent.replay.prioritized = false;
  c.methods = {Method::kZigzag, Method::kHybrid};
  c.seeds = {3, 4, 5};
  c.noise_levels = {0.0, 0.05};
  c.sweep = {json{{"agent", {{"batch_size", 16}}}}};
  const json j = to_json(c);
  const ExperimentConfig back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.episode.bump_penalty == 0.75);
  CHECK(back.methods == c.methods);
}

TEST_CASE("partial config keeps defaults") {
  const ExperimentConfig c =
      config_from_json(json::parse(R"({"agent": {"gamma": 0.5}, "seeds": [7]})"));
  CHECK(c.agent.gamma == 0.5);
  CHECK(c.agent.batch_size == 32);
  CHECK(c.seeds == std::vector<std::uint64_t>{7});
  CHECK(c.episode.eta == 0.9);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"agnet": {}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"agent": {"gama": 1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"mode": "fly"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"seeds": "zero"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"methods": ["astar"]})")), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);

  ExperimentConfig c;
  c.seeds.clear();
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.maps = {"/nonexistent/map.txt"};
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.sensor.flip_prob = 0.5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.mode = Mode::kEval;
  c.method = Method::kRl;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.agent.gamma = 2.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ExperimentConfig{};
  c.action_costs = {0.1};
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_NOTHROW(validate(ExperimentConfig{}));
}

TEST_CASE("config files are read as JSON") {
  TempDir dir("config");
  const fs::path p = dir.path / "c.json";
  std::ofstream(p) << R"({"mode": "eval", "method": "zigzag", "eval_episodes": 3})";
  const ExperimentConfig c = load_config(p.string());
  CHECK(c.mode == Mode::kEval);
  CHECK(c.method == Method::kZigzag);
  CHECK(c.eval_episodes == 3);
  std::ofstream(p) << "{not json";
  CHECK_THROWS_AS(load_config(p.string()), ConfigError);
}

TEST_CASE("shipped example configs are valid") {
  const fs::path root = fs::path(COVRL_FIXTURE_DIR).parent_path();
  int seen = 0;
  for (const auto& e : fs::directory_iterator(root / "configs")) {
    CAPTURE(e.path().string());
    ExperimentConfig c = load_config(e.path().string());
    for (std::string& m : c.maps) m = (root / m).string();
    CHECK_NOTHROW(validate(c));
    ++seen;
  }
  CHECK(seen >= 5);
}

TEST_CASE("config hash identifies the experiment, not where it is written") {
  ExperimentConfig a, b;
  b.out_dir = "elsewhere";
  b.jobs = 4;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.agent.gamma = 0.98;
  CHECK_FALSE(config_hash(a) == config_hash(b));
}

TEST_CASE("smoothing") {
  const std::vector<double> xs = {1.0, 2.0, 6.0, 3.0};
  CHECK(smooth(xs, 1) == xs);
  const std::vector<double> s = smooth(xs, 2);
  CHECK(s == std::vector<double>{1.0, 1.5, 4.0, 4.5});
  CHECK(smooth(xs, 10).back() == doctest::Approx(3.0));
  CHECK_THROWS_AS(smooth(xs, 0), InvalidArgument);
}

TEST_CASE("bands across seeds match a direct recomputation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<std::vector<double>> series(10);
  for (size_t s = 0; s < series.size(); ++s) {
    for (int i = 0; i < 40 + static_cast<int>(s); ++i) series[s].push_back(u(rng));
  }
  const std::vector<Band> b = band(series);
  REQUIRE(b.size() == 40);
  for (size_t i = 0; i < b.size(); ++i) {
    double sum = 0.0, lo = 1e300, hi = -1e300;
    for (const auto& s : series) {
      sum += s[i];
      lo = std::min(lo, s[i]);
      hi = std::max(hi, s[i]);
    }
    CHECK(b[i].mean == doctest::Approx(sum / 10.0).epsilon(1e-12));
    CHECK(b[i].min == lo);
    CHECK(b[i].max == hi);
    CHECK(b[i].min <= b[i].mean);
    CHECK(b[i].mean <= b[i].max);
  }
}

TEST_CASE("eval of zigzag on an empty 5x5 map") {
  TempDir dir("eval");
  const fs::path map = dir.path / "empty5.txt";
  std::ofstream(map) << "S....\n.....\n.....\n.....\n.....\n";
  ExperimentConfig c;
  c.mode = Mode::kEval;
  c.method = Method::kZigzag;
  c.maps = {map.string()};
  c.episode.eta = 1.0;
  c.eval_episodes = 2;
  c.out_dir = (dir.path / "out").string();
  const RunRecord r = run(c);
  CHECK(r.summary["mean_coverage_pct"].get<double>() == 100.0);
  CHECK(r.summary["mean_overlap_pct"].get<double>() == 0.0);
  const auto rows = read_csv(dir.path / "out" / "metrics.csv");
  CHECK(rows.size() == 3);
  CHECK(rows[0][0] == "seed");
  CHECK(fs::exists(dir.path / "out" / "summary.json"));
}

TEST_CASE("training runs are byte-identical and summaries match their rows") {
  TempDir dir("train");
  ExperimentConfig c = tiny_train(dir.path / "a");
  const RunRecord ra = run(c);
  c.out_dir = (dir.path / "b").string();
  c.jobs = 2;
  run(c);
  for (const char* f : {"metrics.csv", "checkpoints.csv", "plotdata/learning_curves.csv"}) {
    CAPTURE(f);
    const std::string a = slurp(dir.path / "a" / f);
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(dir.path / "b" / f));
  }
  CHECK(fs::exists(dir.path / "a" / "params_seed0.bin"));

  // Recompute the per-seed final-10% means from metrics.csv.
  const auto rows = read_csv(dir.path / "a" / "metrics.csv");
  std::map<std::string, std::vector<std::vector<double>>> by_seed;
  for (size_t i = 1; i < rows.size(); ++i) {
    std::vector<double> v;
    for (size_t k = 2; k < 6; ++k) v.push_back(std::stod(rows[i][k]));
    by_seed[rows[i][0]].push_back(v);
  }
  const json summary = json::parse(slurp(dir.path / "a" / "summary.json"));
  REQUIRE(summary["seeds"].size() == 2);
  for (const json& s : summary["seeds"]) {
    const auto& rs = by_seed[std::to_string(s["seed"].get<std::uint64_t>())];
    REQUIRE(rs.size() == 8);
    // ceil(10% of 8) = 1 episode.
    CHECK(s["coverage_pct"].get<double>() == doctest::Approx(rs.back()[1]).epsilon(1e-9));
    CHECK(s["overlap_pct"].get<double>() == doctest::Approx(rs.back()[2]).epsilon(1e-9));
    CHECK(s["return"].get<double>() == doctest::Approx(rs.back()[3]).epsilon(1e-9));
  }
  CHECK(ra.runs.size() == 2);
  CHECK(ra.runs[0].checkpoints.size() == 2);
}

TEST_CASE("checkpoint ranking") {
  const Milestone m;
  const Checkpoint low{1, 85.0, 5.0, 10.0};
  const Checkpoint high{2, 92.0, 40.0, 10.0};
  const Checkpoint lean{3, 90.0, 20.0, 10.0};
  CHECK(better_checkpoint(high, low, m));
  CHECK_FALSE(better_checkpoint(low, high, m));
  CHECK(better_checkpoint(lean, high, m));
  CHECK(better_checkpoint(Checkpoint{4, 88.0, 50.0, 1.0}, low, m));
}

TEST_CASE("training keeps the best checkpoint network") {
  TempDir dir("best");
  ExperimentConfig c = tiny_train(dir.path);
  c.seeds = {0};
  const RunRecord r = run(c);
  const SeedRun& s = r.runs[0];
  REQUIRE(s.best_checkpoint);
  REQUIRE(s.best_params);
  for (const Checkpoint& cp : s.checkpoints) {
    CHECK_FALSE(better_checkpoint(cp, *s.best_checkpoint, c.milestone));
  }
  CHECK(fs::exists(dir.path / "params_best_seed0.bin"));
}

TEST_CASE("tail mean uses the final tenth of the episodes") {
  std::vector<MetricsRow> rows(25);
  for (size_t i = 0; i < rows.size(); ++i) rows[i].ret = static_cast<double>(i);
  // ceil(2.5) = 3 rows: 22, 23, 24.
  CHECK(tail_mean(rows, &MetricsRow::ret) == doctest::Approx(23.0));
}

TEST_CASE("bench writes one row per method and fixture") {
  TempDir dir("bench");
  ExperimentConfig c;
  c.mode = Mode::kBench;
  c.maps = {testing::fixture_path("maze15_a.txt"), testing::fixture_path("maze15_b.txt"),
            testing::fixture_path("maze17.txt")};
  c.methods = {Method::kZigzag, Method::kBaStar};
  c.eval_episodes = 2;
  c.out_dir = dir.path.string();
  const RunRecord r = run(c);
  CHECK(r.bench.size() == 6);
  std::set<std::pair<std::string, std::string>> keys;
  for (const BenchRow& b : r.bench) keys.insert({b.map, method_name(b.method)});
  CHECK(keys.size() == 6);
  CHECK(read_csv(dir.path / "bench.csv").size() == 7);
  CHECK(fs::exists(dir.path / "plotdata" / "bench.csv"));
}

TEST_CASE("noise study") {
  ExperimentConfig c;
  c.seeds = {0, 1, 2};
  c.eval_episodes = 5;
  c.episode.step_cap = 2000;
  const GridMap m = testing::fixture("maze15_a.txt");
  const std::vector<BenchRow> rows =
      noise_study(c, "maze15_a", m, {0.0, 0.05, 0.1}, {Method::kBaStar});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].overlap_pct <= rows[1].overlap_pct);
  CHECK(rows[1].overlap_pct <= rows[2].overlap_pct);

  // The noiseless row agrees with evaluation mode on the same seeds.
  double overlap = 0.0;
  for (std::uint64_t s : c.seeds) {
    overlap += evaluate_method(c, m, Method::kBaStar, nullptr, c.eval_episodes, s).overlap_pct;
  }
  CHECK(rows[0].overlap_pct == doctest::Approx(overlap / 3.0).epsilon(1e-12));
}

TEST_CASE("sweep over a small grid") {
  TempDir dir("sweep");
  ExperimentConfig c = tiny_train(dir.path);
  c.mode = Mode::kSweep;
  c.seeds = {0};
  c.agent.episodes = 5;
  c.checkpoint.every = 0;
  c.sweep = {json{{"agent", {{"batch_size", 4}}}}};
  RunRecord r = run(c);
  REQUIRE(r.sweep.size() == 1);
  CHECK(std::isfinite(r.sweep[0].converged_reward));

  c.sweep = {json{{"agent", {{"batch_size", 4}}}}, json{{"agent", {{"batch_size", 8}}}}};
  r = run(c);
  CHECK(r.sweep.size() == 2);
  CHECK(read_csv(dir.path / "sweep.csv").size() == 3);
  CHECK(fs::exists(dir.path / "metrics_combo1.csv"));

  c.sweep = {json{{"agent", {{"batchsize", 4}}}}};
  CHECK_THROWS_AS(run(c), ConfigError);
}

TEST_CASE("contraction mode") {
  TempDir dir("contraction");
  ExperimentConfig c;
  c.mode = Mode::kContraction;
  c.contraction.mdps = 3;
  c.contraction.iters = 2000;
  c.out_dir = dir.path.string();
  const RunRecord r = run(c);
  REQUIRE(r.contraction.size() == 3);
  for (const ContractionRow& row : r.contraction) {
    CHECK(row.envelope_held);
    CHECK(row.max_ratio <= row.beta_min + 1e-12);
  }
  CHECK(r.summary["zero_entry_stalled"].get<bool>());
  CHECK(read_csv(dir.path / "plotdata" / "contraction_rate.csv").size() == 2002);
}

TEST_CASE("runs write only inside their output directory") {
  TempDir dir("sandbox");
  const fs::path out = dir.path / "out";
  ExperimentConfig c = tiny_train(out);
  c.seeds = {0};
  run(c);
  std::vector<fs::path> outside;
  for (const auto& e : fs::directory_iterator(dir.path)) {
    if (e.path() != out) outside.push_back(e.path());
  }
  CHECK(outside.empty());
}

TEST_CASE("eval of a trained network reads its parameter file") {
  TempDir dir("params");
  ExperimentConfig c = tiny_train(dir.path / "train");
  c.seeds = {0};
  run(c);
  ExperimentConfig e = c;
  e.mode = Mode::kEval;
  e.params_file = (dir.path / "train" / "params_seed0.bin").string();
  e.eval_episodes = 2;
  e.out_dir = (dir.path / "eval").string();
  const RunRecord r = run(e);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].rows.size() == 2);
}

}  // namespace
}  // namespace covrl
