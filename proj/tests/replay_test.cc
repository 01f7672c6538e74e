#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "covrl/errors.h"
#include "covrl/replay.h"

namespace covrl {
namespace {

Transition tagged(int tag) {
  Transition t;
  t.action = tag;
  t.reward = tag;
  return t;
}

ReplayBuffer make_buffer(int capacity, double alpha = 0.6) {
  ReplayConfig cfg;
  cfg.capacity = capacity;
  cfg.alpha = alpha;
  return ReplayBuffer(cfg);
}

// Empirical frequency of each slot over `draws` samples taken in stratified
// batches of `k`.
std::vector<double> frequencies(const ReplayBuffer& buf, int draws, int k,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> freq(buf.size(), 0.0);
  for (int done = 0; done < draws; done += k) {
    for (int idx : buf.sample(k, 0.4, rng).indices) freq[idx] += 1.0;
  }
  for (double& f : freq) f /= draws;
  return freq;
}

TEST_CASE("first push gets priority 1 and later pushes the running max") {
  ReplayBuffer buf = make_buffer(8);
  CHECK(buf.max_priority() == 1.0);
  buf.push(tagged(0));
  CHECK(buf.priority(0) == 1.0);
  buf.push(tagged(1));
  buf.update_priorities({0, 1}, {4.0, -0.5});
  CHECK(buf.priority(0) == doctest::Approx(4.0 + 1e-6));
  CHECK(buf.priority(1) == doctest::Approx(0.5 + 1e-6));
  buf.push(tagged(2));
  CHECK(buf.priority(2) == buf.priority(0));
}

TEST_CASE("capacity overflow overwrites the oldest slot") {
  ReplayBuffer buf = make_buffer(4);
  for (int i = 0; i < 5; ++i) buf.push(tagged(i));
  CHECK(buf.size() == 4);
  CHECK(buf.at(0).action == 4);
  for (int i = 1; i < 4; ++i) CHECK(buf.at(i).action == i);
}

TEST_CASE("max priority tracks the stored items only") {
  ReplayBuffer buf = make_buffer(2);
  buf.push(tagged(0));
  buf.push(tagged(1));
  buf.update_priorities({0, 1}, {9.0, 2.0});
  buf.push(tagged(2));  // evicts slot 0 at priority ~9
  CHECK(buf.priority(0) == doctest::Approx(9.0 + 1e-6));
  buf.update_priorities({0}, {1.0});
  CHECK(buf.max_priority() == doctest::Approx(2.0 + 1e-6));
}

TEST_CASE("sum tree root matches direct summation after mixed operations") {
  ReplayBuffer buf = make_buffer(1000);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int op = 0; op < 10000; ++op) {
    if (buf.size() == 0 || rng() % 2 == 0) {
      buf.push(tagged(op));
    } else {
      std::vector<int> idx;
      std::vector<double> err;
      for (int j = 0; j < 4; ++j) {
        idx.push_back(static_cast<int>(rng() % buf.size()));
        err.push_back(u(rng));
      }
      buf.update_priorities(idx, err);
    }
  }
  double direct = 0.0;
  for (int i = 0; i < buf.size(); ++i) direct += std::pow(buf.priority(i), 0.6);
  CHECK(std::abs(buf.tree().total() - direct) < 1e-9);
  CHECK(buf.tree().audit() < 1e-9);
}

TEST_CASE("priorities 1 and 3 with alpha 1 sample as 1:3") {
  ReplayBuffer buf = make_buffer(2, 1.0);
  buf.push(tagged(0));
  buf.push(tagged(1));
  buf.update_priorities({0, 1}, {1.0 - 1e-6, 3.0 - 1e-6});
  std::mt19937_64 rng(11);
  double ones = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ones += buf.sample(1, 0.4, rng).indices[0];
  CHECK(std::abs(ones / draws - 0.75) < 0.01);
}

TEST_CASE("equal priorities sample uniformly with unit weights") {
  ReplayBuffer buf = make_buffer(16);
  for (int i = 0; i < 16; ++i) buf.push(tagged(i));
  std::mt19937_64 rng(1);
  ReplaySample s = buf.sample(8, 0.7, rng);
  for (double w : s.weights) CHECK(w == doctest::Approx(1.0));
  for (int i = 0; i < 16; ++i) CHECK(buf.probability(i) == doctest::Approx(1.0 / 16));
}

TEST_CASE("alpha 0 ignores priorities") {
  ReplayBuffer buf = make_buffer(4, 0.0);
  for (int i = 0; i < 4; ++i) buf.push(tagged(i));
  buf.update_priorities({0, 1, 2, 3}, {0.1, 10.0, 100.0, 5.0});
  for (int i = 0; i < 4; ++i) CHECK(buf.probability(i) == doctest::Approx(0.25));
}

TEST_CASE("sampling frequencies follow p^alpha for random priority sets") {
  std::mt19937_64 rng(2024);
  for (int size : {2, 3, 7, 16, 33, 64}) {
    ReplayBuffer buf = make_buffer(size);
    std::vector<int> idx(size);
    std::vector<double> err(size);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int i = 0; i < size; ++i) {
      buf.push(tagged(i));
      idx[i] = i;
      err[i] = u(rng);
    }
    buf.update_priorities(idx, err);
    double norm = 0.0;
    for (int i = 0; i < size; ++i) norm += std::pow(std::abs(err[i]) + 1e-6, 0.6);
    const int k = std::min(size, 32);
    const std::vector<double> freq = frequencies(buf, 100000 / k * k, k, size);
    double l1 = 0.0;
    for (int i = 0; i < size; ++i) {
      l1 += std::abs(freq[i] - std::pow(std::abs(err[i]) + 1e-6, 0.6) / norm);
    }
    CAPTURE(size);
    CHECK(l1 < 0.02);
  }
}

TEST_CASE("importance weights are (N P)^-beta over the batch maximum") {
  ReplayBuffer buf = make_buffer(3, 1.0);
  for (int i = 0; i < 3; ++i) buf.push(tagged(i));
  buf.update_priorities({0, 1, 2}, {1.0, 2.0, 5.0});
  std::mt19937_64 rng(3);
  const double beta = 0.5;
  ReplaySample s = buf.sample(3, beta, rng);
  double max_w = 0.0;
  std::vector<double> raw;
  for (int idx : s.indices) {
    raw.push_back(std::pow(3.0 * buf.probability(idx), -beta));
    max_w = std::max(max_w, raw.back());
  }
  for (size_t i = 0; i < raw.size(); ++i) {
    CHECK(s.weights[i] == doctest::Approx(raw[i] / max_w).epsilon(1e-12));
  }
}

TEST_CASE("every stored transition keeps positive sampling probability") {
  ReplayBuffer buf = make_buffer(5);
  for (int i = 0; i < 5; ++i) buf.push(tagged(i));
  buf.update_priorities({0, 1, 2, 3, 4}, {0.0, 0.0, 0.0, 0.0, 1e6});
  for (int i = 0; i < 5; ++i) CHECK(buf.probability(i) > 0.0);
}

TEST_CASE("uniform mode samples every slot and reports unit weights") {
  ReplayConfig cfg;
  cfg.capacity = 4;
  cfg.prioritized = false;
  ReplayBuffer buf(cfg);
  for (int i = 0; i < 4; ++i) buf.push(tagged(i));
  buf.update_priorities({0}, {100.0});
  std::mt19937_64 rng(8);
  std::vector<int> hits(4, 0);
  for (int i = 0; i < 40000; ++i) {
    ReplaySample s = buf.sample(1, 1.0, rng);
    CHECK(s.weights[0] == 1.0);
    ++hits[s.indices[0]];
  }
  for (int h : hits) CHECK(std::abs(h / 40000.0 - 0.25) < 0.01);
}

TEST_CASE("sampling more than stored throws") {
  ReplayBuffer buf = make_buffer(8);
  buf.push(tagged(0));
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(buf.sample(2, 0.4, rng), BufferTooSmall);
}

}  // namespace
}  // namespace covrl
