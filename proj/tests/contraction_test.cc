#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "covrl/contraction.h"
#include "covrl/errors.h"

namespace covrl {
namespace {

// Two states, two actions, gamma 0.5.
TabularMDP hand_mdp() {
  TabularMDP m;
  m.num_states = 2;
  m.num_actions = 2;
  m.gamma = 0.5;
  m.transition = {1.0, 0.0,  0.5, 0.5,    // s = 0
                  0.0, 1.0,  0.25, 0.75};  // s = 1
  m.reward.resize(2, 2);
  m.reward << 1.0, 0.0, 0.0, 2.0;
  return m;
}

QTable hand_q() {
  QTable q(2, 2);
  q << 1.0, 3.0, 2.0, -1.0;
  return q;
}

TEST_CASE("Bellman operator on a hand MDP") {
  const QTable t = bellman_opt(hand_mdp(), hand_q());
  // V = (3, 2).
  CHECK(t(0, 0) == doctest::Approx(2.5));
  CHECK(t(0, 1) == doctest::Approx(1.25));
  CHECK(t(1, 0) == doctest::Approx(1.0));
  CHECK(t(1, 1) == doctest::Approx(3.125));
}

TEST_CASE("Bellman operator with zero discount returns the reward") {
  TabularMDP m = random_mdp(4, 3, 0.0, 1);
  const QTable q = QTable::Random(4, 3);
  CHECK(bellman_opt(m, q) == m.reward);
}

TEST_CASE("Bellman operator rejects a mismatched table") {
  CHECK_THROWS_AS(bellman_opt(hand_mdp(), QTable::Zero(3, 2)), ShapeError);
}

TEST_CASE("random MDPs are valid and seeded") {
  const TabularMDP a = random_mdp(5, 2, 0.9, 7);
  const TabularMDP b = random_mdp(5, 2, 0.9, 7);
  CHECK_NOTHROW(a.validate());
  CHECK(a.transition == b.transition);
  CHECK(a.reward == b.reward);
  CHECK(a.reward.minCoeff() >= 0.0);
  CHECK(a.reward.maxCoeff() <= 1.0);
  CHECK_FALSE(random_mdp(5, 2, 0.9, 8).transition == a.transition);
}

TEST_CASE("MDP validation catches bad rows") {
  TabularMDP m = hand_mdp();
  m.transition[1] = 0.1;
  CHECK_THROWS_AS(m.validate(), InvalidArgument);
  m = hand_mdp();
  m.transition.pop_back();
  CHECK_THROWS_AS(m.validate(), ShapeError);
}

TEST_CASE("optimal Q") {
  SUBCASE("zero reward gives zero") {
    TabularMDP m = random_mdp(3, 2, 0.9, 2);
    m.reward.setZero();
    CHECK(max_norm(q_star(m)) == 0.0);
  }
  SUBCASE("single state with unit reward sums the geometric series") {
    TabularMDP m;
    m.num_states = 1;
    m.num_actions = 1;
    m.gamma = 0.9;
    m.transition = {1.0};
    m.reward = QTable::Constant(1, 1, 1.0);
    CHECK(std::abs(q_star(m)(0, 0) - 10.0) < 1e-8);
  }
  SUBCASE("fixed point on random MDPs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const TabularMDP m = random_mdp(5, 2, 0.9, seed);
      const QTable qs = q_star(m);
      CHECK(max_norm(bellman_opt(m, qs) - qs) < 1e-10);
    }
  }
}

TEST_CASE("sampled operator") {
  const TabularMDP m = hand_mdp();
  const SamplingDist u = uniform_dist(2, 2);
  SUBCASE("uniform over four pairs with unit step") {
    const QTable got = apply_U(hand_q(), m, u, 1.0);
    QTable want(2, 2);
    want << 1.0 + 0.25 * 1.5, 3.0 + 0.25 * (1.25 - 3.0), 2.0 + 0.25 * (1.0 - 2.0),
        -1.0 + 0.25 * (3.125 + 1.0);
    CHECK(max_norm(got - want) < 1e-15);
  }
  SUBCASE("zero step is the identity") {
    CHECK(apply_U(hand_q(), m, u, 0.0) == hand_q());
  }
  SUBCASE("Q* is a fixed point for any valid distribution and step") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const TabularMDP r = random_mdp(5, 2, 0.9, seed);
      const QTable qs = q_star(r);
      const SamplingDist d = skewed_dist(5, 2, 1.0 + 10.0 * seed, seed);
      const double lr = 1.0 / d.max();
      CHECK(max_norm(apply_U(qs, r, d, lr) - qs) < 1e-12);
    }
  }
  SUBCASE("too large a step is rejected") {
    CHECK_THROWS_AS(apply_U(hand_q(), m, u, 4.5), StepTooLarge);
    CHECK_NOTHROW(apply_U(hand_q(), m, u, 4.0));
  }
}

TEST_CASE("sampling distributions") {
  const SamplingDist d = skewed_dist(5, 2, 50.0, 3);
  CHECK_NOTHROW(d.validate());
  CHECK(d.max() / d.min() == doctest::Approx(50.0));
  CHECK(skewed_dist(5, 2, 50.0, 3).rho == d.rho);
  SamplingDist bad = d;
  bad.rho(0, 0) += 0.1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_NOTHROW(uniform_dist(3, 4).validate());
}

TEST_CASE("beta formula") {
  CHECK(beta(1.0, 0.3, 0.2) == 1.0);
  CHECK(beta(0.9, 0.1, 0.5) == doctest::Approx(0.995));
  double prev = 1.0;
  for (double r = 0.1; r <= 1.0; r += 0.1) {
    const double b = beta(0.9, 0.5, r);
    CHECK(b < prev);
    prev = b;
  }
}

TEST_CASE("one application contracts by at most the guaranteed factor") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMDP m = random_mdp(5, 2, 0.9, seed);
    const SamplingDist d = skewed_dist(5, 2, 20.0, seed + 100);
    const double lr = 1.0 / d.max();
    const ContractionReport r = contraction_check(m, d, lr, 1000, seed);
    CHECK(r.max_ratio <= r.beta_min + 1e-12);
    CHECK(r.max_ratio > 0.0);
    CHECK(r.beta_max <= r.beta_min);
  }
}

TEST_CASE("zero discount limit") {
  TabularMDP m = random_mdp(4, 2, 0.0, 4);
  const QTable qs = q_star(m);
  QTable q = QTable::Constant(4, 2, 5.0);
  SUBCASE("uniform sampling lands on Q* in one step") {
    const SamplingDist u = uniform_dist(4, 2);
    CHECK(max_norm(apply_U(q, m, u, 1.0 / u.max()) - qs) < 1e-12);
  }
  SUBCASE("skewed sampling shrinks by at most 1 - rho_min / rho_max") {
    const SamplingDist d = skewed_dist(4, 2, 8.0, 4);
    const double ratio =
        max_norm(apply_U(q, m, d, 1.0 / d.max()) - qs) / max_norm(q - qs);
    CHECK(ratio <= 1.0 - d.min() / d.max() + 1e-12);
  }
}

TEST_CASE("a zero sampling probability stalls that entry") {
  const TabularMDP m = random_mdp(5, 2, 0.9, 11);
  const QTable qs = q_star(m);
  SamplingDist d = skewed_dist(5, 2, 10.0, 11);
  d.rho(2, 1) = 0.0;
  d.rho /= d.rho.sum();
  const double lr = 1.0 / d.max();
  QTable q = qs;
  q(2, 1) += 0.7;
  const QTable next = apply_U(q, m, d, lr);
  CHECK(max_norm(next - qs) / max_norm(q - qs) == doctest::Approx(1.0));
  CHECK_THROWS_AS(contraction_check(m, d, lr, 10, 0), InvalidArgument);
  // Iterating from zero never moves the unsampled entry.
  QTable z = QTable::Zero(5, 2);
  for (int t = 0; t < 2000; ++t) z = apply_U(z, m, d, lr);
  CHECK(z(2, 1) == 0.0);
  CHECK(max_norm(z - qs) >= std::abs(qs(2, 1)));
}

TEST_CASE("iterating a fixed distribution stays under the envelope") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TabularMDP m = random_mdp(5, 2, 0.9, seed);
    const QTable qs = q_star(m);
    const SamplingDist d = skewed_dist(5, 2, 1.0 + 5.0 * seed, seed);
    const double lr = 0.5 / d.max();
    QTable q = QTable::Zero(5, 2);
    const double e0 = max_norm(q - qs);
    const std::vector<double> env = envelope(e0, beta(m.gamma, lr, d.min()), 300);
    for (int t = 1; t <= 300; ++t) {
      q = apply_U(q, m, d, lr);
      CHECK(max_norm(q - qs) <= env[t] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("rate experiment") {
  const TabularMDP m = random_mdp(5, 2, 0.9, 21);
  Schedule uni;
  Schedule pri;
  pri.kind = ScheduleKind::kPrioritized;
  const std::vector<double> eu = rate_experiment(m, uni, 5000, 21);
  const std::vector<double> ep = rate_experiment(m, pri, 5000, 21);
  REQUIRE(eu.size() == 5001);
  CHECK(eu.front() == doctest::Approx(max_norm(q_star(m))));
  CHECK(eu.back() < 1e-3 * eu.front());
  CHECK(ep.back() < 1e-3 * ep.front());
  const int tu = iterations_to(eu, 1e-2);
  const int tp = iterations_to(ep, 1e-2);
  CHECK(tp > 0);
  CHECK(tp < tu);
  CHECK(rate_experiment(m, pri, 200, 21) ==
        std::vector<double>(ep.begin(), ep.begin() + 201));
}

TEST_CASE("uniform schedule with equal probabilities meets the envelope") {
  const TabularMDP m = random_mdp(5, 2, 0.9, 3);
  Schedule flat;
  flat.skew_ratio = 1.0;
  const RateTable t = rate_table(m, flat, Schedule{ScheduleKind::kPrioritized}, 400, 3);
  CHECK(t.envelope_min == t.envelope_max);
  for (size_t i = 0; i < t.error_uniform.size(); ++i) {
    CHECK(t.error_uniform[i] <= t.envelope_min[i] * (1.0 + 1e-12));
  }
}

TEST_CASE("iterations_to and envelope helpers") {
  CHECK(iterations_to({4.0, 2.0, 0.5, 0.01}, 0.1) == 3);
  CHECK(iterations_to({4.0, 2.0, 0.5, 0.01}, 0.2) == 2);
  CHECK(iterations_to({4.0, 2.0}, 0.1) == -1);
  const std::vector<double> e = envelope(2.0, 0.5, 3);
  CHECK(e == std::vector<double>{2.0, 1.0, 0.5, 0.25});
}

TEST_CASE("rate table CSV layout") {
  const TabularMDP m = random_mdp(3, 2, 0.9, 1);
  const RateTable t =
      rate_table(m, Schedule{}, Schedule{ScheduleKind::kPrioritized}, 5, 1);
  std::ostringstream os;
  write_csv(os, t);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "iteration,error_uniform,error_prioritized,envelope_min,envelope_max");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 6);
}

}  // namespace
}  // namespace covrl
