#include "covrl/contraction.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "covrl/errors.h"

namespace covrl {

void TabularMDP::validate() const {
  if (num_states < 1 || num_actions < 1) {
    throw InvalidArgument("MDP needs at least one state and one action");
  }
  if (transition.size() !=
          static_cast<size_t>(num_states) * num_actions * num_states ||
      reward.rows() != num_states || reward.cols() != num_actions) {
    throw ShapeError("MDP tables do not match its dimensions");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw InvalidArgument("discount must lie in [0, 1]");
  }
  if (!reward.allFinite()) throw InvalidArgument("rewards must be finite");
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      double sum = 0.0;
      for (int n = 0; n < num_states; ++n) {
        const double p = prob(s, a, n);
        if (!(p >= 0.0)) throw InvalidArgument("negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw InvalidArgument("transition row does not sum to 1");
      }
    }
  }
}

TabularMDP random_mdp(int num_states, int num_actions, double gamma,
                      std::uint64_t seed) {
  if (num_states < 1 || num_actions < 1) {
    throw InvalidArgument("MDP needs at least one state and one action");
  }
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TabularMDP m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.gamma = gamma;
  m.transition.resize(static_cast<size_t>(num_states) * num_actions * num_states);
  for (size_t row = 0; row < m.transition.size(); row += num_states) {
    double sum = 0.0;
    for (int n = 0; n < num_states; ++n) sum += m.transition[row + n] = expo(rng);
    for (int n = 0; n < num_states; ++n) m.transition[row + n] /= sum;
  }
  m.reward.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) m.reward(s, a) = unit(rng);
  }
  return m;
}

void SamplingDist::validate() const {
  if (rho.size() == 0) throw InvalidArgument("empty sampling distribution");
  if (!(rho.minCoeff() >= 0.0)) {
    throw InvalidArgument("sampling probabilities must be nonnegative");
  }
  if (std::abs(rho.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("sampling probabilities must sum to 1");
  }
}

SamplingDist uniform_dist(int num_states, int num_actions) {
  return {QTable::Constant(num_states, num_actions,
                           1.0 / (static_cast<double>(num_states) * num_actions))};
}

SamplingDist skewed_dist(int num_states, int num_actions, double ratio,
                         std::uint64_t seed) {
  if (!(ratio >= 1.0)) throw InvalidArgument("skew ratio must be at least 1");
  const int n = num_states * num_actions;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  SamplingDist d{QTable(num_states, num_actions)};
  for (int k = 0; k < n; ++k) {
    const double e = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
    d.rho(order[k] / num_actions, order[k] % num_actions) = std::pow(ratio, -e);
  }
  d.rho /= d.rho.sum();
  return d;
}

QTable bellman_opt(const TabularMDP& mdp, const QTable& q) {
  if (q.rows() != mdp.num_states || q.cols() != mdp.num_actions) {
    throw ShapeError("Q table does not match the MDP");
  }
  const Eigen::VectorXd v = q.rowwise().maxCoeff();
  QTable out(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      double ev = 0.0;
      for (int n = 0; n < mdp.num_states; ++n) ev += mdp.prob(s, a, n) * v(n);
      out(s, a) = mdp.reward(s, a) + mdp.gamma * ev;
    }
  }
  return out;
}

QTable q_star(const TabularMDP& mdp, double tol) {
  if (!(mdp.gamma < 1.0)) throw InvalidArgument("value iteration needs gamma < 1");
  QTable q = QTable::Zero(mdp.num_states, mdp.num_actions);
  const double stop = mdp.gamma > 0.0
                          ? tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma)
                          : std::numeric_limits<double>::infinity();
  while (true) {
    QTable next = bellman_opt(mdp, q);
    const double delta = max_norm(next - q);
    q = std::move(next);
    if (delta < stop) return q;
  }
}

QTable apply_U(const QTable& q, const TabularMDP& mdp, const SamplingDist& d,
               double lr) {
  if (d.rho.rows() != q.rows() || d.rho.cols() != q.cols()) {
    throw ShapeError("sampling distribution does not match the Q table");
  }
  if (!(lr >= 0.0)) throw InvalidArgument("learning rate must be nonnegative");
  if (lr * d.max() > 1.0 + 1e-12) {
    throw StepTooLarge("learning rate times the largest sampling probability exceeds 1");
  }
  return q + lr * d.rho.cwiseProduct(bellman_opt(mdp, q) - q);
}

double beta(double gamma, double lr, double rho) {
  return 1.0 - (1.0 - gamma) * lr * rho;
}

ContractionReport contraction_check(const TabularMDP& mdp, const SamplingDist& d,
                                    double lr, int trials, std::uint64_t seed) {
  if (!(d.min() > 0.0)) {
    throw InvalidArgument("contraction check needs a strictly positive distribution");
  }
  const QTable qs = q_star(mdp);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(-3.0, 1.0);
  ContractionReport r;
  r.beta_min = beta(mdp.gamma, lr, d.min());
  r.beta_max = beta(mdp.gamma, lr, d.max());
  for (int t = 0; t < trials; ++t) {
    const double amp = std::pow(10.0, scale(rng));
    QTable q = qs;
    for (Eigen::Index i = 0; i < q.size(); ++i) q(i) += amp * unit(rng);
    const double before = max_norm(q - qs);
    if (before == 0.0) continue;
    const double after = max_norm(apply_U(q, mdp, d, lr) - qs);
    r.max_ratio = std::max(r.max_ratio, after / before);
  }
  return r;
}

namespace {

SamplingDist priority_dist(const QTable& residual, const Schedule& s) {
  SamplingDist d{(residual.cwiseAbs().array() + s.epsilon).pow(s.alpha_per).matrix()};
  d.rho /= d.rho.sum();
  return d;
}

}  // namespace

std::vector<double> rate_experiment(const TabularMDP& mdp, const Schedule& s,
                                    int iters, std::uint64_t seed) {
  if (iters < 0) throw InvalidArgument("iteration count must be nonnegative");
  mdp.validate();
  const QTable qs = q_star(mdp);
  const SamplingDist fixed =
      skewed_dist(mdp.num_states, mdp.num_actions, s.skew_ratio, seed);
  QTable q = QTable::Zero(mdp.num_states, mdp.num_actions);
  std::vector<double> err = {max_norm(q - qs)};
  err.reserve(static_cast<size_t>(iters) + 1);
  for (int t = 0; t < iters; ++t) {
    const QTable backup = bellman_opt(mdp, q);
    const SamplingDist d =
        s.kind == ScheduleKind::kUniform ? fixed : priority_dist(backup - q, s);
    const double lr = s.lr_scale / d.max();
    q += lr * d.rho.cwiseProduct(backup - q);
    err.push_back(max_norm(q - qs));
  }
  return err;
}

int iterations_to(const std::vector<double>& errors, double fraction) {
  if (errors.empty()) return -1;
  const double level = fraction * errors.front();
  for (size_t t = 0; t < errors.size(); ++t) {
    if (errors[t] <= level) return static_cast<int>(t);
  }
  return -1;
}

std::vector<double> envelope(double e0, double beta, int iters) {
  std::vector<double> out(static_cast<size_t>(iters) + 1);
  double f = 1.0;
  for (int t = 0; t <= iters; ++t) {
    out[t] = e0 * f;
    f *= beta;
  }
  return out;
}

RateTable rate_table(const TabularMDP& mdp, const Schedule& uniform,
                     const Schedule& prioritized, int iters, std::uint64_t seed) {
  RateTable t;
  t.error_uniform = rate_experiment(mdp, uniform, iters, seed);
  t.error_prioritized = rate_experiment(mdp, prioritized, iters, seed);
  const SamplingDist d =
      skewed_dist(mdp.num_states, mdp.num_actions, uniform.skew_ratio, seed);
  const double lr = uniform.lr_scale / d.max();
  const double e0 = t.error_uniform.front();
  t.envelope_min = envelope(e0, beta(mdp.gamma, lr, d.min()), iters);
  t.envelope_max = envelope(e0, beta(mdp.gamma, lr, d.max()), iters);
  return t;
}

void write_csv(std::ostream& os, const RateTable& t) {
  os << "iteration,error_uniform,error_prioritized,envelope_min,envelope_max\n";
  const auto prec = os.precision(17);
  for (size_t i = 0; i < t.error_uniform.size(); ++i) {
    os << i << ',' << t.error_uniform[i] << ',' << t.error_prioritized[i] << ','
       << t.envelope_min[i] << ',' << t.envelope_max[i] << '\n';
  }
  os.precision(prec);
}

}  // namespace covrl
