#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace covrl {

// States by actions.
using QTable = Eigen::MatrixXd;

// Finite MDP with transition probabilities P(s' | s, a) stored at
// transition[(s * num_actions + a) * num_states + s'].
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> transition;
  QTable reward;
  double gamma = 0.9;

  double prob(int s, int a, int next) const {
    return transition[(static_cast<size_t>(s) * num_actions + a) * num_states + next];
  }
  // Throws InvalidArgument unless every row sums to 1 within 1e-12, entries
  // are nonnegative, rewards are finite and gamma lies in [0, 1].
  void validate() const;
};

// Dirichlet(1) transition rows and rewards uniform in [0, 1].
TabularMDP random_mdp(int num_states, int num_actions, double gamma,
                      std::uint64_t seed);

// Sampling probabilities over (state, action) pairs, same shape as a QTable.
struct SamplingDist {
  QTable rho;

  double max() const { return rho.maxCoeff(); }
  double min() const { return rho.minCoeff(); }
  // Throws InvalidArgument unless entries are nonnegative and sum to 1.
  void validate() const;
};

SamplingDist uniform_dist(int num_states, int num_actions);
// Geometric weights over a seeded random ordering of the pairs, with
// max / min equal to `ratio`.
SamplingDist skewed_dist(int num_states, int num_actions, double ratio,
                         std::uint64_t seed);

QTable bellman_opt(const TabularMDP& mdp, const QTable& q);

// Value iteration until successive iterates differ by less than
// tol * (1 - gamma) / (2 * gamma) in max norm.
QTable q_star(const TabularMDP& mdp, double tol = 1e-12);

// Q + lr * rho .* (T*Q - Q). Throws StepTooLarge when lr * rho_max > 1.
QTable apply_U(const QTable& q, const TabularMDP& mdp, const SamplingDist& d,
               double lr);

// 1 - (1 - gamma) * lr * rho.
double beta(double gamma, double lr, double rho);

inline double max_norm(const QTable& q) { return q.cwiseAbs().maxCoeff(); }

struct ContractionReport {
  double max_ratio = 0.0;  // largest ||UQ - Q*|| / ||Q - Q*|| over trials
  double beta_min = 1.0;   // guaranteed factor, from the smallest rho
  double beta_max = 1.0;   // factor written with the largest rho
};

// Draws `trials` random tables around Q* and applies U once to each.
ContractionReport contraction_check(const TabularMDP& mdp, const SamplingDist& d,
                                    double lr, int trials, std::uint64_t seed);

enum class ScheduleKind { kUniform, kPrioritized };

struct Schedule {
  ScheduleKind kind = ScheduleKind::kUniform;
  double alpha_per = 0.6;
  double epsilon = 1e-6;
  double skew_ratio = 100.0;  // max / min of the fixed visitation law
  double lr_scale = 0.5;      // learning rate is lr_scale / rho_max
};

// Error ||Q_t - Q*|| for t = 0..iters, starting from Q_0 = 0. The uniform
// schedule samples from a fixed skewed visitation law; the prioritized one
// resamples each iteration proportional to (|T*Q_t - Q_t| + epsilon)^alpha_per.
std::vector<double> rate_experiment(const TabularMDP& mdp, const Schedule& s,
                                    int iters, std::uint64_t seed);

// First t with errors[t] <= fraction * errors[0], or -1.
int iterations_to(const std::vector<double>& errors, double fraction);

// e0 * beta^t for t = 0..iters.
std::vector<double> envelope(double e0, double beta, int iters);

struct RateTable {
  std::vector<double> error_uniform;
  std::vector<double> error_prioritized;
  std::vector<double> envelope_min;
  std::vector<double> envelope_max;
};

// Both schedules on one MDP plus the two envelopes of the uniform run.
RateTable rate_table(const TabularMDP& mdp, const Schedule& uniform,
                     const Schedule& prioritized, int iters, std::uint64_t seed);

// iteration,error_uniform,error_prioritized,envelope_min,envelope_max
void write_csv(std::ostream& os, const RateTable& t);

}  // namespace covrl
