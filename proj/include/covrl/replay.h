#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "covrl/env.h"

namespace covrl {

struct Transition {
  Observation state;
  int action = 0;
  double reward = 0.0;
  Observation next_state;
  bool done = false;
};

// Complete binary tree over `capacity` leaves holding both subtree sums and
// subtree maxima. Leaves past the stored range hold 0.
class SumTree {
 public:
  explicit SumTree(int capacity);

  int capacity() const { return capacity_; }
  void set(int leaf, double value);
  double get(int leaf) const { return sum_[base_ + leaf]; }
  double total() const { return sum_[1]; }
  double max() const { return max_[1]; }

  // Leaf whose cumulative range contains `prefix`, for prefix in [0, total).
  int find(double prefix) const;

  // Largest |node - (left + right)| over internal nodes and
  // |root - direct leaf sum|.
  double audit() const;

 private:
  int capacity_;
  int base_;
  std::vector<double> sum_;
  std::vector<double> max_;
};

struct ReplayConfig {
  int capacity = 50000;
  bool prioritized = true;
  double alpha = 0.6;
  double epsilon = 1e-6;  // priority floor added to |td error|
};

struct ReplaySample {
  std::vector<int> indices;
  std::vector<double> weights;  // importance-sampling weights, max 1
  std::vector<const Transition*> items;
};

// Cyclic replay memory. In prioritized mode slot i is drawn with
// probability p_i^alpha / sum_j p_j^alpha via stratified sum-tree descent;
// otherwise uniformly with unit weights.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg);

  const ReplayConfig& config() const { return cfg_; }
  int size() const { return size_; }
  int capacity() const { return cfg_.capacity; }

  // Stores with the largest priority currently held (1 when empty),
  // overwriting the oldest slot once full.
  void push(Transition t);
  ReplaySample sample(int k, double beta, std::mt19937_64& rng) const;
  // Sets p_i = |td_error_i| + epsilon for the given slots.
  void update_priorities(const std::vector<int>& indices,
                         const std::vector<double>& td_errors);

  const Transition& at(int index) const { return items_.at(index); }
  double priority(int index) const { return priorities_.at(index); }
  double probability(int index) const;
  double max_priority() const;
  const SumTree& tree() const { return tree_; }

 private:
  void set_priority(int index, double p);

  ReplayConfig cfg_;
  std::vector<Transition> items_;
  std::vector<double> priorities_;
  SumTree tree_;
  SumTree raw_;  // unexponentiated priorities, for the running maximum
  int next_ = 0;
  int size_ = 0;
};

}  // namespace covrl
