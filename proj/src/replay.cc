#include "covrl/replay.h"

#include <algorithm>
#include <cmath>

#include "covrl/errors.h"

namespace covrl {

SumTree::SumTree(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw InvalidArgument("sum tree capacity must be positive");
  base_ = 1;
  while (base_ < capacity) base_ *= 2;
  sum_.assign(2 * static_cast<size_t>(base_), 0.0);
  max_.assign(2 * static_cast<size_t>(base_), 0.0);
}

void SumTree::set(int leaf, double value) {
  if (leaf < 0 || leaf >= capacity_) throw InvalidArgument("leaf out of range");
  int node = base_ + leaf;
  sum_[node] = value;
  max_[node] = value;
  for (node /= 2; node >= 1; node /= 2) {
    sum_[node] = sum_[2 * node] + sum_[2 * node + 1];
    max_[node] = std::max(max_[2 * node], max_[2 * node + 1]);
  }
}

int SumTree::find(double prefix) const {
  int node = 1;
  while (node < base_) {
    const int left = 2 * node;
    if (prefix < sum_[left] || sum_[left + 1] <= 0.0) {
      node = left;
    } else {
      prefix -= sum_[left];
      node = left + 1;
    }
  }
  return node - base_;
}

double SumTree::audit() const {
  double worst = 0.0;
  for (int node = 1; node < base_; ++node) {
    worst = std::max(worst, std::abs(sum_[node] - (sum_[2 * node] + sum_[2 * node + 1])));
  }
  double direct = 0.0;
  for (int i = 0; i < base_; ++i) direct += sum_[base_ + i];
  return std::max(worst, std::abs(sum_[1] - direct));
}

ReplayBuffer::ReplayBuffer(ReplayConfig cfg)
    : cfg_(cfg), tree_(std::max(cfg.capacity, 1)), raw_(std::max(cfg.capacity, 1)) {
  if (cfg_.capacity < 1) throw InvalidArgument("replay capacity must be positive");
  if (!(cfg_.alpha >= 0.0)) throw InvalidArgument("priority exponent must be >= 0");
  if (!(cfg_.epsilon > 0.0)) throw InvalidArgument("priority floor must be > 0");
  items_.reserve(static_cast<size_t>(std::min(cfg_.capacity, 1 << 16)));
}

double ReplayBuffer::max_priority() const {
  return size_ == 0 ? 1.0 : raw_.max();
}

void ReplayBuffer::set_priority(int index, double p) {
  priorities_[index] = p;
  raw_.set(index, p);
  tree_.set(index, std::pow(p, cfg_.alpha));
}

void ReplayBuffer::push(Transition t) {
  const double p = max_priority();
  if (size_ < cfg_.capacity) {
    items_.push_back(std::move(t));
    priorities_.push_back(0.0);
    ++size_;
  } else {
    items_[next_] = std::move(t);
  }
  set_priority(next_, p);
  next_ = (next_ + 1) % cfg_.capacity;
}

double ReplayBuffer::probability(int index) const {
  if (index < 0 || index >= size_) throw InvalidArgument("replay index out of range");
  if (!cfg_.prioritized) return 1.0 / size_;
  return tree_.get(index) / tree_.total();
}

ReplaySample ReplayBuffer::sample(int k, double beta,
                                  std::mt19937_64& rng) const {
  if (k < 1) throw InvalidArgument("sample size must be positive");
  if (size_ < k) {
    throw BufferTooSmall("replay holds " + std::to_string(size_) +
                         " transitions, " + std::to_string(k) + " requested");
  }
  ReplaySample out;
  out.indices.resize(k);
  out.weights.assign(k, 1.0);
  out.items.resize(k);
  if (!cfg_.prioritized) {
    std::uniform_int_distribution<int> pick(0, size_ - 1);
    for (int i = 0; i < k; ++i) {
      out.indices[i] = pick(rng);
      out.items[i] = &items_[out.indices[i]];
    }
    return out;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double total = tree_.total();
  const double segment = total / k;
  double max_w = 0.0;
  for (int i = 0; i < k; ++i) {
    const double prefix = std::min((i + u(rng)) * segment,
                                   std::nextafter(total, 0.0));
    const int idx = std::min(tree_.find(prefix), size_ - 1);
    out.indices[i] = idx;
    out.items[i] = &items_[idx];
    const double prob = tree_.get(idx) / total;
    out.weights[i] = std::pow(size_ * prob, -beta);
    max_w = std::max(max_w, out.weights[i]);
  }
  for (double& w : out.weights) w /= max_w;
  return out;
}

void ReplayBuffer::update_priorities(const std::vector<int>& indices,
                                     const std::vector<double>& td_errors) {
  if (indices.size() != td_errors.size()) {
    throw InvalidArgument("indices and td errors differ in length");
  }
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= size_) throw InvalidArgument("replay index out of range");
    if (!std::isfinite(td_errors[i])) {
      throw InvalidArgument("non-finite td error");
    }
    set_priority(idx, std::abs(td_errors[i]) + cfg_.epsilon);
  }
}

}  // namespace covrl
