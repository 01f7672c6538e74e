#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covrl/encoder.h"

namespace covrl {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flat parameter storage with a fixed base alignment, so Eigen's vectorized
// kernels over per-layer views peel identically on every allocation and
// results are bit-reproducible.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

enum class HeadType { kPlain, kDueling };

// Two 3x3 stride-1 "same"-padded conv layers, fully-connected hidden layers,
// then either a plain |A|-wide linear head or a dueling value/advantage head.
// Every hidden layer uses leaky-ReLU; the output layer is linear.
struct NetworkSpec {
  int height = 15;
  int width = 15;
  int in_channels = kStateChannels;
  int conv1_filters = 16;
  int conv2_filters = 32;
  std::vector<int> fc_units = {64};
  int num_actions = 4;
  HeadType head = HeadType::kDueling;
  double leaky_slope = 0.01;

  bool operator==(const NetworkSpec&) const = default;
};

// Position of one weight matrix (rows = fan-in) and its bias inside the flat
// parameter vector.
struct LayerSlot {
  size_t weight_offset = 0;
  int rows = 0;
  int cols = 0;
  size_t bias_offset = 0;
};

struct ParamLayout {
  LayerSlot conv1;
  LayerSlot conv2;
  std::vector<LayerSlot> fc;
  LayerSlot out;     // plain head, or the advantage stream when dueling
  LayerSlot value;   // dueling only
  size_t total = 0;
};

ParamLayout make_layout(const NetworkSpec& spec);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct NetworkParams {
  NetworkSpec spec;
  ParamLayout layout;
  ParamVector values;
  ParamVector adam_m;
  ParamVector adam_v;
  std::int64_t adam_step = 0;

  bool all_finite() const;
};

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

// Packs tensors into a batch matrix, one flattened H*W*C row per tensor.
RowMatrix pack_batch(const std::vector<const StateTensor*>& states);

// Q-values, one row per batch row.
RowMatrix forward_batch(const NetworkParams& params, const RowMatrix& inputs);
std::vector<double> forward(const NetworkParams& params, const StateTensor& x);

struct HuberValue {
  double loss;
  double dloss;
};
inline constexpr double kHuberKappa = 1.0;
HuberValue huber(double residual);

struct TrainBatch {
  RowMatrix inputs;              // B x (H*W*C)
  std::vector<int> actions;      // taken action per row
  std::vector<double> targets;   // TD targets
  std::vector<double> weights;   // importance-sampling weights
};

struct Gradients {
  ParamVector grad;                // same layout as NetworkParams::values
  double loss = 0.0;               // weighted mean Huber loss
  std::vector<double> residuals;   // Q(x)[a] - target per row
};

// Gradient of mean_b w_b * Huber(Q(x_b)[a_b] - y_b) with respect to every
// parameter.
Gradients backward(const NetworkParams& params, const TrainBatch& batch);
// Same, reusing the storage already held by `out`.
void backward(const NetworkParams& params, const TrainBatch& batch,
              Gradients& out);

void adam_step(NetworkParams& params, const ParamVector& grad,
               const AdamConfig& cfg);

// Copies weights only; optimizer moments of `dst` are left alone.
void copy_weights(const NetworkParams& src, NetworkParams& dst);

void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace covrl
