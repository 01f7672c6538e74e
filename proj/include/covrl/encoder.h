#pragma once

#include <vector>

#include <Eigen/Dense>

#include "covrl/env.h"

namespace covrl {

inline constexpr int kChannelCovered = 0;
inline constexpr int kChannelObstacle = 1;
inline constexpr int kChannelRobot = 2;
inline constexpr int kStateChannels = 3;

// H x W x 3 observation tensor, stored height-major then width then channel.
struct StateTensor {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  StateTensor() = default;
  StateTensor(int h, int w)
      : height(h), width(w),
        data(static_cast<size_t>(h) * w * kStateChannels, 0.0) {}

  double& at(int r, int c, int ch) {
    return data[(static_cast<size_t>(r) * width + c) * kStateChannels + ch];
  }
  double at(int r, int c, int ch) const {
    return data[(static_cast<size_t>(r) * width + c) * kStateChannels + ch];
  }
  bool operator==(const StateTensor&) const = default;
};

enum class EncoderMode { kKnownArea, kUnknownArea };

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kKnownArea;
  int n = 15;  // output side length in unknown-area mode, >= 3
};

StateTensor encode_known(const Observation& obs);
StateTensor encode_unknown(const Observation& obs, int n);
StateTensor encode(const Observation& obs, const EncoderConfig& cfg);

// Spatial size of the tensors `encode` yields for a map of the given size.
std::pair<int, int> encoded_shape(const EncoderConfig& cfg, int map_height,
                                  int map_width);

// Cubic convolution resize (Keys kernel, a = -0.5) with corner-aligned
// sampling. Samples past the border are linearly extrapolated from the two
// outermost rows/columns, so constants and linear ramps are reproduced
// exactly. Equal sizes return the input unchanged.
Eigen::MatrixXd bicubic_resize(const Eigen::MatrixXd& m, int out_h, int out_w);

double cubic_kernel(double x);

}  // namespace covrl
