#include "covrl/encoder.h"

#include <algorithm>
#include <cmath>

#include "covrl/errors.h"

namespace covrl {

namespace {

constexpr double kCubicA = -0.5;

// Sample k of `f`, linearly extrapolated beyond either end.
double extended(const Eigen::VectorXd& f, long k) {
  const long n = f.size();
  if (k < 0) return f(0) + static_cast<double>(k) * (f(1) - f(0));
  if (k >= n) {
    return f(n - 1) + static_cast<double>(k - n + 1) * (f(n - 1) - f(n - 2));
  }
  return f(k);
}

double source_coord(int j, int in_size, int out_size) {
  if (out_size == 1) return 0.5 * (in_size - 1);
  return static_cast<double>(j) * (in_size - 1) / (out_size - 1);
}

Eigen::VectorXd resize_1d(const Eigen::VectorXd& f, int out_size) {
  const int in_size = static_cast<int>(f.size());
  if (in_size == out_size) return f;
  Eigen::VectorXd out(out_size);
  for (int j = 0; j < out_size; ++j) {
    const double x = source_coord(j, in_size, out_size);
    const long base = static_cast<long>(std::floor(x));
    const double t = x - static_cast<double>(base);
    double acc = 0.0;
    for (long k = -1; k <= 2; ++k) {
      acc += extended(f, base + k) * cubic_kernel(t - static_cast<double>(k));
    }
    out(j) = acc;
  }
  return out;
}

// Resizes only the axes whose size differs from the target, which lets the
// unknown-area encoder shrink one axis of a 1-wide strip.
Eigen::MatrixXd resize_axes(const Eigen::MatrixXd& m, int out_h, int out_w) {
  Eigen::MatrixXd rows_done(out_h, m.cols());
  if (out_h == m.rows()) {
    rows_done = m;
  } else {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rows_done.col(c) = resize_1d(m.col(c), out_h);
    }
  }
  if (out_w == m.cols()) return rows_done;
  Eigen::MatrixXd out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    out.row(r) = resize_1d(rows_done.row(r).transpose(), out_w).transpose();
  }
  return out;
}

int scaled_index(int i, int in_size, int out_size) {
  if (in_size == out_size) return i;
  if (in_size == 1) return 0;
  return static_cast<int>(std::lround(static_cast<double>(i) * (out_size - 1) /
                                      (in_size - 1)));
}

}  // namespace

double cubic_kernel(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((kCubicA + 2.0) * ax - (kCubicA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) {
    return ((kCubicA * ax - 5.0 * kCubicA) * ax + 8.0 * kCubicA) * ax -
           4.0 * kCubicA;
  }
  return 0.0;
}

Eigen::MatrixXd bicubic_resize(const Eigen::MatrixXd& m, int out_h,
                               int out_w) {
  if (m.rows() < 2 || m.cols() < 2) {
    throw DimensionError("bicubic_resize needs at least a 2x2 input");
  }
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("bicubic_resize output must be nonempty");
  }
  return resize_axes(m, out_h, out_w);
}

StateTensor encode_known(const Observation& obs) {
  StateTensor t(obs.height, obs.width);
  for (int r = 0; r < obs.height; ++r) {
    for (int c = 0; c < obs.width; ++c) {
      const size_t i = static_cast<size_t>(r) * obs.width + c;
      t.at(r, c, kChannelCovered) = obs.covered[i] ? 1.0 : 0.0;
      t.at(r, c, kChannelObstacle) =
          obs.belief[i] == Belief::kObstacle ? 1.0 : 0.0;
    }
  }
  t.at(obs.pose.cell.row, obs.pose.cell.col, kChannelRobot) = 1.0;
  return t;
}

StateTensor encode_unknown(const Observation& obs, int n) {
  if (n < 3) throw InvalidArgument("unknown-area side length must be >= 3");
  int r0 = obs.height, r1 = -1, c0 = obs.width, c1 = -1;
  for (int r = 0; r < obs.height; ++r) {
    for (int c = 0; c < obs.width; ++c) {
      const size_t i = static_cast<size_t>(r) * obs.width + c;
      if (obs.covered[i] || obs.belief[i] != Belief::kUnknown) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  // The robot's own cell is always covered, so the box is never empty.
  const int h = r1 - r0 + 1;
  const int w = c1 - c0 + 1;
  const int out_h = std::min(h, n);
  const int out_w = std::min(w, n);

  Eigen::MatrixXd covered(h, w), obstacle(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const size_t i = static_cast<size_t>(r + r0) * obs.width + (c + c0);
      covered(r, c) = obs.covered[i] ? 1.0 : 0.0;
      obstacle(r, c) = obs.belief[i] == Belief::kObstacle ? 1.0 : 0.0;
    }
  }
  if (out_h != h || out_w != w) {
    covered = resize_axes(covered, out_h, out_w).cwiseMax(0.0).cwiseMin(1.0);
    obstacle = resize_axes(obstacle, out_h, out_w).cwiseMax(0.0).cwiseMin(1.0);
  }

  StateTensor t(n, n);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      t.at(r, c, kChannelCovered) = covered(r, c);
      t.at(r, c, kChannelObstacle) = obstacle(r, c);
    }
  }
  const int rr = scaled_index(obs.pose.cell.row - r0, h, out_h);
  const int rc = scaled_index(obs.pose.cell.col - c0, w, out_w);
  t.at(rr, rc, kChannelRobot) = 1.0;
  return t;
}

StateTensor encode(const Observation& obs, const EncoderConfig& cfg) {
  return cfg.mode == EncoderMode::kKnownArea ? encode_known(obs)
                                             : encode_unknown(obs, cfg.n);
}

std::pair<int, int> encoded_shape(const EncoderConfig& cfg, int map_height,
                                  int map_width) {
  if (cfg.mode == EncoderMode::kKnownArea) return {map_height, map_width};
  return {cfg.n, cfg.n};
}

}  // namespace covrl
