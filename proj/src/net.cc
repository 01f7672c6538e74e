#include "covrl/net.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "covrl/errors.h"

namespace covrl {

namespace {

constexpr int kKernel = 3;
constexpr int kKernelArea = kKernel * kKernel;

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstRowVec = Eigen::Map<const Eigen::RowVectorXd>;

ConstMap weight_of(const ParamVector& v, const LayerSlot& s) {
  return ConstMap(v.data() + s.weight_offset, s.rows, s.cols);
}
ConstRowVec bias_of(const ParamVector& v, const LayerSlot& s) {
  return ConstRowVec(v.data() + s.bias_offset, s.cols);
}
MutMap weight_of(ParamVector& v, const LayerSlot& s) {
  return MutMap(v.data() + s.weight_offset, s.rows, s.cols);
}
Eigen::Map<Eigen::RowVectorXd> bias_of(ParamVector& v,
                                       const LayerSlot& s) {
  return Eigen::Map<Eigen::RowVectorXd>(v.data() + s.bias_offset, s.cols);
}

// "Same"-padded 3x3 patches: row (b, r, c), column (kr, kc, channel).
void im2col(const double* x, int batch, int h, int w, int ch, RowMatrix& col) {
  col.resize(static_cast<Eigen::Index>(batch) * h * w, kKernelArea * ch);
  const size_t tap = sizeof(double) * ch;
  for (int b = 0; b < batch; ++b) {
    const double* img = x + static_cast<size_t>(b) * h * w * ch;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double* dst = col.data() +
                      (static_cast<size_t>(b) * h * w + r * w + c) *
                          kKernelArea * ch;
        for (int kr = 0; kr < kKernel; ++kr) {
          const int sr = r + kr - 1;
          for (int kc = 0; kc < kKernel; ++kc) {
            const int sc = c + kc - 1;
            double* out = dst + (kr * kKernel + kc) * ch;
            if (sr < 0 || sr >= h || sc < 0 || sc >= w) {
              std::memset(out, 0, tap);
            } else {
              std::memcpy(out, img + (static_cast<size_t>(sr) * w + sc) * ch, tap);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the image grid.
void col2im(const RowMatrix& col, int batch, int h, int w, int ch,
            RowMatrix& img) {
  img.setZero(static_cast<Eigen::Index>(batch) * h * w, ch);
  for (int b = 0; b < batch; ++b) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double* src = col.data() +
                            (static_cast<size_t>(b) * h * w + r * w + c) *
                                kKernelArea * ch;
        for (int kr = 0; kr < kKernel; ++kr) {
          const int sr = r + kr - 1;
          if (sr < 0 || sr >= h) continue;
          for (int kc = 0; kc < kKernel; ++kc) {
            const int sc = c + kc - 1;
            if (sc < 0 || sc >= w) continue;
            double* dst =
                img.data() + (static_cast<size_t>(b) * h * w + sr * w + sc) * ch;
            const double* s = src + (kr * kKernel + kc) * ch;
            for (int k = 0; k < ch; ++k) dst[k] += s[k];
          }
        }
      }
    }
  }
}

template <typename In>
void leaky(const In& z, double slope, RowMatrix& a) {
  a = (z.array() > 0.0).select(z, slope * z);
}

// dL/dz from dL/da for a = leaky(z), written over `da`.
template <typename Z>
void leaky_back(const Z& z, RowMatrix& da, double slope) {
  da = (z.array() > 0.0).select(da, slope * da);
}

template <typename In>
void affine(const In& x, ConstMap w, ConstRowVec b, RowMatrix& y) {
  y.noalias() = x * w;
  y.rowwise() += b;
}

// Activations kept for the backward pass. Instances are reused across calls
// so the large patch matrices are not reallocated every batch.
struct ForwardCache {
  int batch = 0;
  RowMatrix col1, z1, a1, col2, z2, a2;
  std::vector<RowMatrix> fc_z, fc_a;
  RowMatrix adv, value;
  RowMatrix q;
};

struct BackwardScratch {
  RowMatrix dq, dadv, dx, dz, dcol2, da1;
};

ForwardCache& forward_scratch() {
  thread_local ForwardCache cache;
  return cache;
}

ForwardCache& backward_cache() {
  thread_local ForwardCache cache;
  return cache;
}

BackwardScratch& backward_scratch() {
  thread_local BackwardScratch scratch;
  return scratch;
}

void check_input(const NetworkSpec& spec, const RowMatrix& inputs) {
  const Eigen::Index expected =
      static_cast<Eigen::Index>(spec.height) * spec.width * spec.in_channels;
  if (inputs.cols() != expected) {
    throw ShapeError("network input has " + std::to_string(inputs.cols()) +
                     " features, expected " + std::to_string(expected));
  }
  if (inputs.rows() < 1) throw ShapeError("empty input batch");
}

ConstMap flat_conv_output(const NetworkSpec& s, const ForwardCache& c) {
  return ConstMap(c.a2.data(), c.batch,
                  static_cast<Eigen::Index>(s.height) * s.width * s.conv2_filters);
}

void run_forward(const NetworkParams& p, const RowMatrix& inputs,
                 ForwardCache& c) {
  const NetworkSpec& s = p.spec;
  const ParamLayout& l = p.layout;
  check_input(s, inputs);
  c.batch = static_cast<int>(inputs.rows());
  const int h = s.height, w = s.width;

  im2col(inputs.data(), c.batch, h, w, s.in_channels, c.col1);
  affine(c.col1, weight_of(p.values, l.conv1), bias_of(p.values, l.conv1), c.z1);
  leaky(c.z1, s.leaky_slope, c.a1);
  im2col(c.a1.data(), c.batch, h, w, s.conv1_filters, c.col2);
  affine(c.col2, weight_of(p.values, l.conv2), bias_of(p.values, l.conv2), c.z2);
  leaky(c.z2, s.leaky_slope, c.a2);

  c.fc_z.resize(l.fc.size());
  c.fc_a.resize(l.fc.size());
  for (size_t i = 0; i < l.fc.size(); ++i) {
    if (i == 0) {
      affine(flat_conv_output(s, c), weight_of(p.values, l.fc[i]),
             bias_of(p.values, l.fc[i]), c.fc_z[i]);
    } else {
      affine(c.fc_a[i - 1], weight_of(p.values, l.fc[i]),
             bias_of(p.values, l.fc[i]), c.fc_z[i]);
    }
    leaky(c.fc_z[i], s.leaky_slope, c.fc_a[i]);
  }
  auto head = [&](const LayerSlot& slot, RowMatrix& out) {
    if (l.fc.empty()) {
      affine(flat_conv_output(s, c), weight_of(p.values, slot),
             bias_of(p.values, slot), out);
    } else {
      affine(c.fc_a.back(), weight_of(p.values, slot), bias_of(p.values, slot),
             out);
    }
  };
  if (s.head == HeadType::kPlain) {
    head(l.out, c.q);
  } else {
    head(l.out, c.adv);
    head(l.value, c.value);
    const Eigen::VectorXd mean_adv = c.adv.rowwise().mean();
    c.q = c.adv;
    c.q.colwise() -= mean_adv;
    c.q.colwise() += c.value.col(0);
  }
}

}  // namespace

ParamLayout make_layout(const NetworkSpec& spec) {
  if (spec.height < 1 || spec.width < 1 || spec.in_channels < 1 ||
      spec.conv1_filters < 1 || spec.conv2_filters < 1 ||
      spec.num_actions < 1) {
    throw ShapeError("network dimensions must be positive");
  }
  for (int u : spec.fc_units) {
    if (u < 1) throw ShapeError("fully-connected widths must be positive");
  }
  ParamLayout layout;
  size_t offset = 0;
  auto slot = [&](int rows, int cols) {
    LayerSlot s{offset, rows, cols, 0};
    offset += static_cast<size_t>(rows) * cols;
    s.bias_offset = offset;
    offset += static_cast<size_t>(cols);
    return s;
  };
  layout.conv1 = slot(kKernelArea * spec.in_channels, spec.conv1_filters);
  layout.conv2 = slot(kKernelArea * spec.conv1_filters, spec.conv2_filters);
  int fan_in = spec.height * spec.width * spec.conv2_filters;
  for (int u : spec.fc_units) {
    layout.fc.push_back(slot(fan_in, u));
    fan_in = u;
  }
  layout.out = slot(fan_in, spec.num_actions);
  if (spec.head == HeadType::kDueling) layout.value = slot(fan_in, 1);
  layout.total = offset;
  return layout;
}

bool NetworkParams::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  for (size_t i = 0; i < adam_m.size(); ++i) {
    if (!std::isfinite(adam_m[i]) || !std::isfinite(adam_v[i])) return false;
  }
  return true;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams p;
  p.spec = spec;
  p.layout = make_layout(spec);
  p.values.assign(p.layout.total, 0.0);
  p.adam_m.assign(p.layout.total, 0.0);
  p.adam_v.assign(p.layout.total, 0.0);

  std::mt19937_64 rng(seed);
  auto fill = [&](const LayerSlot& s) {
    const double bound = std::sqrt(6.0 / s.rows);
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = weight_of(p.values, s);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  };
  fill(p.layout.conv1);
  fill(p.layout.conv2);
  for (const LayerSlot& fc : p.layout.fc) fill(fc);
  fill(p.layout.out);
  if (spec.head == HeadType::kDueling) fill(p.layout.value);
  return p;
}

RowMatrix pack_batch(const std::vector<const StateTensor*>& states) {
  if (states.empty()) throw ShapeError("empty batch");
  const Eigen::Index cols = static_cast<Eigen::Index>(states.front()->data.size());
  RowMatrix m(static_cast<Eigen::Index>(states.size()), cols);
  for (size_t i = 0; i < states.size(); ++i) {
    if (static_cast<Eigen::Index>(states[i]->data.size()) != cols) {
      throw ShapeError("batch tensors differ in shape");
    }
    std::memcpy(m.row(static_cast<Eigen::Index>(i)).data(),
                states[i]->data.data(), sizeof(double) * cols);
  }
  return m;
}

RowMatrix forward_batch(const NetworkParams& params, const RowMatrix& inputs) {
  ForwardCache& c = forward_scratch();
  run_forward(params, inputs, c);
  return c.q;
}

std::vector<double> forward(const NetworkParams& params, const StateTensor& x) {
  if (x.height != params.spec.height || x.width != params.spec.width) {
    throw ShapeError("state tensor is " + std::to_string(x.height) + "x" +
                     std::to_string(x.width) + ", network expects " +
                     std::to_string(params.spec.height) + "x" +
                     std::to_string(params.spec.width));
  }
  RowMatrix in = ConstMap(x.data.data(), 1,
                          static_cast<Eigen::Index>(x.data.size()));
  RowMatrix q = forward_batch(params, in);
  return std::vector<double>(q.data(), q.data() + q.size());
}

HuberValue huber(double residual) {
  const double a = std::abs(residual);
  if (a <= kHuberKappa) return {0.5 * residual * residual, residual};
  return {kHuberKappa * (a - 0.5 * kHuberKappa),
          residual > 0.0 ? kHuberKappa : -kHuberKappa};
}

Gradients backward(const NetworkParams& p, const TrainBatch& batch) {
  Gradients g;
  backward(p, batch, g);
  return g;
}

void backward(const NetworkParams& p, const TrainBatch& batch, Gradients& g) {
  const NetworkSpec& s = p.spec;
  const ParamLayout& l = p.layout;
  const Eigen::Index n = batch.inputs.rows();
  if (n < 1) throw ShapeError("backward needs a nonempty batch");
  if (static_cast<Eigen::Index>(batch.actions.size()) != n ||
      static_cast<Eigen::Index>(batch.targets.size()) != n ||
      static_cast<Eigen::Index>(batch.weights.size()) != n) {
    throw ShapeError("batch actions/targets/weights must match batch size");
  }
  ForwardCache& c = backward_cache();
  run_forward(p, batch.inputs, c);
  BackwardScratch& t = backward_scratch();

  g.grad.assign(l.total, 0.0);
  g.residuals.resize(static_cast<size_t>(n));
  g.loss = 0.0;
  t.dq.setZero(n, s.num_actions);
  for (Eigen::Index b = 0; b < n; ++b) {
    const int a = batch.actions[b];
    if (a < 0 || a >= s.num_actions) throw ShapeError("action out of range");
    const double r = c.q(b, a) - batch.targets[b];
    const HuberValue hv = huber(r);
    g.residuals[b] = r;
    g.loss += batch.weights[b] * hv.loss;
    t.dq(b, a) = batch.weights[b] * hv.dloss / static_cast<double>(n);
  }
  g.loss /= static_cast<double>(n);

  // Gradient w.r.t. the input of layer `slot` given the output gradient.
  auto dense_back = [&](const auto& in, const LayerSlot& slot,
                        const RowMatrix& dout) {
    weight_of(g.grad, slot).noalias() += in.transpose() * dout;
    bias_of(g.grad, slot) += dout.colwise().sum();
  };
  auto with_last = [&](auto&& fn) {
    if (l.fc.empty()) {
      fn(flat_conv_output(s, c));
    } else {
      fn(c.fc_a.back());
    }
  };

  if (s.head == HeadType::kPlain) {
    with_last([&](const auto& last) { dense_back(last, l.out, t.dq); });
    t.dx.noalias() = t.dq * weight_of(p.values, l.out).transpose();
  } else {
    const Eigen::VectorXd dvalue = t.dq.rowwise().sum();
    t.dadv = t.dq;
    t.dadv.colwise() -= dvalue / static_cast<double>(s.num_actions);
    const RowMatrix dvalue_m = dvalue;
    with_last([&](const auto& last) {
      dense_back(last, l.out, t.dadv);
      dense_back(last, l.value, dvalue_m);
    });
    t.dx.noalias() = t.dadv * weight_of(p.values, l.out).transpose();
    t.dx.noalias() += dvalue_m * weight_of(p.values, l.value).transpose();
  }

  for (int i = static_cast<int>(l.fc.size()) - 1; i >= 0; --i) {
    leaky_back(c.fc_z[i], t.dx, s.leaky_slope);
    if (i == 0) {
      dense_back(flat_conv_output(s, c), l.fc[i], t.dx);
    } else {
      dense_back(c.fc_a[i - 1], l.fc[i], t.dx);
    }
    t.dz.noalias() = t.dx * weight_of(p.values, l.fc[i]).transpose();
    t.dx.swap(t.dz);
  }

  // dx is B x (H*W*F2); the conv activations are (B*H*W) x F2 in the same
  // memory order.
  t.dz = ConstMap(t.dx.data(), c.a2.rows(), c.a2.cols());
  leaky_back(c.z2, t.dz, s.leaky_slope);
  dense_back(c.col2, l.conv2, t.dz);
  t.dcol2.noalias() = t.dz * weight_of(p.values, l.conv2).transpose();
  col2im(t.dcol2, static_cast<int>(n), s.height, s.width, s.conv1_filters,
         t.da1);
  leaky_back(c.z1, t.da1, s.leaky_slope);
  dense_back(c.col1, l.conv1, t.da1);
}

void adam_step(NetworkParams& p, const ParamVector& grad,
               const AdamConfig& cfg) {
  if (grad.size() != p.values.size()) {
    throw ShapeError("gradient size does not match parameters");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw InvalidArgument("learning rate must be positive");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient entry");
  }
  ++p.adam_step;
  const double t = static_cast<double>(p.adam_step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  using Arr = Eigen::Map<Eigen::ArrayXd>;
  const auto n = static_cast<Eigen::Index>(grad.size());
  const Eigen::Map<const Eigen::ArrayXd> g(grad.data(), n);
  Arr m(p.adam_m.data(), n), v(p.adam_v.data(), n), w(p.values.data(), n);
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
  w -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
}

void copy_weights(const NetworkParams& src, NetworkParams& dst) {
  if (!(src.spec == dst.spec) || src.values.size() != dst.values.size()) {
    throw ShapeError("copy_weights between networks of different shape");
  }
  dst.values = src.values;
}

// Checkpoint layout (native endianness): magic, version, spec fields,
// then values, adam_m, adam_v as raw doubles and the Adam step counter.
namespace {

constexpr char kMagic[8] = {'C', 'O', 'V', 'R', 'L', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const NetworkParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  const NetworkSpec& s = p.spec;
  for (int v : {s.height, s.width, s.in_channels, s.conv1_filters,
                s.conv2_filters, s.num_actions,
                static_cast<int>(s.head), static_cast<int>(s.fc_units.size())}) {
    put<std::int32_t>(out, v);
  }
  for (int u : s.fc_units) put<std::int32_t>(out, u);
  put(out, s.leaky_slope);
  put<std::uint64_t>(out, p.values.size());
  for (const auto* arr : {&p.values, &p.adam_m, &p.adam_v}) {
    out.write(reinterpret_cast<const char*>(arr->data()),
              static_cast<std::streamsize>(arr->size() * sizeof(double)));
  }
  put<std::int64_t>(out, p.adam_step);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a network checkpoint: " + path);
  }
  if (get<std::uint32_t>(in) != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version");
  }
  NetworkSpec s;
  s.height = get<std::int32_t>(in);
  s.width = get<std::int32_t>(in);
  s.in_channels = get<std::int32_t>(in);
  s.conv1_filters = get<std::int32_t>(in);
  s.conv2_filters = get<std::int32_t>(in);
  s.num_actions = get<std::int32_t>(in);
  s.head = static_cast<HeadType>(get<std::int32_t>(in));
  const int n_fc = get<std::int32_t>(in);
  if (n_fc < 0 || n_fc > 64) throw IoError("corrupt checkpoint header");
  s.fc_units.clear();
  for (int i = 0; i < n_fc; ++i) s.fc_units.push_back(get<std::int32_t>(in));
  s.leaky_slope = get<double>(in);

  NetworkParams p;
  p.spec = s;
  p.layout = make_layout(s);
  const auto count = get<std::uint64_t>(in);
  if (count != p.layout.total) throw IoError("checkpoint size mismatch");
  for (auto* arr : {&p.values, &p.adam_m, &p.adam_v}) {
    arr->resize(count);
    in.read(reinterpret_cast<char*>(arr->data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint");
  }
  p.adam_step = get<std::int64_t>(in);
  return p;
}

}  // namespace covrl
