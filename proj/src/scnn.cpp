#include "scnn/scnn.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace scnn {

namespace {

// How a direction walks the tensor: slices along one spatial axis, window
// positions along the other.
struct SliceGeometry {
  std::size_t slices;
  std::size_t positions;
  std::size_t slice_stride;
  std::size_t pos_stride;
  std::size_t channel_stride;
  bool reversed;

  std::size_t slice_at(std::size_t t) const noexcept {
    return reversed ? slices - 1 - t : t;
  }
  std::size_t index(std::size_t c, std::size_t s, std::size_t p) const noexcept {
    return c * channel_stride + s * slice_stride + p * pos_stride;
  }
};

SliceGeometry geometry(const Tensor3& x, Direction d) {
  const std::size_t h = x.rows(), w = x.cols(), plane = x.plane();
  switch (d) {
    case Direction::Down:
      return {h, w, w, 1, plane, false};
    case Direction::Up:
      return {h, w, w, 1, plane, true};
    case Direction::Right:
      return {w, h, 1, w, plane, false};
    case Direction::Left:
      return {w, h, 1, w, plane, true};
  }
  return {h, w, w, 1, plane, false};
}

void check_compatible(const Tensor3& x, const ScnnKernel& k) {
  if (k.width() % 2 == 0)
    throw ConfigError("kernel width must be odd, got " + std::to_string(k.width()));
  if (k.channels() != x.channels())
    throw ShapeError("kernel has " + std::to_string(k.channels()) +
                     " channels but input has " + std::to_string(x.channels()));
}

// Slice copy with `radius` zeros on each side of every channel row.
class PaddedSlice {
 public:
  PaddedSlice(std::size_t channels, std::size_t positions, std::size_t radius)
      : stride_(positions + 2 * radius),
        radius_(radius),
        positions_(positions),
        buf_(channels * stride_, 0.0) {}

  void load(const double* src, const SliceGeometry& g, std::size_t channels,
            std::size_t slice) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = buf_.data() + c * stride_ + radius_;
      const double* base = src + g.index(c, slice, 0);
      for (std::size_t p = 0; p < positions_; ++p) row[p] = base[p * g.pos_stride];
    }
  }

  // Pointer to tap 0 of position 0 in channel c.
  const double* tap0(std::size_t c) const noexcept { return buf_.data() + c * stride_; }
  double* tap0(std::size_t c) noexcept { return buf_.data() + c * stride_; }
  void clear() noexcept { std::fill(buf_.begin(), buf_.end(), 0.0); }

 private:
  std::size_t stride_;
  std::size_t radius_;
  std::size_t positions_;
  std::vector<double> buf_;
};

// Core recurrence. When `pre` is non-null it receives every ReLU
// pre-activation (slice 0 is left at zero).
Tensor3 propagate(const Tensor3& x, const ScnnKernel& k,
                  const PropagationConfig& cfg, MessageCounter* counter,
                  Tensor3* pre) {
  check_compatible(x, k);
  const SliceGeometry g = geometry(x, cfg.direction);
  const std::size_t C = x.channels(), P = g.positions, w = k.width();
  Tensor3 out = x;
  if (pre) *pre = Tensor3::zeros(x.channels(), x.rows(), x.cols());

  const double* src = cfg.scheme == Scheme::Sequential ? out.data().data()
                                                       : x.data().data();
  double* dst = out.data().data();
  PaddedSlice prev(C, P, k.radius());
  std::vector<double> acc(P);

  for (std::size_t t = 0; t < g.slices; ++t) {
    if (counter) counter->messages += static_cast<std::uint64_t>(P) * w;
    if (t == 0) continue;
    const std::size_t s = g.slice_at(t);
    prev.load(src, g, C, g.slice_at(t - 1));
    for (std::size_t i = 0; i < C; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t m = 0; m < C; ++m) {
        const double* in = prev.tap0(m);
        for (std::size_t n = 0; n < w; ++n) {
          const double kv = k(m, i, n);
          const double* tap = in + n;
          for (std::size_t p = 0; p < P; ++p) acc[p] += tap[p] * kv;
        }
      }
      double* row = dst + g.index(i, s, 0);
      for (std::size_t p = 0; p < P; ++p) {
        row[p * g.pos_stride] += std::max(acc[p], 0.0);
      }
      if (pre) {
        double* pr = pre->data().data() + g.index(i, s, 0);
        for (std::size_t p = 0; p < P; ++p) pr[p * g.pos_stride] = acc[p];
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::Down: return "down";
    case Direction::Up: return "up";
    case Direction::Right: return "right";
    case Direction::Left: return "left";
  }
  return "down";
}

std::string_view to_string(Scheme s) noexcept {
  return s == Scheme::Sequential ? "sequential" : "parallel";
}

char direction_letter(Direction d) noexcept {
  switch (d) {
    case Direction::Down: return 'D';
    case Direction::Up: return 'U';
    case Direction::Right: return 'R';
    case Direction::Left: return 'L';
  }
  return 'D';
}

Direction parse_direction(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "down" || v == "d") return Direction::Down;
  if (v == "up" || v == "u") return Direction::Up;
  if (v == "right" || v == "r") return Direction::Right;
  if (v == "left" || v == "l") return Direction::Left;
  throw ConfigError("unknown direction '" + std::string(s) + "'");
}

Scheme parse_scheme(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "seq" || v == "sequential") return Scheme::Sequential;
  if (v == "par" || v == "parallel") return Scheme::Parallel;
  throw ConfigError("unknown scheme '" + std::string(s) + "'");
}

ScnnKernel::ScnnKernel(std::size_t channels, std::size_t width)
    : channels_(channels), width_(width) {
  if (channels == 0 || width == 0)
    throw DimensionError("kernel dimensions must be positive");
  if (width % 2 == 0)
    throw ConfigError("kernel width must be odd, got " + std::to_string(width));
  weights_.assign(checked_volume(channels, channels, width), 0.0);
}

ScnnKernel ScnnKernel::from_tensor(const Tensor3& t) {
  if (t.channels() != t.rows())
    throw ShapeError("kernel tensor must be C x C x w");
  ScnnKernel k(t.channels(), t.cols());
  std::copy(t.data().begin(), t.data().end(), k.weights_.begin());
  return k;
}

Tensor3 ScnnKernel::to_tensor(Precision p) const {
  return Tensor3::from_data(channels_, channels_, width_, weights_, p);
}

ScnnKernel ScnnKernel::random(std::size_t channels, std::size_t width,
                              std::mt19937_64& rng, double scale) {
  ScnnKernel k(channels, width);
  const double b = scale / std::sqrt(static_cast<double>(channels * width));
  std::uniform_real_distribution<double> dist(-b, b);
  for (double& v : k.weights_) v = dist(rng);
  return k;
}

void save_kernel(const ScnnKernel& k, const std::filesystem::path& path, Precision p) {
  save(k.to_tensor(p), path, kKernelMagic);
}

ScnnKernel load_kernel(const std::filesystem::path& path) {
  return ScnnKernel::from_tensor(load(path, kKernelMagic));
}

Tensor3 scnn_forward(const Tensor3& x, const ScnnKernel& k,
                     const PropagationConfig& cfg, MessageCounter* counter) {
  return propagate(x, k, cfg, counter, nullptr);
}

ScnnGradients scnn_backward(const Tensor3& x, const ScnnKernel& k,
                            const PropagationConfig& cfg, const Tensor3& grad_out) {
  check_compatible(x, k);
  if (!grad_out.same_shape(x)) throw ShapeError("grad_out shape differs from input");

  Tensor3 pre;
  const Tensor3 out = propagate(x, k, cfg, nullptr, &pre);
  const SliceGeometry g = geometry(x, cfg.direction);
  const std::size_t C = x.channels(), P = g.positions, w = k.width(),
                    r = k.radius();
  const bool sequential = cfg.scheme == Scheme::Sequential;

  ScnnGradients result{grad_out, ScnnKernel(C, w)};
  // Sequential: `upstream` is dL/dX' and is finalised slice by slice in
  // reverse order. Parallel: slices only feed forward through X, so
  // grad_x starts as grad_out and collects the conv transposes directly.
  Tensor3 upstream = grad_out;
  Tensor3& collect = sequential ? upstream : result.grad_x;
  const double* conv_in = sequential ? out.data().data() : x.data().data();

  PaddedSlice in(C, P, r);
  PaddedSlice din(C, P, r);
  std::vector<double> gate(C * P);

  for (std::size_t t = g.slices; t-- > 1;) {
    const std::size_t s = g.slice_at(t), sp = g.slice_at(t - 1);
    const double* up = upstream.data().data();
    const double* pr = pre.data().data();
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t idx = g.index(i, s, p);
        gate[i * P + p] = pr[idx] > 0.0 ? up[idx] : 0.0;
      }

    in.load(conv_in, g, C, sp);
    din.clear();
    for (std::size_t m = 0; m < C; ++m) {
      const double* src = in.tap0(m);
      double* dsrc = din.tap0(m);
      for (std::size_t i = 0; i < C; ++i) {
        const double* ga = gate.data() + i * P;
        for (std::size_t n = 0; n < w; ++n) {
          const double kv = k(m, i, n);
          const double* tap = src + n;
          double* dtap = dsrc + n;
          double gk = 0.0;
          for (std::size_t p = 0; p < P; ++p) {
            gk += ga[p] * tap[p];
            dtap[p] += ga[p] * kv;
          }
          result.grad_k(m, i, n) += gk;
        }
      }
    }
    double* c = collect.data().data();
    for (std::size_t m = 0; m < C; ++m) {
      const double* d = din.tap0(m) + r;
      for (std::size_t p = 0; p < P; ++p) c[g.index(m, sp, p)] += d[p];
    }
  }
  if (sequential) result.grad_x = std::move(upstream);
  return result;
}

std::size_t ScnnStack::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kernel.size();
  return n;
}

ScnnStack make_stack(std::string_view order, std::size_t channels,
                     std::size_t width, Scheme scheme, std::mt19937_64* rng,
                     double init_scale) {
  if (order.empty()) throw ConfigError("stack order must name at least one direction");
  ScnnStack s;
  for (char c : order) {
    PropagationConfig cfg{parse_direction(std::string_view(&c, 1)), scheme};
    s.layers.push_back({cfg, rng ? ScnnKernel::random(channels, width, *rng, init_scale)
                                 : ScnnKernel(channels, width)});
  }
  return s;
}

Tensor3 scnn_stack_forward(const Tensor3& x, const ScnnStack& s,
                           MessageCounter* counter) {
  if (s.layers.empty()) throw ConfigError("empty SCNN stack");
  Tensor3 cur = x;
  for (const auto& l : s.layers) cur = scnn_forward(cur, l.kernel, l.config, counter);
  return cur;
}

StackGradients scnn_stack_backward(const Tensor3& x, const ScnnStack& s,
                                   const Tensor3& grad_out) {
  if (s.layers.empty()) throw ConfigError("empty SCNN stack");
  std::vector<Tensor3> inputs;
  inputs.reserve(s.layers.size());
  Tensor3 cur = x;
  for (const auto& l : s.layers) {
    inputs.push_back(cur);
    cur = scnn_forward(cur, l.kernel, l.config);
  }
  StackGradients g{grad_out, std::vector<ScnnKernel>(s.layers.size())};
  for (std::size_t li = s.layers.size(); li-- > 0;) {
    auto lg = scnn_backward(inputs[li], s.layers[li].kernel, s.layers[li].config, g.grad_x);
    g.grad_x = std::move(lg.grad_x);
    g.grad_k[li] = std::move(lg.grad_k);
  }
  return g;
}

namespace {

double min_abs_preactivation(const Tensor3& x, const ScnnKernel& k,
                             const PropagationConfig& cfg) {
  Tensor3 pre;
  propagate(x, k, cfg, nullptr, &pre);
  const SliceGeometry g = geometry(x, cfg.direction);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t < g.slices; ++t)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t p = 0; p < g.positions; ++p)
        lo = std::min(lo, std::abs(pre.data()[g.index(c, g.slice_at(t), p)]));
  return lo;
}

// <G, f(x+) - f(x-)> accumulated elementwise so unchanged outputs cancel
// exactly instead of contributing rounding noise.
double directional_difference(const Tensor3& plus, const Tensor3& minus,
                              const Tensor3& weight) {
  double acc = 0.0;
  for (std::size_t e = 0; e < plus.size(); ++e) {
    const double d = plus.data()[e] - minus.data()[e];
    if (d != 0.0) acc += weight.data()[e] * d;
  }
  return acc;
}

double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradcheckReport gradcheck(std::size_t channels, std::size_t rows, std::size_t cols,
                          std::size_t width, const PropagationConfig& cfg,
                          std::uint64_t seed, double kink_margin) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto draw = [&](std::size_t c, std::size_t h, std::size_t w) {
    Tensor3 t = Tensor3::zeros(c, h, w);
    for (double& v : t.data()) v = unit(rng);
    return t;
  };

  GradcheckReport report;
  Tensor3 x, grad_out;
  ScnnKernel k;
  constexpr int kMaxDraws = 200;
  for (report.draws = 1;; ++report.draws) {
    x = draw(channels, rows, cols);
    k = ScnnKernel::random(channels, width, rng);
    grad_out = draw(channels, rows, cols);
    if (min_abs_preactivation(x, k, cfg) >= kink_margin || report.draws == kMaxDraws)
      break;
  }

  const ScnnGradients analytic = scnn_backward(x, k, cfg, grad_out);
  const double h = kGradcheckStep;

  for (std::size_t e = 0; e < x.size(); ++e) {
    Tensor3 xp = x, xm = x;
    xp.data()[e] += h;
    xm.data()[e] -= h;
    const double numeric =
        directional_difference(scnn_forward(xp, k, cfg), scnn_forward(xm, k, cfg),
                               grad_out) / (2.0 * h);
    report.max_rel_err_x =
        std::max(report.max_rel_err_x, rel_err(analytic.grad_x.data()[e], numeric));
    ++report.checked;
  }
  for (std::size_t e = 0; e < k.size(); ++e) {
    ScnnKernel kp = k, km = k;
    kp.data()[e] += h;
    km.data()[e] -= h;
    const double numeric =
        directional_difference(scnn_forward(x, kp, cfg), scnn_forward(x, km, cfg),
                               grad_out) / (2.0 * h);
    report.max_rel_err_k =
        std::max(report.max_rel_err_k, rel_err(analytic.grad_k.data()[e], numeric));
    ++report.checked;
  }
  report.max_rel_err = std::max(report.max_rel_err_x, report.max_rel_err_k);
  report.pass = report.max_rel_err < kGradcheckTolerance;
  return report;
}

}  // namespace scnn
