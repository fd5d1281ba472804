#include "scnn/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace scnn {

MeanFieldConfig MeanFieldConfig::with_defaults(std::size_t classes,
                                               std::size_t iterations,
                                               std::size_t kernel_size) {
  MeanFieldConfig cfg;
  cfg.iterations = iterations;
  cfg.kernel_size = kernel_size;
  cfg.compatibility.assign(classes * classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) cfg.compatibility[c * classes + c] = 1.0;

  const std::size_t s = kernel_size;
  const double sigma = static_cast<double>(s) / 4.0;
  const double centre = static_cast<double>(s / 2);
  std::vector<double> bump(s * s);
  double total = 0.0;
  for (std::size_t dy = 0; dy < s; ++dy)
    for (std::size_t dx = 0; dx < s; ++dx) {
      const double ry = dy - centre, rx = dx - centre;
      bump[dy * s + dx] = std::exp(-(rx * rx + ry * ry) / (2.0 * sigma * sigma));
      total += bump[dy * s + dx];
    }
  for (double& v : bump) v /= total;
  cfg.message_kernel.clear();
  for (std::size_t c = 0; c < classes; ++c)
    cfg.message_kernel.insert(cfg.message_kernel.end(), bump.begin(), bump.end());
  return cfg;
}

void MeanFieldConfig::validate(std::size_t classes) const {
  if (iterations == 0) throw ConfigError("mean-field iterations must be >= 1");
  if (kernel_size == 0 || kernel_size % 2 == 0)
    throw ConfigError("message kernel size must be odd, got " +
                      std::to_string(kernel_size));
  if (compatibility.size() != classes * classes)
    throw ShapeError("compatibility matrix must be " + std::to_string(classes) + "x" +
                     std::to_string(classes));
  if (message_kernel.size() != classes * kernel_size * kernel_size)
    throw ShapeError("message kernel must be " + std::to_string(classes) + "x" +
                     std::to_string(kernel_size) + "x" + std::to_string(kernel_size));
}

Tensor3 softmax_channels(const Tensor3& logits) {
  Tensor3 out = Tensor3::zeros(logits.channels(), logits.rows(), logits.cols());
  const std::size_t C = logits.channels(), N = logits.plane();
  const double* in = logits.data().data();
  double* o = out.data().data();
  for (std::size_t px = 0; px < N; ++px) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) hi = std::max(hi, in[c * N + px]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      o[c * N + px] = std::exp(in[c * N + px] - hi);
      sum += o[c * N + px];
    }
    for (std::size_t c = 0; c < C; ++c) o[c * N + px] /= sum;
  }
  return out;
}

Tensor3 mf_iterate(const Tensor3& unary, const MeanFieldConfig& cfg,
                   MeanFieldCounter* counter) {
  const std::size_t C = unary.channels(), H = unary.rows(), W = unary.cols();
  cfg.validate(C);
  const std::size_t s = cfg.kernel_size;
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(s / 2);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);

  Tensor3 state = unary;
  Tensor3 message = Tensor3::zeros(C, H, W);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Tensor3 q = softmax_channels(state);
    std::fill(message.data().begin(), message.data().end(), 0.0);

    // Each tap (dy, dx) shifts the whole plane; the inner loop is a
    // contiguous row segment clipped to the image.
    for (std::size_t c = 0; c < C; ++c) {
      const double* kc = cfg.message_kernel.data() + c * s * s;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, h - dy);
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const double kv = kc[(dy + r) * static_cast<std::ptrdiff_t>(s) + (dx + r)];
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
          if (y0 >= y1 || x0 >= x1) continue;
          if (counter && c == 0)
            counter->messages += static_cast<std::uint64_t>((y1 - y0) * (x1 - x0));
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            double* dst = &message(c, static_cast<std::size_t>(y), 0);
            const double* src =
                q.data().data() + q.offset(c, static_cast<std::size_t>(y + dy), 0) + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] += kv * src[x];
          }
        }
      }
    }

    const std::size_t N = H * W;
    for (std::size_t i = 0; i < C; ++i) {
      double* out = state.channel(i).data();
      const double* un = unary.channel(i).data();
      std::copy(un, un + N, out);
      for (std::size_t m = 0; m < C; ++m) {
        const double cv = cfg.compatibility[i * C + m];
        const double* msg = message.channel(m).data();
        for (std::size_t px = 0; px < N; ++px) out[px] += cv * msg[px];
      }
    }
  }
  return state;
}

std::uint64_t count_messages_dense(std::uint64_t rows, std::uint64_t cols,
                                   std::uint64_t iterations) {
  if (rows == 0 || cols == 0 || iterations == 0)
    throw ConfigError("message count arguments must be positive");
  const std::uint64_t px = rows * cols;
  return iterations * px * px;
}

std::uint64_t count_messages_scnn(std::uint64_t rows, std::uint64_t cols,
                                  std::uint64_t width, std::uint64_t directions) {
  if (rows == 0 || cols == 0 || width == 0 || directions == 0)
    throw ConfigError("message count arguments must be positive");
  if (width % 2 == 0) throw ConfigError("SCNN width must be odd");
  return directions * cols * rows * width;
}

}  // namespace scnn
