#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scnn/tensor.hpp"

namespace scnn {

enum class Direction { Down, Up, Right, Left };
enum class Scheme { Sequential, Parallel };

// Nonlinearity is always ReLU.
struct PropagationConfig {
  Direction direction = Direction::Down;
  Scheme scheme = Scheme::Sequential;
};

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Scheme s) noexcept;
char direction_letter(Direction d) noexcept;
// Accepts "down"/"d", "up"/"u", "right"/"r", "left"/"l" (any case).
Direction parse_direction(std::string_view s);
// Accepts "seq"/"sequential", "par"/"parallel".
Scheme parse_scheme(std::string_view s);

/// Slice-to-slice weights for one propagation direction.
///
/// Element (m, i, n) connects channel m of the previous slice at window tap
/// n to channel i of the current slice. Tap n reads position p + n - w/2, so
/// the width must be odd for the window to be centred.
class ScnnKernel {
 public:
  ScnnKernel() = default;
  ScnnKernel(std::size_t channels, std::size_t width);

  static ScnnKernel from_tensor(const Tensor3& t);
  Tensor3 to_tensor(Precision p = Precision::Float64) const;

  // Uniform in [-b, b] with b = 1 / sqrt(C * w).
  static ScnnKernel random(std::size_t channels, std::size_t width,
                           std::mt19937_64& rng, double scale = 1.0);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t radius() const noexcept { return width_ / 2; }
  std::size_t size() const noexcept { return weights_.size(); }

  double& operator()(std::size_t m, std::size_t i, std::size_t n) noexcept {
    return weights_[(m * channels_ + i) * width_ + n];
  }
  double operator()(std::size_t m, std::size_t i, std::size_t n) const noexcept {
    return weights_[(m * channels_ + i) * width_ + n];
  }

  std::span<double> data() noexcept { return weights_; }
  std::span<const double> data() const noexcept { return weights_; }

  friend bool operator==(const ScnnKernel&, const ScnnKernel&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t width_ = 0;
  std::vector<double> weights_;
};

void save_kernel(const ScnnKernel& k, const std::filesystem::path& path,
                 Precision p = Precision::Float64);
ScnnKernel load_kernel(const std::filesystem::path& path);

// Counts one message per (destination element, window tap). The first slice
// in propagation order reads an all-zero boundary slice, so every slice
// contributes positions * w taps.
struct MessageCounter {
  std::uint64_t messages = 0;
};

Tensor3 scnn_forward(const Tensor3& x, const ScnnKernel& k,
                     const PropagationConfig& cfg,
                     MessageCounter* counter = nullptr);

struct ScnnGradients {
  Tensor3 grad_x;
  ScnnKernel grad_k;
};

// Exact reverse-mode gradient of <grad_out, scnn_forward(x, k, cfg)>.
// ReLU has derivative 0 at exactly 0.
ScnnGradients scnn_backward(const Tensor3& x, const ScnnKernel& k,
                            const PropagationConfig& cfg, const Tensor3& grad_out);

struct ScnnLayer {
  PropagationConfig config;
  ScnnKernel kernel;
};

/// Directional passes applied in list order, each with its own kernel.
struct ScnnStack {
  std::vector<ScnnLayer> layers;

  std::size_t parameter_count() const noexcept;
};

// Builds a stack from a direction string such as "DURL" with freshly drawn
// kernels (or zero kernels when rng is null).
ScnnStack make_stack(std::string_view order, std::size_t channels,
                     std::size_t width, Scheme scheme, std::mt19937_64* rng,
                     double init_scale = 1.0);

Tensor3 scnn_stack_forward(const Tensor3& x, const ScnnStack& s,
                           MessageCounter* counter = nullptr);

struct StackGradients {
  Tensor3 grad_x;
  std::vector<ScnnKernel> grad_k;  // one per layer
};

StackGradients scnn_stack_backward(const Tensor3& x, const ScnnStack& s,
                                   const Tensor3& grad_out);

struct GradcheckReport {
  double max_rel_err = 0.0;
  double max_rel_err_x = 0.0;
  double max_rel_err_k = 0.0;
  std::size_t checked = 0;
  int draws = 1;
  bool pass = false;
};

inline constexpr double kGradcheckTolerance = 1e-5;
inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckFloor = 1e-8;

/// Central-difference check of scnn_backward on random x, K and upstream
/// gradient drawn from `seed`. Draws whose ReLU pre-activations come within
/// `kink_margin` of zero are redrawn so the finite difference never straddles
/// a kink.
GradcheckReport gradcheck(std::size_t channels, std::size_t rows, std::size_t cols,
                          std::size_t width, const PropagationConfig& cfg,
                          std::uint64_t seed, double kink_margin = 1e-3);

}  // namespace scnn
