#pragma once

#include <cstdint>
#include <vector>

#include "scnn/tensor.hpp"

namespace scnn {

/// Settings for the learned-kernel mean-field baseline.
///
/// message_kernel is C_cls x s x s (one spatial filter per class channel),
/// compatibility is C_cls x C_cls applied as a 1x1 transform without bias.
struct MeanFieldConfig {
  std::size_t iterations = 10;
  std::size_t kernel_size = 21;
  std::vector<double> compatibility;   // row-major [out][in]
  std::vector<double> message_kernel;  // [class][dy][dx]

  // Gaussian bump with sigma = s/4 normalised to unit sum in every channel,
  // identity compatibility.
  static MeanFieldConfig with_defaults(std::size_t classes, std::size_t iterations = 10,
                                       std::size_t kernel_size = 21);
  void validate(std::size_t classes) const;
};

// Per-pixel softmax over channels, stabilised by subtracting the channel max.
Tensor3 softmax_channels(const Tensor3& logits);

// Counts every (source pixel, destination pixel) pair whose weight is
// evaluated inside the image.
struct MeanFieldCounter {
  std::uint64_t messages = 0;
};

/// Runs `iterations` rounds of softmax, channel-wise s x s message passing,
/// compatibility transform and unary addition. Returns the final potentials
/// (before the last softmax).
Tensor3 mf_iterate(const Tensor3& unary, const MeanFieldConfig& cfg,
                   MeanFieldCounter* counter = nullptr);

std::uint64_t count_messages_dense(std::uint64_t rows, std::uint64_t cols,
                                   std::uint64_t iterations);
std::uint64_t count_messages_scnn(std::uint64_t rows, std::uint64_t cols,
                                  std::uint64_t width, std::uint64_t directions);

}  // namespace scnn
