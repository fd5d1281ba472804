#pragma once

#include <cstdint>
#include <vector>

#include "scnn/lanepost.hpp"
#include "scnn/tensor.hpp"

namespace scnn {

struct SceneConfig {
  std::size_t rows = 96;
  std::size_t cols = 160;
  std::size_t lanes = 2;
  double occlusion_rate = 0.0;
  double stroke_width = 16.0;   // label stroke
  double marking_width = 3.0;   // painted marking visible in the image
  double noise_sigma = 0.05;
};

/// One rendered frame: grayscale image, per-pixel lane labels (0 is
/// background, 1..L are lanes ordered left to right), the lane centre lines
/// and the occluder footprint. Occluded pixels keep their labels.
struct SyntheticScene {
  Tensor3 image;                           // 1 x H x W
  std::vector<std::uint8_t> labels;        // H * W
  std::vector<std::uint8_t> occlusion;     // H * W, 1 under an occluder
  std::vector<bool> existence;             // L
  std::vector<std::vector<Point>> centres; // per lane, one point per row, top to bottom

  std::size_t rows() const noexcept { return image.rows(); }
  std::size_t cols() const noexcept { return image.cols(); }
  std::size_t lane_count() const noexcept { return existence.size(); }
  // Fraction of labelled lane pixels lying under an occluder.
  double occluded_lane_fraction() const;
  // Ground-truth curves sampled from the centre lines every `row_step` rows,
  // anchored at the bottom row and always including the top row.
  std::vector<LaneCurve> ground_truth(std::size_t row_step = 10) const;
};

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg);

// Seed for item `index` of stream `stream` derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

}  // namespace scnn
