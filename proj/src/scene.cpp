#include "scnn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "scnn/laneval.hpp"

namespace scnn {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over the packed triple
  std::uint64_t z = base * 0x9E3779B97F4A7C15ULL ^ (stream + 0x632BE59BD9B4E019ULL) *
                                                       0xD1B54A32D192ED03ULL ^
                    (index + 1) * 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SyntheticScene::occluded_lane_fraction() const {
  std::size_t lane = 0, covered = 0;
  for (std::size_t e = 0; e < labels.size(); ++e) {
    if (labels[e] == 0) continue;
    ++lane;
    covered += occlusion[e];
  }
  return lane == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(lane);
}

std::vector<LaneCurve> SyntheticScene::ground_truth(std::size_t row_step) const {
  std::vector<LaneCurve> out;
  for (std::size_t l = 0; l < centres.size(); ++l) {
    LaneCurve c;
    c.id = static_cast<int>(l + 1);
    if (existence[l] && centres[l].size() >= 2) {
      const auto& line = centres[l];
      std::vector<Point> pts;
      for (std::size_t back = 0; back < line.size(); back += row_step)
        pts.push_back(line[line.size() - 1 - back]);
      if (pts.back().y != line.front().y) pts.push_back(line.front());
      std::reverse(pts.begin(), pts.end());
      c = fit_spline(std::move(pts), c.id);
    }
    out.push_back(std::move(c));
  }
  return out;
}

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.rows < 64 || cfg.cols < 64)
    throw GenerationError("scene must be at least 64x64");
  if (cfg.occlusion_rate < 0.0 || cfg.occlusion_rate > 1.0)
    throw GenerationError("occlusion rate must lie in [0, 1]");
  if (cfg.lanes == 0) throw GenerationError("scene needs at least one lane");
  const double H = static_cast<double>(cfg.rows), W = static_cast<double>(cfg.cols);
  const double spacing = W / static_cast<double>(cfg.lanes);
  if (spacing < cfg.stroke_width + 8.0)
    throw GenerationError(std::to_string(cfg.lanes) + " lanes of stroke " +
                          std::to_string(cfg.stroke_width) + " do not fit in " +
                          std::to_string(cfg.cols) + " columns");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticScene scene;
  const std::size_t rows = cfg.rows, cols = cfg.cols, N = rows * cols;
  scene.image = Tensor3::zeros(1, rows, cols);
  scene.labels.assign(N, 0);
  scene.occlusion.assign(N, 0);
  scene.existence.assign(cfg.lanes, true);

  // Shared drift and curvature keep lanes near-parallel; the total lateral
  // excursion stays within a quarter of the lane spacing.
  const double reach = spacing / 4.0;
  const double slope = uniform(-0.5, 0.5) * reach / H;
  const double bend = uniform(-0.5, 0.5) * reach / (H * H / 4.0);
  for (std::size_t l = 0; l < cfg.lanes; ++l) {
    const double centre = spacing * (static_cast<double>(l) + 0.5) + uniform(-0.1, 0.1) * spacing;
    const double own = uniform(-0.2, 0.2) * reach / H;
    std::vector<Point> line;
    for (std::size_t j = 0; j < rows; ++j) {
      const double dy = static_cast<double>(j) - H / 2.0;
      line.push_back({centre + (slope + own) * dy + bend * dy * dy, static_cast<double>(j)});
    }
    scene.centres.push_back(std::move(line));
  }

  // Background road texture.
  const double base = uniform(0.15, 0.3);
  const double shade = uniform(-0.05, 0.05);
  for (std::size_t j = 0; j < rows; ++j)
    for (std::size_t k = 0; k < cols; ++k)
      scene.image(0, j, k) = base + shade * static_cast<double>(j) / H;

  for (std::size_t l = 0; l < cfg.lanes; ++l) {
    const StrokeMask label = rasterize_polyline(scene.centres[l], rows, cols, cfg.stroke_width);
    const StrokeMask paint = rasterize_polyline(scene.centres[l], rows, cols, cfg.marking_width);
    const double brightness = uniform(0.75, 0.95);
    for (std::size_t e = 0; e < N; ++e) {
      if (label.bits[e]) scene.labels[e] = static_cast<std::uint8_t>(l + 1);
      if (paint.bits[e]) scene.image.data()[e] = brightness;
    }
  }

  // One occluder per lane covering a vertical band of about rate * H rows.
  if (cfg.occlusion_rate > 0.0) {
    for (std::size_t l = 0; l < cfg.lanes; ++l) {
      const double band = std::clamp(cfg.occlusion_rate * H * uniform(0.8, 1.2), 1.0, H);
      const double top = uniform(0.0, H - band);
      const auto j0 = static_cast<std::size_t>(top);
      const auto j1 = std::min(rows, static_cast<std::size_t>(top + band));
      double lo = W, hi = 0.0;
      for (std::size_t j = j0; j < j1; ++j) {
        lo = std::min(lo, scene.centres[l][j].x);
        hi = std::max(hi, scene.centres[l][j].x);
      }
      const double pad = cfg.stroke_width / 2.0 + uniform(1.0, 4.0);
      const auto k0 = static_cast<std::size_t>(std::max(0.0, std::floor(lo - pad)));
      const auto k1 = static_cast<std::size_t>(std::min(W, std::ceil(hi + pad) + 1.0));
      const double tone = uniform(0.35, 0.6);
      for (std::size_t j = j0; j < j1; ++j)
        for (std::size_t k = k0; k < k1; ++k) {
          scene.image(0, j, k) = tone;
          scene.occlusion[j * cols + k] = 1;
        }
    }
  }

  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (double& v : scene.image.data()) v += noise(rng);
  return scene;
}

}  // namespace scnn
