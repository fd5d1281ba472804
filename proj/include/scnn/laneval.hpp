#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scnn/lanepost.hpp"
#include "scnn/vendor_json.hpp"

namespace scnn {

inline constexpr double kDefaultStrokeWidth = 30.0;
inline constexpr double kDefaultIouThreshold = 0.5;

/// Binary H x W raster of a thickened curve.
struct StrokeMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double width = kDefaultStrokeWidth;
  std::vector<std::uint8_t> bits;

  bool at(std::size_t j, std::size_t k) const noexcept { return bits[j * cols + k] != 0; }
  std::size_t count() const noexcept;
};

// Densifies the curve's spline at every integer y between its end knots and
// sets each pixel whose centre lies within width/2 of the resulting polyline.
// Absent or degenerate curves give an empty mask.
StrokeMask rasterize(const LaneCurve& curve, std::size_t rows, std::size_t cols,
                     double width = kDefaultStrokeWidth);
StrokeMask rasterize_polyline(std::span<const Point> polyline, std::size_t rows,
                              std::size_t cols, double width);

// |a & b| / |a | b|; two empty masks give 0.
double iou(const StrokeMask& a, const StrokeMask& b);

struct MatchCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

/// One-to-one assignment maximising total IoU over pairs whose IoU is
/// strictly above `threshold`. iou_matrix is preds x gts, row-major.
MatchCounts match_iou_matrix(const std::vector<double>& iou_matrix, std::size_t preds,
                             std::size_t gts, double threshold);

MatchCounts match_and_score(const std::vector<LaneCurve>& preds,
                            const std::vector<LaneCurve>& gts, std::size_t rows,
                            std::size_t cols, double iou_threshold = kDefaultIouThreshold,
                            double width = kDefaultStrokeWidth);

double precision(const MatchCounts& c);
double recall(const MatchCounts& c);
double fmeasure(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, double beta = 1.0);

struct CategoryReport {
  MatchCounts counts;
  bool fp_only = false;
};

struct EvalReport {
  double threshold = kDefaultIouThreshold;
  double width = kDefaultStrokeWidth;
  std::map<std::string, CategoryReport> categories;
  MatchCounts total;
  std::vector<std::string> diagnostics;  // one per failed list entry

  bool ok() const noexcept { return diagnostics.empty(); }
};

nlohmann::json to_json(const EvalReport& r);

inline const std::set<std::string>& default_fp_only_categories() {
  static const std::set<std::string> cats{"crossroad"};
  return cats;
}

/// Reads `<pred_path> <gt_path> <category>` lines (relative paths resolve
/// against the list file's directory) and accumulates counts per category.
/// Failed lines are reported in `diagnostics` and skipped.
EvalReport evaluate_corpus(const std::filesystem::path& list_file,
                           double iou_threshold = kDefaultIouThreshold,
                           double width = kDefaultStrokeWidth,
                           const std::set<std::string>& fp_only = default_fp_only_categories());

}  // namespace scnn
