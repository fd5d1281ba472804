#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scnn/tensor.hpp"
#include "scnn/vendor_json.hpp"

namespace scnn {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Natural cubic spline x(y) through knots with strictly increasing y.
class CubicSpline {
 public:
  CubicSpline() = default;
  explicit CubicSpline(std::span<const Point> knots);

  // Evaluation outside [front().y, back().y] extends the end cubics.
  double operator()(double y) const;
  double derivative(double y, int order) const;

  std::span<const Point> knots() const noexcept { return knots_; }
  std::span<const double> second_derivatives() const noexcept { return m_; }
  bool empty() const noexcept { return knots_.empty(); }

 private:
  std::size_t interval(double y) const;

  std::vector<Point> knots_;
  std::vector<double> m_;  // second derivative at each knot
};

struct LaneCurve {
  int id = 0;
  bool exists = false;
  std::vector<Point> points;
  std::optional<CubicSpline> spline;
};

inline constexpr std::size_t kDefaultRowStep = 20;
inline constexpr double kDefaultExistThreshold = 0.5;
inline constexpr double kDefaultResponseFloor = 0.3;

/// Samples rows H-1, H-1-step, ... of a single-channel map and emits the
/// leftmost argmax of each row whose peak reaches `response_floor`. Points
/// come back ordered by increasing y.
std::vector<Point> extract_points(const Tensor3& map, std::size_t channel = 0,
                                  std::size_t row_step = kDefaultRowStep,
                                  double response_floor = kDefaultResponseFloor);

// Throws CurveError for fewer than two points or non-increasing y.
LaneCurve fit_spline(std::vector<Point> points, int id = 1);

/// Turns probmaps into curves. `probmaps` holds either L lane channels or
/// L+1 channels with background in channel 0; L is existence.size().
std::vector<LaneCurve> decode(const Tensor3& probmaps, std::span<const double> existence,
                              std::size_t row_step = kDefaultRowStep,
                              double exist_threshold = kDefaultExistThreshold,
                              double response_floor = kDefaultResponseFloor);

struct CurveFile {
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::string coordinate_space = "probmap";
  std::vector<LaneCurve> lanes;
};

nlohmann::json to_json(const CurveFile& f);
CurveFile curve_file_from_json(const nlohmann::json& j);
void save_curves(const CurveFile& f, const std::filesystem::path& path);
CurveFile load_curves(const std::filesystem::path& path);

}  // namespace scnn
