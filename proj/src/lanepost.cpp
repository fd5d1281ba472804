#include "scnn/lanepost.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace scnn {

CubicSpline::CubicSpline(std::span<const Point> knots)
    : knots_(knots.begin(), knots.end()) {
  const std::size_t n = knots_.size();
  if (n < 2) throw CurveError("a spline needs at least 2 knots");
  for (std::size_t i = 1; i < n; ++i)
    if (!(knots_[i].y > knots_[i - 1].y))
      throw CurveError("spline knots must have strictly increasing y");

  // Natural end conditions: m_0 = m_{n-1} = 0; interior second derivatives
  // from the standard tridiagonal system, solved by forward elimination.
  m_.assign(n, 0.0);
  if (n == 2) return;
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = knots_[i].y - knots_[i - 1].y;
    const double h1 = knots_[i + 1].y - knots_[i].y;
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((knots_[i + 1].x - knots_[i].x) / h1 -
                        (knots_[i].x - knots_[i - 1].x) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double lower = knots_[i + 1].y - knots_[i].y;  // h_{i} for row i
    const double f = lower / diag[i - 1];
    diag[i] -= f * upper[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;)
    m_[i + 1] = (rhs[i] - upper[i] * m_[i + 2]) / diag[i];
}

std::size_t CubicSpline::interval(double y) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), y,
                             [](double v, const Point& p) { return v < p.y; });
  std::size_t i = static_cast<std::size_t>(it - knots_.begin());
  if (i == 0) return 0;
  return std::min(i - 1, knots_.size() - 2);
}

double CubicSpline::operator()(double y) const { return derivative(y, 0); }

double CubicSpline::derivative(double y, int order) const {
  if (knots_.empty()) throw CurveError("evaluating an empty spline");
  const std::size_t i = interval(y);
  const Point& p0 = knots_[i];
  const Point& p1 = knots_[i + 1];
  const double h = p1.y - p0.y;
  const double a = (p1.y - y) / h;
  const double b = (y - p0.y) / h;
  const double m0 = m_[i], m1 = m_[i + 1];
  switch (order) {
    case 0:
      return p0.x + b * (p1.x - p0.x) + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
    case 1:
      return (p1.x - p0.x) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 +
             (3.0 * b * b - 1.0) * h * m1 / 6.0;
    case 2:
      return a * m0 + b * m1;
    default:
      throw CurveError("unsupported derivative order");
  }
}

std::vector<Point> extract_points(const Tensor3& map, std::size_t channel,
                                  std::size_t row_step, double response_floor) {
  if (row_step == 0) throw ConfigError("row step must be positive");
  if (channel >= map.channels()) throw IndexError("probmap channel out of range");
  std::vector<Point> points;
  const std::size_t H = map.rows(), W = map.cols();
  for (std::size_t j = H; j-- > 0;) {
    if ((H - 1 - j) % row_step != 0) continue;
    std::size_t best = 0;
    double peak = map(channel, j, 0);
    for (std::size_t k = 1; k < W; ++k) {
      const double v = map(channel, j, k);
      if (v > peak) {
        peak = v;
        best = k;
      }
    }
    if (peak >= response_floor)
      points.push_back({static_cast<double>(best), static_cast<double>(j)});
  }
  std::reverse(points.begin(), points.end());
  return points;
}

LaneCurve fit_spline(std::vector<Point> points, int id) {
  if (points.size() < 2)
    throw CurveError("degenerate curve: " + std::to_string(points.size()) + " point(s)");
  LaneCurve c;
  c.id = id;
  c.exists = true;
  c.spline.emplace(points);
  c.points = std::move(points);
  return c;
}

std::vector<LaneCurve> decode(const Tensor3& probmaps, std::span<const double> existence,
                              std::size_t row_step, double exist_threshold,
                              double response_floor) {
  const std::size_t L = existence.size();
  std::size_t first = 0;
  if (probmaps.channels() == L + 1)
    first = 1;
  else if (probmaps.channels() != L)
    throw ShapeError("probmaps have " + std::to_string(probmaps.channels()) +
                     " channels for " + std::to_string(L) + " lanes");

  std::vector<LaneCurve> curves;
  for (std::size_t l = 0; l < L; ++l) {
    LaneCurve c;
    c.id = static_cast<int>(l + 1);
    if (existence[l] > exist_threshold) {
      auto pts = extract_points(probmaps, first + l, row_step, response_floor);
      if (pts.size() >= 2) c = fit_spline(std::move(pts), c.id);
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

nlohmann::json to_json(const CurveFile& f) {
  nlohmann::json lanes = nlohmann::json::array();
  for (const auto& c : f.lanes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.x, p.y});
    lanes.push_back({{"id", c.id}, {"exists", c.exists}, {"points", pts}});
  }
  return {{"image_width", f.image_width},
          {"image_height", f.image_height},
          {"coordinate_space", f.coordinate_space},
          {"lanes", lanes}};
}

CurveFile curve_file_from_json(const nlohmann::json& j) {
  try {
    CurveFile f;
    f.image_width = j.at("image_width").get<std::size_t>();
    f.image_height = j.at("image_height").get<std::size_t>();
    if (j.contains("coordinate_space"))
      f.coordinate_space = j.at("coordinate_space").get<std::string>();
    for (const auto& lj : j.at("lanes")) {
      LaneCurve c;
      c.id = lj.at("id").get<int>();
      c.exists = lj.at("exists").get<bool>();
      for (const auto& pj : lj.at("points"))
        c.points.push_back({pj.at(0).get<double>(), pj.at(1).get<double>()});
      if (!c.exists && !c.points.empty())
        throw CurveError("lane " + std::to_string(c.id) + " is absent but has points");
      if (c.exists && c.points.size() >= 2) c.spline.emplace(c.points);
      f.lanes.push_back(std::move(c));
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw CurveError(std::string("malformed curve file: ") + e.what());
  }
}

void save_curves(const CurveFile& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setw(1) << to_json(f).dump() << '\n';
}

CurveFile load_curves(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CurveError(path.string() + ": " + e.what());
  }
  return curve_file_from_json(j);
}

}  // namespace scnn
