#include "scnn/laneval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace scnn {

std::size_t StrokeMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

double segment_distance_sq(double px, double py, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
  return ex * ex + ey * ey;
}

}  // namespace

StrokeMask rasterize_polyline(std::span<const Point> polyline, std::size_t rows,
                              std::size_t cols, double width) {
  StrokeMask mask{rows, cols, width, std::vector<std::uint8_t>(rows * cols, 0)};
  if (polyline.size() < 2 || rows == 0 || cols == 0) return mask;
  const double half = width / 2.0;
  const double half_sq = half * half;
  const auto clamp_index = [](double v, std::size_t n) {
    if (v < 0.0) return std::ptrdiff_t{0};
    if (v >= static_cast<double>(n)) return static_cast<std::ptrdiff_t>(n);
    return static_cast<std::ptrdiff_t>(v);
  };
  for (std::size_t s = 0; s + 1 < polyline.size(); ++s) {
    const Point& a = polyline[s];
    const Point& b = polyline[s + 1];
    // Bounding box of the thickened segment, in pixel-centre coordinates.
    const auto j0 = clamp_index(std::ceil(std::min(a.y, b.y) - half), rows);
    const auto j1 = clamp_index(std::floor(std::max(a.y, b.y) + half) + 1.0, rows);
    const auto k0 = clamp_index(std::ceil(std::min(a.x, b.x) - half), cols);
    const auto k1 = clamp_index(std::floor(std::max(a.x, b.x) + half) + 1.0, cols);
    for (auto j = j0; j < j1; ++j)
      for (auto k = k0; k < k1; ++k) {
        auto& bit = mask.bits[static_cast<std::size_t>(j) * cols + static_cast<std::size_t>(k)];
        if (!bit && segment_distance_sq(static_cast<double>(k), static_cast<double>(j), a, b) <= half_sq)
          bit = 1;
      }
  }
  return mask;
}

StrokeMask rasterize(const LaneCurve& curve, std::size_t rows, std::size_t cols,
                     double width) {
  if (!curve.exists || curve.points.size() < 2)
    return StrokeMask{rows, cols, width, std::vector<std::uint8_t>(rows * cols, 0)};
  const CubicSpline spline = curve.spline ? *curve.spline : CubicSpline(curve.points);
  const double y0 = curve.points.front().y, y1 = curve.points.back().y;
  std::vector<Point> dense{{spline(y0), y0}};
  for (double y = std::floor(y0) + 1.0; y < y1; y += 1.0) dense.push_back({spline(y), y});
  dense.push_back({spline(y1), y1});
  return rasterize_polyline(dense, rows, cols, width);
}

double iou(const StrokeMask& a, const StrokeMask& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("IoU of masks with different raster sizes");
  std::size_t inter = 0, uni = 0;
  for (std::size_t e = 0; e < a.bits.size(); ++e) {
    inter += a.bits[e] & b.bits[e];
    uni += a.bits[e] | b.bits[e];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MatchCounts match_iou_matrix(const std::vector<double>& m, std::size_t preds,
                             std::size_t gts, double threshold) {
  if (m.size() != preds * gts) throw ShapeError("IoU matrix size mismatch");
  if (gts > 20) throw ConfigError("exact matching supports at most 20 ground-truth lanes");

  // best[mask] over predictions processed so far: maximal total IoU using
  // exactly the ground truths in `mask`, with the pair count as tie-break.
  struct Best {
    double total = -1.0;
    std::uint64_t matched = 0;
  };
  const std::size_t states = std::size_t{1} << gts;
  std::vector<Best> best(states), next(states);
  best[0] = {0.0, 0};
  for (std::size_t p = 0; p < preds; ++p) {
    next = best;  // prediction p unmatched
    for (std::size_t mask = 0; mask < states; ++mask) {
      if (best[mask].total < 0.0) continue;
      for (std::size_t g = 0; g < gts; ++g) {
        if (mask & (std::size_t{1} << g)) continue;
        const double v = m[p * gts + g];
        if (!(v > threshold)) continue;
        Best cand{best[mask].total + v, best[mask].matched + 1};
        Best& slot = next[mask | (std::size_t{1} << g)];
        if (cand.total > slot.total ||
            (cand.total == slot.total && cand.matched > slot.matched))
          slot = cand;
      }
    }
    best.swap(next);
  }
  Best top;
  for (const Best& b : best)
    if (b.total > top.total || (b.total == top.total && b.matched > top.matched)) top = b;
  return {top.matched, preds - top.matched, gts - top.matched};
}

MatchCounts match_and_score(const std::vector<LaneCurve>& preds,
                            const std::vector<LaneCurve>& gts, std::size_t rows,
                            std::size_t cols, double iou_threshold, double width) {
  std::vector<StrokeMask> pm, gm;
  for (const auto& c : preds)
    if (c.exists) pm.push_back(rasterize(c, rows, cols, width));
  for (const auto& c : gts)
    if (c.exists) gm.push_back(rasterize(c, rows, cols, width));
  std::vector<double> m(pm.size() * gm.size());
  for (std::size_t p = 0; p < pm.size(); ++p)
    for (std::size_t g = 0; g < gm.size(); ++g) m[p * gm.size() + g] = iou(pm[p], gm[g]);
  return match_iou_matrix(m, pm.size(), gm.size(), iou_threshold);
}

double precision(const MatchCounts& c) {
  return c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

double recall(const MatchCounts& c) {
  return c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double fmeasure(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, double beta) {
  const MatchCounts c{tp, fp, fn};
  const double p = precision(c), r = recall(c);
  if (p + r == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (b2 * p + r);
}

namespace {

nlohmann::json counts_json(const MatchCounts& c, bool fp_only) {
  if (fp_only) return {{"fp", c.fp}};
  return {{"tp", c.tp},
          {"fp", c.fp},
          {"fn", c.fn},
          {"precision", precision(c)},
          {"recall", recall(c)},
          {"f1", fmeasure(c.tp, c.fp, c.fn)}};
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, cr] : r.categories) cats[name] = counts_json(cr.counts, cr.fp_only);
  nlohmann::json j{{"threshold", r.threshold},
                   {"width", r.width},
                   {"categories", cats},
                   {"total", counts_json(r.total, false)}};
  if (!r.diagnostics.empty()) j["errors"] = r.diagnostics;
  return j;
}

EvalReport evaluate_corpus(const std::filesystem::path& list_file, double iou_threshold,
                           double width, const std::set<std::string>& fp_only) {
  std::ifstream in(list_file);
  if (!in) throw Error("cannot open list file " + list_file.string());
  const auto base = list_file.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  EvalReport report;
  report.threshold = iou_threshold;
  report.width = width;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string pred, gt, category, extra;
    if (!(fields >> pred >> gt >> category) || (fields >> extra)) {
      report.diagnostics.push_back(list_file.string() + ":" + std::to_string(lineno) +
                                   ": expected '<pred> <gt> <category>'");
      continue;
    }
    try {
      const CurveFile p = load_curves(resolve(pred));
      const CurveFile g = load_curves(resolve(gt));
      const MatchCounts c = match_and_score(p.lanes, g.lanes, g.image_height,
                                            g.image_width, iou_threshold, width);
      CategoryReport& cr = report.categories[category];
      cr.fp_only = fp_only.contains(category);
      cr.counts.tp += c.tp;
      cr.counts.fp += c.fp;
      cr.counts.fn += c.fn;
      report.total.tp += c.tp;
      report.total.fp += c.fp;
      report.total.fn += c.fn;
    } catch (const Error& e) {
      report.diagnostics.push_back(list_file.string() + ":" + std::to_string(lineno) +
                                   ": " + e.what());
    }
  }
  return report;
}

}  // namespace scnn
