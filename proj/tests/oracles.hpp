#pragma once

// Independent reference implementations used only by the tests. None of
// these call into the library paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "scnn/lanepost.hpp"
#include "scnn/scnn.hpp"
#include "scnn/tensor.hpp"

namespace oracle {

// Direct slice-by-slice evaluation of the recurrence
//   X'_slice(0) = X_slice(0)
//   X'_{i,t,p} = X_{i,t,p} + relu( sum_m sum_n S_{m,t-1,p+n-r} K_{m,i,n} )
// where S is X' (sequential) or X (parallel), with out-of-range taps skipped.
inline scnn::Tensor3 forward(const scnn::Tensor3& x, const scnn::ScnnKernel& k,
                             const scnn::PropagationConfig& cfg) {
  using scnn::Direction;
  const long C = static_cast<long>(x.channels()), H = static_cast<long>(x.rows()),
             W = static_cast<long>(x.cols()), w = static_cast<long>(k.width()), r = w / 2;
  scnn::Tensor3 y = x;
  const bool seq = cfg.scheme == scnn::Scheme::Sequential;
  const scnn::Tensor3& src_of = seq ? y : x;
  auto src = [&](long c, long row, long col) {
    return seq ? y(static_cast<std::size_t>(c), static_cast<std::size_t>(row),
                   static_cast<std::size_t>(col))
               : src_of(static_cast<std::size_t>(c), static_cast<std::size_t>(row),
                        static_cast<std::size_t>(col));
  };
  auto update = [&](long i, long row, long col, long prow, long pcol, bool vertical) {
    double acc = 0.0;
    for (long m = 0; m < C; ++m)
      for (long n = 0; n < w; ++n) {
        long rr = prow, cc = pcol;
        if (vertical)
          cc = pcol + n - r;
        else
          rr = prow + n - r;
        if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
        acc += src(m, rr, cc) * k(static_cast<std::size_t>(m), static_cast<std::size_t>(i),
                                  static_cast<std::size_t>(n));
      }
    return x(static_cast<std::size_t>(i), static_cast<std::size_t>(row),
             static_cast<std::size_t>(col)) + std::max(acc, 0.0);
  };
  switch (cfg.direction) {
    case Direction::Down:
      for (long j = 1; j < H; ++j)
        for (long i = 0; i < C; ++i)
          for (long c = 0; c < W; ++c) y(i, j, c) = update(i, j, c, j - 1, c, true);
      break;
    case Direction::Up:
      for (long j = H - 2; j >= 0; --j)
        for (long i = 0; i < C; ++i)
          for (long c = 0; c < W; ++c) y(i, j, c) = update(i, j, c, j + 1, c, true);
      break;
    case Direction::Right:
      for (long c = 1; c < W; ++c)
        for (long i = 0; i < C; ++i)
          for (long j = 0; j < H; ++j) y(i, j, c) = update(i, j, c, j, c - 1, false);
      break;
    case Direction::Left:
      for (long c = W - 2; c >= 0; --c)
        for (long i = 0; i < C; ++i)
          for (long j = 0; j < H; ++j) y(i, j, c) = update(i, j, c, j, c + 1, false);
      break;
  }
  return y;
}

inline scnn::Tensor3 random_tensor(std::size_t c, std::size_t h, std::size_t w,
                                   std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  auto t = scnn::Tensor3::zeros(c, h, w);
  for (double& v : t.data()) v = d(rng);
  return t;
}

inline double inner(const scnn::Tensor3& a, const scnn::Tensor3& b) {
  double s = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e) s += a.data()[e] * b.data()[e];
  return s;
}

// Central difference of f along every coordinate of `params`.
inline std::vector<double> central_differences(std::vector<double>& params,
                                               const std::function<double()>& f,
                                               double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t e = 0; e < params.size(); ++e) {
    const double keep = params[e];
    params[e] = keep + h;
    const double up = f();
    params[e] = keep - h;
    const double down = f();
    params[e] = keep;
    g[e] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Natural cubic spline through (y_i, x_i): solve the full (n x n) system for
// knot second derivatives with dense Gaussian elimination (partial pivoting),
// then evaluate in power form on the containing interval.
class DenseSpline {
 public:
  explicit DenseSpline(const std::vector<scnn::Point>& pts) : pts_(pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    a[0][0] = 1.0;
    a[n - 1][n - 1] = 1.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = pts[i].y - pts[i - 1].y, h1 = pts[i + 1].y - pts[i].y;
      a[i][i - 1] = h0 / 6.0;
      a[i][i] = (h0 + h1) / 3.0;
      a[i][i + 1] = h1 / 6.0;
      a[i][n] = (pts[i + 1].x - pts[i].x) / h1 - (pts[i].x - pts[i - 1].x) / h0;
    }
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < n; ++r)
        if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
      std::swap(a[c], a[piv]);
      for (std::size_t r = 0; r < n; ++r) {
        if (r == c) continue;
        const double f = a[r][c] / a[c][c];
        for (std::size_t q = c; q <= n; ++q) a[r][q] -= f * a[c][q];
      }
    }
    m_.resize(n);
    for (std::size_t i = 0; i < n; ++i) m_[i] = a[i][n] / a[i][i];
  }

  double operator()(double y) const {
    std::size_t i = 0;
    while (i + 2 < pts_.size() && y > pts_[i + 1].y) ++i;
    const double h = pts_[i + 1].y - pts_[i].y, t = y - pts_[i].y;
    const double b = (pts_[i + 1].x - pts_[i].x) / h - h * (2.0 * m_[i] + m_[i + 1]) / 6.0;
    const double c = m_[i] / 2.0;
    const double d = (m_[i + 1] - m_[i]) / (6.0 * h);
    return pts_[i].x + t * (b + t * (c + t * d));
  }

 private:
  std::vector<scnn::Point> pts_;
  std::vector<double> m_;
};

// Tries every injective partial map from predictions to ground truths and
// keeps the one with maximal total IoU over admissible pairs.
struct Assignment {
  double total = 0.0;
  std::uint64_t matched = 0;
};

inline Assignment brute_force_assignment(const std::vector<double>& m, std::size_t preds,
                                         std::size_t gts, double thr) {
  Assignment best;
  std::vector<bool> used(gts, false);
  std::function<void(std::size_t, double, std::uint64_t)> rec =
      [&](std::size_t p, double total, std::uint64_t matched) {
        if (p == preds) {
          if (total > best.total || (total == best.total && matched > best.matched))
            best = {total, matched};
          return;
        }
        rec(p + 1, total, matched);
        for (std::size_t g = 0; g < gts; ++g) {
          if (used[g] || !(m[p * gts + g] > thr)) continue;
          used[g] = true;
          rec(p + 1, total + m[p * gts + g], matched + 1);
          used[g] = false;
        }
      };
  rec(0, 0.0, 0);
  return best;
}

// Per-pixel brute force: distance from every pixel centre to every segment.
inline std::vector<std::uint8_t> raster(const std::vector<scnn::Point>& poly, std::size_t H,
                                        std::size_t W, double width) {
  std::vector<std::uint8_t> bits(H * W, 0);
  for (std::size_t j = 0; j < H; ++j)
    for (std::size_t k = 0; k < W; ++k) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s + 1 < poly.size(); ++s) {
        const auto& a = poly[s];
        const auto& b = poly[s + 1];
        const double dx = b.x - a.x, dy = b.y - a.y, px = double(k) - a.x, py = double(j) - a.y;
        const double len2 = dx * dx + dy * dy;
        const double t = len2 > 0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
        const double ex = px - t * dx, ey = py - t * dy;
        best = std::min(best, ex * ex + ey * ey);
      }
      bits[j * W + k] = best <= (width / 2) * (width / 2);
    }
  return bits;
}

}  // namespace oracle
