#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "scnn/laneval.hpp"

using namespace scnn;
namespace fs = std::filesystem;

namespace {

LaneCurve lane(int id, std::vector<Point> pts) { return fit_spline(std::move(pts), id); }

LaneCurve vertical(int id, double x, double y0, double y1) {
  return lane(id, {{x, y0}, {x, y1}});
}

// Independent pipeline: dense-solve spline, densify, brute-force raster.
std::vector<std::uint8_t> oracle_mask(const LaneCurve& c, std::size_t H, std::size_t W,
                                      double width) {
  if (!c.exists || c.points.size() < 2) return std::vector<std::uint8_t>(H * W, 0);
  const oracle::DenseSpline s(c.points);
  const double y0 = c.points.front().y, y1 = c.points.back().y;
  std::vector<Point> poly{{s(y0), y0}};
  for (double y = std::floor(y0) + 1; y < y1; ++y) poly.push_back({s(y), y});
  poly.push_back({s(y1), y1});
  return oracle::raster(poly, H, W, width);
}

double oracle_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  double i = 0, u = 0;
  for (std::size_t e = 0; e < a.size(); ++e) {
    i += a[e] && b[e];
    u += a[e] || b[e];
  }
  return u == 0 ? 0.0 : i / u;
}

MatchCounts oracle_counts(const std::vector<LaneCurve>& preds, const std::vector<LaneCurve>& gts,
                          std::size_t H, std::size_t W, double thr, double width) {
  std::vector<std::vector<std::uint8_t>> pm, gm;
  for (const auto& c : preds)
    if (c.exists) pm.push_back(oracle_mask(c, H, W, width));
  for (const auto& c : gts)
    if (c.exists) gm.push_back(oracle_mask(c, H, W, width));
  std::vector<double> m;
  for (const auto& p : pm)
    for (const auto& g : gm) m.push_back(oracle_iou(p, g));
  const auto a = oracle::brute_force_assignment(m, pm.size(), gm.size(), thr);
  return {a.matched, pm.size() - a.matched, gm.size() - a.matched};
}

struct Corpus {
  fs::path list;
  std::vector<std::vector<LaneCurve>> preds, gts;
  std::vector<std::string> categories;
};

Corpus write_corpus(const fs::path& dir, std::uint64_t seed, double jitter) {
  fs::remove_all(dir);
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Corpus c;
  c.list = dir / "list.txt";
  std::ofstream list(c.list);
  list << "# pred gt category\n\n";
  for (int i = 0; i < 10; ++i) {
    std::vector<LaneCurve> gt, pred;
    const std::string cat = i % 5 == 4 ? "crossroad" : (i % 2 ? "curve" : "normal");
    if (cat != "crossroad") {
      for (int l = 0; l < 2; ++l) {
        const double base = 40 + 80 * l + 5 * u(rng), bend = 10 * u(rng);
        std::vector<Point> g, p;
        for (int k = 0; k <= 4; ++k) {
          const double y = 15 + 20 * k;
          const double x = base + bend * (y / 95) * (y / 95);
          g.push_back({x, y});
          p.push_back({x + jitter * u(rng), y});
        }
        gt.push_back(lane(l + 1, g));
        pred.push_back(lane(l + 1, p));
      }
      if (i == 3) pred[1] = LaneCurve{2, false, {}, {}};           // a miss
      if (i == 6) pred.push_back(vertical(3, 150, 10, 90));         // a spurious lane
    } else {
      pred.push_back(vertical(1, 80 + 10 * u(rng), 20, 95));
    }
    const auto name = std::to_string(i) + ".json";
    save_curves({160, 96, "probmap", pred}, dir / "pred" / name);
    save_curves({160, 96, "probmap", gt}, dir / "gt" / name);
    list << "pred/" << name << " gt/" << name << " " << cat << "\n";
    c.preds.push_back(pred);
    c.gts.push_back(gt);
    c.categories.push_back(cat);
  }
  return c;
}

}  // namespace

TEST(Raster, VerticalStrokeWidth) {
  const auto m = rasterize(vertical(1, 50, 0, 99), 100, 120, 30);
  for (std::size_t j = 0; j < 100; ++j) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < 120; ++k) n += m.at(j, k);
    ASSERT_EQ(n, 31u);
  }
  EXPECT_TRUE(m.at(10, 35));
  EXPECT_FALSE(m.at(10, 34));
}

TEST(Raster, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> x(-10, 70), w(1, 20);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> poly;
    for (int k = 0; k < 4; ++k) poly.push_back({x(rng), x(rng)});
    const double width = w(rng);
    ASSERT_EQ(rasterize_polyline(poly, 50, 60, width).bits, oracle::raster(poly, 50, 60, width));
  }
}

TEST(Iou, OffsetStrokes) {
  const auto a = rasterize(vertical(1, 50, 0, 99), 100, 120, 30);
  const auto b = rasterize(vertical(1, 60, 0, 99), 100, 120, 30);
  EXPECT_DOUBLE_EQ(iou(a, b), 21.0 / 41.0);
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  const StrokeMask empty{4, 4, 30, std::vector<std::uint8_t>(16, 0)};
  EXPECT_EQ(iou(empty, empty), 0.0);
  EXPECT_THROW(iou(a, empty), ShapeError);
}

TEST(Matching, GreedyWouldDifferExample) {
  const auto c = match_iou_matrix({0.6, 0.4, 0.55, 0.35}, 2, 2, 0.5);
  EXPECT_EQ(c, (MatchCounts{1, 1, 1}));
}

TEST(Matching, MaximisesTotalNotFirstChoice) {
  // Greedy on the best pair (0,0) would leave one match; the optimum has two.
  const auto c = match_iou_matrix({0.9, 0.8, 0.85, 0.1}, 2, 2, 0.5);
  EXPECT_EQ(c, (MatchCounts{2, 0, 0}));
}

TEST(Matching, StrictThreshold) {
  EXPECT_EQ(match_iou_matrix({0.5}, 1, 1, 0.5), (MatchCounts{0, 1, 1}));
  EXPECT_EQ(match_iou_matrix({}, 0, 3, 0.5), (MatchCounts{0, 0, 3}));
  EXPECT_EQ(match_iou_matrix({}, 2, 0, 0.5), (MatchCounts{0, 2, 0}));
}

TEST(Matching, AgreesWithBruteForce) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> d(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t P = rng() % 5, G = rng() % 5;
    std::vector<double> m(P * G);
    for (double& v : m) v = std::round(d(rng) * 10) / 10;  // frequent ties
    const auto got = match_iou_matrix(m, P, G, 0.3);
    const auto ref = oracle::brute_force_assignment(m, P, G, 0.3);
    ASSERT_EQ(got, (MatchCounts{ref.matched, P - ref.matched, G - ref.matched}));
  }
}

TEST(Scores, Definitions) {
  EXPECT_DOUBLE_EQ(fmeasure(2, 1, 1), 2.0 / 3.0);
  EXPECT_EQ(fmeasure(0, 0, 0), 1.0);
  EXPECT_EQ(fmeasure(0, 3, 2), 0.0);
  EXPECT_DOUBLE_EQ(precision({3, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(recall({3, 0, 3}), 0.5);
  // F2 weights recall more heavily.
  EXPECT_GT(fmeasure(1, 0, 1, 0.5), fmeasure(1, 0, 1, 2.0));
}

TEST(Corpus, IdentityPredictionsArePerfect) {
  const auto dir = fs::temp_directory_path() / "scnn_eval_identity";
  auto c = write_corpus(dir, 5, 0.0);
  const auto r = evaluate_corpus(c.list);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.categories.at("normal").counts, (MatchCounts{8, 1, 0}));  // image 6 adds a lane
  EXPECT_EQ(r.categories.at("curve").counts, (MatchCounts{7, 0, 1}));   // image 3 drops one
  EXPECT_TRUE(r.categories.at("crossroad").fp_only);
  EXPECT_EQ(r.categories.at("crossroad").counts, (MatchCounts{0, 2, 0}));
  const auto j = to_json(r);
  EXPECT_EQ(j["categories"]["crossroad"], (nlohmann::json{{"fp", 2}}));
  EXPECT_FALSE(j.contains("errors"));
}

TEST(Corpus, JitteredCorpusMatchesOracle) {
  const auto dir = fs::temp_directory_path() / "scnn_eval_jitter";
  auto c = write_corpus(dir, 9, 2.0);
  for (double thr : {0.3, 0.5, 0.8}) {
    const auto r = evaluate_corpus(c.list, thr);
    ASSERT_TRUE(r.ok());
    std::map<std::string, MatchCounts> expect;
    for (std::size_t i = 0; i < c.preds.size(); ++i) {
      const auto m = oracle_counts(c.preds[i], c.gts[i], 96, 160, thr, 30);
      auto& e = expect[c.categories[i]];
      e.tp += m.tp;
      e.fp += m.fp;
      e.fn += m.fn;
    }
    for (const auto& [cat, counts] : expect)
      EXPECT_EQ(r.categories.at(cat).counts, counts) << cat << " at " << thr;
  }
}

TEST(Corpus, LowerThresholdNeverHurts) {
  const auto dir = fs::temp_directory_path() / "scnn_eval_mono";
  auto c = write_corpus(dir, 21, 6.0);
  const auto lo = evaluate_corpus(c.list, 0.3).total;
  const auto hi = evaluate_corpus(c.list, 0.5).total;
  EXPECT_GE(fmeasure(lo.tp, lo.fp, lo.fn), fmeasure(hi.tp, hi.fp, hi.fn));
}

TEST(Corpus, TranslationEquivariance) {
  const std::vector<LaneCurve> g{lane(1, {{40, 20}, {45, 50}, {52, 80}})};
  const std::vector<LaneCurve> p{lane(1, {{43, 20}, {47, 50}, {53, 80}})};
  const std::vector<LaneCurve> g2{lane(1, {{60, 20}, {65, 50}, {72, 80}})};
  const std::vector<LaneCurve> p2{lane(1, {{63, 20}, {67, 50}, {73, 80}})};
  EXPECT_EQ(match_and_score(p, g, 100, 200), match_and_score(p2, g2, 100, 200));
  const auto a = rasterize(p[0], 100, 200), b = rasterize(g[0], 100, 200);
  const auto a2 = rasterize(p2[0], 100, 200), b2 = rasterize(g2[0], 100, 200);
  EXPECT_DOUBLE_EQ(iou(a, b), iou(a2, b2));
}

TEST(Corpus, BadLinesAreReported) {
  const auto dir = fs::temp_directory_path() / "scnn_eval_bad";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_curves({10, 10, "probmap", {}}, dir / "a.json");
  std::ofstream(dir / "list.txt") << "a.json a.json normal\nmissing.json a.json normal\nonly_two fields\n";
  const auto r = evaluate_corpus(dir / "list.txt");
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.diagnostics.size(), 2u);
  EXPECT_EQ(r.categories.at("normal").counts, (MatchCounts{0, 0, 0}));
  EXPECT_TRUE(to_json(r).contains("errors"));
}
