#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "scnn/meanfield.hpp"

using namespace scnn;

namespace {

// Per-pixel evaluation of one or more rounds: independent softmax, explicit
// neighbourhood sum with out-of-image taps skipped, compatibility, unary.
Tensor3 mf_reference(const Tensor3& unary, const MeanFieldConfig& cfg) {
  const long C = long(unary.channels()), H = long(unary.rows()), W = long(unary.cols());
  const long s = long(cfg.kernel_size), r = s / 2;
  Tensor3 state = unary;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Tensor3 q = state;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double z = 0.0, hi = -1e300;
        for (long c = 0; c < C; ++c) hi = std::max(hi, state(c, y, x));
        for (long c = 0; c < C; ++c) z += std::exp(state(c, y, x) - hi);
        for (long c = 0; c < C; ++c) q(c, y, x) = std::exp(state(c, y, x) - hi) / z;
      }
    Tensor3 msg = Tensor3::zeros(C, H, W);
    for (long c = 0; c < C; ++c)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x)
          for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx) {
              if (y + dy < 0 || y + dy >= H || x + dx < 0 || x + dx >= W) continue;
              msg(c, y, x) += cfg.message_kernel[c * s * s + (dy + r) * s + (dx + r)] *
                              q(c, y + dy, x + dx);
            }
    for (long i = 0; i < C; ++i)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          double v = unary(i, y, x);
          for (long m = 0; m < C; ++m) v += cfg.compatibility[i * C + m] * msg(m, y, x);
          state(i, y, x) = v;
        }
  }
  return state;
}

MeanFieldConfig random_config(std::size_t C, std::size_t iters, std::size_t s,
                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  MeanFieldConfig cfg;
  cfg.iterations = iters;
  cfg.kernel_size = s;
  cfg.compatibility.resize(C * C);
  cfg.message_kernel.resize(C * s * s);
  for (double& v : cfg.compatibility) v = d(rng);
  for (double& v : cfg.message_kernel) v = d(rng);
  return cfg;
}

}  // namespace

TEST(Softmax, Examples) {
  const auto a = softmax_channels(Tensor3::from_data(2, 1, 1, {std::log(3.0), 0.0}));
  EXPECT_NEAR(a(0, 0, 0), 0.75, 1e-12);
  EXPECT_NEAR(a(1, 0, 0), 0.25, 1e-12);
  const auto b = softmax_channels(Tensor3::from_data(2, 1, 1, {1000.0, 0.0}));
  EXPECT_NEAR(b(0, 0, 0), 1.0, 1e-12);
  EXPECT_NEAR(b(1, 0, 0), 0.0, 1e-12);
  EXPECT_TRUE(b.all_finite());
}

TEST(MeanField, SinglePixelClosedForm) {
  // With one pixel and s = 1, one round yields U + K0 * softmax(U) for the
  // identity compatibility.
  auto cfg = MeanFieldConfig::with_defaults(2, 1, 1);
  const auto U = Tensor3::from_data(2, 1, 1, {std::log(3.0), 0.0});
  const auto out = mf_iterate(U, cfg);
  EXPECT_NEAR(out(0, 0, 0), std::log(3.0) + 0.75, 1e-12);
  EXPECT_NEAR(out(1, 0, 0), 0.25, 1e-12);
}

TEST(MeanField, MatchesReference) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t C = 1 + rng() % 3, H = 1 + rng() % 7, W = 1 + rng() % 7;
    const std::size_t s = 1 + 2 * (rng() % 3), n = 1 + rng() % 3;
    const auto cfg = random_config(C, n, s, rng);
    const auto U = oracle::random_tensor(C, H, W, rng, -2, 2);
    const auto a = mf_iterate(U, cfg), b = mf_reference(U, cfg);
    for (std::size_t e = 0; e < a.size(); ++e) ASSERT_NEAR(a.data()[e], b.data()[e], 1e-12);
  }
}

TEST(MeanField, TranslationInvarianceAwayFromBorders) {
  std::mt19937_64 rng(8);
  const std::size_t C = 2, H = 16, W = 16, s = 3;
  const auto cfg = random_config(C, 1, s, rng);
  auto U = Tensor3::zeros(C, H, W);
  std::uniform_real_distribution<double> d(-1, 1);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 6; y < 9; ++y)
      for (std::size_t x = 6; x < 9; ++x) U(c, y, x) = d(rng);
  auto V = Tensor3::zeros(C, H, W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y + 2 < H; ++y)
      for (std::size_t x = 0; x + 3 < W; ++x) V(c, y + 2, x + 3) = U(c, y, x);
  const auto a = mf_iterate(U, cfg), b = mf_iterate(V, cfg);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 2; y < 12; ++y)
      for (std::size_t x = 2; x < 11; ++x) EXPECT_NEAR(a(c, y, x), b(c, y + 2, x + 3), 1e-12);
}

TEST(MeanField, Defaults) {
  const auto cfg = MeanFieldConfig::with_defaults(3);
  EXPECT_EQ(cfg.iterations, 10u);
  EXPECT_EQ(cfg.kernel_size, 21u);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t e = 0; e < 21 * 21; ++e) sum += cfg.message_kernel[c * 441 + e];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(MeanField, Errors) {
  auto cfg = MeanFieldConfig::with_defaults(2, 1, 3);
  cfg.iterations = 0;
  EXPECT_THROW(mf_iterate(Tensor3::zeros(2, 2, 2), cfg), ConfigError);
  cfg = MeanFieldConfig::with_defaults(2, 1, 3);
  EXPECT_THROW(mf_iterate(Tensor3::zeros(3, 2, 2), cfg), ShapeError);
  cfg.kernel_size = 4;
  EXPECT_THROW(cfg.validate(2), ConfigError);
}

TEST(MessageCounts, Examples) {
  // 10 * (36 * 100)^2
  EXPECT_EQ(count_messages_dense(36, 100, 10), 129'600'000ull);
  EXPECT_EQ(count_messages_scnn(36, 100, 9, 4), 129'600ull);
  EXPECT_EQ(count_messages_scnn(3, 3, 9, 2), 162ull);
  EXPECT_THROW(count_messages_scnn(3, 3, 4, 1), ConfigError);
  EXPECT_THROW(count_messages_dense(0, 3, 1), ConfigError);
}

TEST(MessageCounts, InstrumentedDenseKernel) {
  // A kernel spanning the whole image evaluates every (src, dst) pair.
  for (std::size_t H = 1; H <= 8; ++H)
    for (std::size_t W = 1; W <= 8; ++W) {
      const std::size_t s = 2 * std::max(H, W) - 1;
      MeanFieldCounter c;
      mf_iterate(Tensor3::zeros(2, H, W), MeanFieldConfig::with_defaults(2, 2, s), &c);
      ASSERT_EQ(c.messages, count_messages_dense(H, W, 2)) << H << "x" << W;
    }
}
