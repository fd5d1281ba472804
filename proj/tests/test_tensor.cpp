#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "scnn/tensor.hpp"

using namespace scnn;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "scnn_tensor_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Tensor, NewZero) {
  auto t = Tensor3::zeros(1, 1, 1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.get(0, 0, 0), 0.0);

  auto u = Tensor3::zeros(2, 3, 4);
  EXPECT_EQ(u.size(), 24u);
  EXPECT_EQ(u.get(1, 2, 3), 0.0);
  for (double v : u.data()) EXPECT_EQ(v, 0.0);

  EXPECT_EQ(Tensor3::zeros(3, 36, 100).size(), std::size_t{3} * 36 * 100);
}

TEST(Tensor, RejectsBadDimensions) {
  EXPECT_THROW(Tensor3::zeros(0, 1, 1), DimensionError);
  EXPECT_THROW(Tensor3::zeros(1, 0, 1), DimensionError);
  EXPECT_THROW(Tensor3::zeros(1, 1, 0), DimensionError);
  const auto huge = std::numeric_limits<std::size_t>::max() / 2;
  EXPECT_THROW(Tensor3::zeros(huge, 4, 1), DimensionError);
  EXPECT_THROW(Tensor3::from_data(2, 2, 2, std::vector<double>(7)), DimensionError);
}

TEST(Tensor, GetSet) {
  auto t = Tensor3::zeros(2, 3, 4);
  t.set(0, 0, 0, 2.5);
  EXPECT_EQ(t.get(0, 0, 0), 2.5);
  t.set(1, 2, 3, 7.0);
  EXPECT_EQ(t.get(1, 2, 3), 7.0);
  EXPECT_EQ(t.get(0, 0, 0), 2.5);
  EXPECT_EQ(Tensor3::zeros(2, 3, 4).get(1, 2, 3), 0.0);

  auto z = Tensor3::zeros(2, 3, 4);
  z.set(1, 2, 3, 7.0);
  EXPECT_EQ(z.get(0, 0, 0), 0.0);

  EXPECT_THROW(t.get(2, 0, 0), IndexError);
  EXPECT_THROW(t.get(0, 3, 0), IndexError);
  EXPECT_THROW(t.set(0, 0, 4, 1.0), IndexError);
}

TEST(Tensor, LayoutLawExhaustive) {
  for (std::size_t C = 1; C <= 3; ++C)
    for (std::size_t H = 1; H <= 4; ++H)
      for (std::size_t W = 1; W <= 5; ++W) {
        auto t = Tensor3::zeros(C, H, W);
        double v = 1.0;
        for (std::size_t i = 0; i < C; ++i)
          for (std::size_t j = 0; j < H; ++j)
            for (std::size_t k = 0; k < W; ++k) t.set(i, j, k, v++);
        for (std::size_t i = 0; i < C; ++i)
          for (std::size_t j = 0; j < H; ++j)
            for (std::size_t k = 0; k < W; ++k)
              ASSERT_EQ(t.data()[(i * H + j) * W + k], t.get(i, j, k));
      }
}

TEST(TensorFormat, RoundTripSingleValueIsBitExact) {
  auto t = Tensor3::from_data(1, 1, 1, {3.14});
  const auto path = temp_path("pi.scnt");
  save(t, path);
  auto back = load(path);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(back.get(0, 0, 0)),
            std::bit_cast<std::uint64_t>(3.14));

  t.set_precision(Precision::Float32);
  save(t, path);
  back = load(path);
  EXPECT_EQ(back.precision(), Precision::Float32);
  EXPECT_EQ(back.get(0, 0, 0), static_cast<double>(3.14f));
}

TEST(TensorFormat, HeaderLayout) {
  auto bytes = encode(Tensor3::zeros(2, 3, 4, Precision::Float32));
  ASSERT_EQ(bytes.size(), kHeaderBytes + 24 * 4);
  const std::vector<std::uint8_t> header{0x53, 0x43, 0x4E, 0x54, 1, 0, 0, 0, 2, 0, 0, 0,
                                         3,    0,    0,    0,    4, 0, 0, 0};
  EXPECT_TRUE(std::equal(header.begin(), header.end(), bytes.begin()));

  auto kernel = encode(Tensor3::zeros(2, 2, 3), kKernelMagic);
  EXPECT_EQ(kernel[3], 0x4B);
  EXPECT_EQ(kernel[6], 1);  // float64
}

TEST(TensorFormat, WrongMagic) {
  auto bytes = encode(Tensor3::zeros(1, 1, 1));
  bytes[0] = 'X';
  try {
    decode(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  // A kernel container is not a tensor container.
  EXPECT_THROW(decode(encode(Tensor3::zeros(1, 1, 1), kKernelMagic)), FormatError);
}

TEST(TensorFormat, TruncatedPayload) {
  auto bytes = encode(Tensor3::zeros(2, 2, 2, Precision::Float32));
  bytes.resize(bytes.size() - 4);  // 7 floats remain
  try {
    decode(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), kHeaderBytes + 7 * 4);
  }
  EXPECT_THROW(decode(std::span(bytes).first(10)), FormatError);
}

TEST(TensorFormat, DimensionOverflowAndBadFields) {
  auto bytes = encode(Tensor3::zeros(1, 1, 1));
  for (int b = 8; b < 20; ++b) bytes[b] = 0xff;
  try {
    decode(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 8u);
  }
  auto zero_dim = encode(Tensor3::zeros(1, 1, 1));
  zero_dim[8] = 0;
  EXPECT_THROW(decode(zero_dim), FormatError);
  auto bad_dtype = encode(Tensor3::zeros(1, 1, 1));
  bad_dtype[6] = 9;
  EXPECT_THROW(decode(bad_dtype), FormatError);
  auto trailing = encode(Tensor3::zeros(1, 1, 1));
  trailing.push_back(0);
  EXPECT_THROW(decode(trailing), FormatError);
}

// decode . encode is the identity on bytes, encode . decode on values.
TEST(TensorFormat, RoundTripProperty) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t C = 1 + rng() % 4, H = 1 + rng() % 6, W = 1 + rng() % 6;
    auto t = oracle::random_tensor(C, H, W, rng, -1e6, 1e6);
    if (trial % 2) t.set_precision(Precision::Float32);
    const auto bytes = encode(t);
    const auto back = decode(bytes);
    EXPECT_EQ(encode(back), bytes);
    if (t.precision() == Precision::Float64) {
      EXPECT_EQ(back, t);
    } else {
      for (std::size_t e = 0; e < t.size(); ++e)
        ASSERT_EQ(back.data()[e], static_cast<double>(static_cast<float>(t.data()[e])));
    }
  }
}
