#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scnn/error.hpp"

namespace scnn {

// Storage precision used when a tensor is written to disk. Arithmetic is
// always carried out in double.
enum class Precision : std::uint8_t { Float32 = 0, Float64 = 1 };

/// Dense C x H x W array of doubles, channel-major then row-major:
/// offset(i, j, k) = (i * H + j) * W + k. Row index grows downward.
class Tensor3 {
 public:
  Tensor3() = default;

  static Tensor3 zeros(std::size_t channels, std::size_t rows, std::size_t cols,
                       Precision precision = Precision::Float64);
  static Tensor3 from_data(std::size_t channels, std::size_t rows,
                           std::size_t cols, std::vector<double> data,
                           Precision precision = Precision::Float64);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return rows_ * cols_; }
  Precision precision() const noexcept { return precision_; }
  void set_precision(Precision p) noexcept { precision_ = p; }

  bool same_shape(const Tensor3& other) const noexcept {
    return channels_ == other.channels_ && rows_ == other.rows_ &&
           cols_ == other.cols_;
  }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * rows_ + j) * cols_ + k;
  }

  // Bounds-checked access.
  double get(std::size_t i, std::size_t j, std::size_t k) const;
  void set(std::size_t i, std::size_t j, std::size_t k, double v);

  // Unchecked access for inner loops.
  double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[offset(i, j, k)];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[offset(i, j, k)];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> channel(std::size_t i) noexcept {
    return std::span<double>(data_).subspan(i * plane(), plane());
  }
  std::span<const double> channel(std::size_t i) const noexcept {
    return std::span<const double>(data_).subspan(i * plane(), plane());
  }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Tensor3(std::size_t c, std::size_t h, std::size_t w, std::vector<double> data,
          Precision p)
      : channels_(c), rows_(h), cols_(w), data_(std::move(data)), precision_(p) {}

  std::size_t channels_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  Precision precision_ = Precision::Float64;
};

// Validates C, H, W >= 1 and that C*H*W*8 bytes is representable.
std::size_t checked_volume(std::size_t channels, std::size_t rows,
                           std::size_t cols);

// Binary container shared by tensor and kernel files. Little-endian:
// 4-byte magic, u16 version, u8 dtype, u8 reserved, u32 dims[3], payload.
inline constexpr std::array<std::uint8_t, 4> kTensorMagic{'S', 'C', 'N', 'T'};
inline constexpr std::array<std::uint8_t, 4> kKernelMagic{'S', 'C', 'N', 'K'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;

std::vector<std::uint8_t> encode(const Tensor3& t,
                                 const std::array<std::uint8_t, 4>& magic = kTensorMagic);
Tensor3 decode(std::span<const std::uint8_t> bytes,
               const std::array<std::uint8_t, 4>& magic = kTensorMagic);

void save(const Tensor3& t, const std::filesystem::path& path,
          const std::array<std::uint8_t, 4>& magic = kTensorMagic);
Tensor3 load(const std::filesystem::path& path,
             const std::array<std::uint8_t, 4>& magic = kTensorMagic);

}  // namespace scnn
