#include "scnn/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

namespace scnn {

namespace {

constexpr std::size_t kMaxElements =
    std::numeric_limits<std::size_t>::max() / sizeof(double);

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t at,
                     std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < width; ++b)
    v |= static_cast<std::uint64_t>(bytes[at + b]) << (8 * b);
  return v;
}

std::string magic_string(const std::array<std::uint8_t, 4>& m) {
  return std::string(m.begin(), m.end());
}

}  // namespace

std::size_t checked_volume(std::size_t channels, std::size_t rows,
                           std::size_t cols) {
  if (channels == 0 || rows == 0 || cols == 0)
    throw DimensionError("tensor dimensions must be positive, got " +
                         std::to_string(channels) + "x" + std::to_string(rows) +
                         "x" + std::to_string(cols));
  std::size_t plane = 0;
  std::size_t volume = 0;
  if (__builtin_mul_overflow(rows, cols, &plane) ||
      __builtin_mul_overflow(plane, channels, &volume) || volume > kMaxElements)
    throw DimensionError("tensor dimensions overflow: " + std::to_string(channels) +
                         "x" + std::to_string(rows) + "x" + std::to_string(cols));
  return volume;
}

Tensor3 Tensor3::zeros(std::size_t channels, std::size_t rows, std::size_t cols,
                       Precision precision) {
  std::size_t n = checked_volume(channels, rows, cols);
  return Tensor3(channels, rows, cols, std::vector<double>(n, 0.0), precision);
}

Tensor3 Tensor3::from_data(std::size_t channels, std::size_t rows,
                           std::size_t cols, std::vector<double> data,
                           Precision precision) {
  std::size_t n = checked_volume(channels, rows, cols);
  if (data.size() != n)
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match " + std::to_string(n) + " elements");
  return Tensor3(channels, rows, cols, std::move(data), precision);
}

double Tensor3::get(std::size_t i, std::size_t j, std::size_t k) const {
  if (i >= channels_ || j >= rows_ || k >= cols_)
    throw IndexError("index (" + std::to_string(i) + "," + std::to_string(j) +
                     "," + std::to_string(k) + ") out of range");
  return data_[offset(i, j, k)];
}

void Tensor3::set(std::size_t i, std::size_t j, std::size_t k, double v) {
  if (i >= channels_ || j >= rows_ || k >= cols_)
    throw IndexError("index (" + std::to_string(i) + "," + std::to_string(j) +
                     "," + std::to_string(k) + ") out of range");
  data_[offset(i, j, k)] = v;
}

bool Tensor3::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::uint8_t> encode(const Tensor3& t,
                                 const std::array<std::uint8_t, 4>& magic) {
  constexpr auto u32max = std::numeric_limits<std::uint32_t>::max();
  if (t.channels() > u32max || t.rows() > u32max || t.cols() > u32max)
    throw DimensionError("dimension does not fit the u32 header field");
  const bool f32 = t.precision() == Precision::Float32;
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + t.size() * (f32 ? 4 : 8));
  out.insert(out.end(), magic.begin(), magic.end());
  put_u16(out, kFormatVersion);
  out.push_back(static_cast<std::uint8_t>(t.precision()));
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(t.channels()));
  put_u32(out, static_cast<std::uint32_t>(t.rows()));
  put_u32(out, static_cast<std::uint32_t>(t.cols()));
  for (double v : t.data()) {
    if (f32)
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Tensor3 decode(std::span<const std::uint8_t> bytes,
               const std::array<std::uint8_t, 4>& magic) {
  if (bytes.size() < kHeaderBytes)
    throw FormatError("truncated header: need " + std::to_string(kHeaderBytes) +
                          " bytes, have " + std::to_string(bytes.size()),
                      bytes.size());
  if (!std::equal(magic.begin(), magic.end(), bytes.begin()))
    throw FormatError("bad magic, expected \"" + magic_string(magic) + "\"", 0);
  auto version = get_le(bytes, 4, 2);
  if (version != kFormatVersion)
    throw FormatError("unsupported version " + std::to_string(version), 4);
  auto dtype = bytes[6];
  if (dtype > 1) throw FormatError("unknown dtype " + std::to_string(dtype), 6);
  if (bytes[7] != 0) throw FormatError("reserved byte must be zero", 7);

  std::size_t dims[3];
  for (int d = 0; d < 3; ++d) dims[d] = get_le(bytes, 8 + 4 * d, 4);
  std::size_t n = 0;
  try {
    n = checked_volume(dims[0], dims[1], dims[2]);
  } catch (const DimensionError& e) {
    throw FormatError(e.what(), 8);
  }
  const std::size_t width = dtype == 0 ? 4 : 8;
  const std::size_t available = (bytes.size() - kHeaderBytes) / width;
  if (n > available || (bytes.size() - kHeaderBytes) % width != 0 ||
      available != n) {
    // Report where the payload stops making sense.
    std::size_t at = kHeaderBytes + std::min(n, available) * width;
    if (available < n)
      throw FormatError("truncated payload: header declares " + std::to_string(n) +
                            " values, found " + std::to_string(available),
                        at);
    throw FormatError("trailing bytes after payload", at);
  }

  std::vector<double> data(n);
  for (std::size_t e = 0; e < n; ++e) {
    std::size_t at = kHeaderBytes + e * width;
    if (width == 4)
      data[e] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, at, 4)));
    else
      data[e] = std::bit_cast<double>(get_le(bytes, at, 8));
  }
  return Tensor3::from_data(dims[0], dims[1], dims[2], std::move(data),
                            dtype == 0 ? Precision::Float32 : Precision::Float64);
}

void save(const Tensor3& t, const std::filesystem::path& path,
          const std::array<std::uint8_t, 4>& magic) {
  auto bytes = encode(t, magic);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Tensor3 load(const std::filesystem::path& path,
             const std::array<std::uint8_t, 4>& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes, magic);
}

}  // namespace scnn
