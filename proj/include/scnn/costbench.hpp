#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vendor_json.hpp"

namespace scnn {

enum class BenchMethod { ScnnDULR, MeanField };

std::string_view to_string(BenchMethod m) noexcept;
// "scnn" or "meanfield" (also accepts "mf", "crf").
BenchMethod parse_bench_method(std::string_view s);

struct BenchSpec {
  std::size_t channels = 128;
  std::size_t rows = 36;
  std::size_t cols = 100;
  BenchMethod method = BenchMethod::ScnnDULR;
  std::size_t width = 9;          // SCNN kernel width
  std::size_t iterations = 10;    // mean-field rounds
  std::size_t kernel_size = 21;   // mean-field message kernel
  int repetitions = 3;
  int warmup = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchResult {
  BenchSpec spec;
  double median_ms = 0.0;
  std::vector<double> samples_ms;
  std::uint64_t messages = 0;
};

double median(std::vector<double> samples);

// Times the configured method on uniform random input, single-threaded.
BenchResult run_bench(const BenchSpec& spec);

nlohmann::json to_json(const BenchResult& r);

}  // namespace scnn
