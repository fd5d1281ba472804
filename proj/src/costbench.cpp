#include "scnn/costbench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "scnn/meanfield.hpp"
#include "scnn/scnn.hpp"

namespace scnn {

std::string_view to_string(BenchMethod m) noexcept {
  return m == BenchMethod::ScnnDULR ? "scnn" : "meanfield";
}

BenchMethod parse_bench_method(std::string_view s) {
  if (s == "scnn" || s == "scnn_dulr" || s == "SCNN_DULR") return BenchMethod::ScnnDULR;
  if (s == "meanfield" || s == "mf" || s == "crf") return BenchMethod::MeanField;
  throw ConfigError("unknown bench method '" + std::string(s) + "'");
}

void BenchSpec::validate() const {
  checked_volume(channels, rows, cols);
  if (repetitions < 3) throw ConfigError("repetitions must be >= 3");
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
  if (method == BenchMethod::ScnnDULR && (width == 0 || width % 2 == 0))
    throw ConfigError("SCNN width must be odd and positive");
  if (method == BenchMethod::MeanField) {
    if (iterations == 0) throw ConfigError("mean-field iterations must be >= 1");
    if (kernel_size == 0 || kernel_size % 2 == 0)
      throw ConfigError("mean-field kernel size must be odd");
  }
}

double median(std::vector<double> samples) {
  if (samples.empty()) throw ConfigError("median of empty sample set");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

BenchResult run_bench(const BenchSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Tensor3 x = Tensor3::zeros(spec.channels, spec.rows, spec.cols);
  for (double& v : x.data()) v = unit(rng);

  BenchResult result;
  result.spec = spec;

  ScnnStack stack;
  MeanFieldConfig mf;
  if (spec.method == BenchMethod::ScnnDULR) {
    stack = make_stack("DULR", spec.channels, spec.width, Scheme::Sequential, &rng);
    result.messages = count_messages_scnn(spec.rows, spec.cols, spec.width, 4);
  } else {
    mf = MeanFieldConfig::with_defaults(spec.channels, spec.iterations, spec.kernel_size);
    result.messages = count_messages_dense(spec.rows, spec.cols, spec.iterations);
  }

  double sink = 0.0;
  auto once = [&] {
    Tensor3 y = spec.method == BenchMethod::ScnnDULR ? scnn_stack_forward(x, stack)
                                                    : mf_iterate(x, mf);
    sink += y.data()[0];
  };

  for (int i = 0; i < spec.warmup; ++i) once();
  for (int i = 0; i < spec.repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    once();
    const auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    // steady_clock can report 0 for trivially small inputs.
    result.samples_ms.push_back(std::max(ms, 1e-6));
  }
  result.median_ms = median(result.samples_ms);
  if (sink != sink) throw Error("benchmark produced a non-finite output");
  return result;
}

nlohmann::json to_json(const BenchResult& r) {
  return {
      {"method", std::string(to_string(r.spec.method))},
      {"shape", {r.spec.channels, r.spec.rows, r.spec.cols}},
      {"w", r.spec.width},
      {"n_iter", r.spec.iterations},
      {"kernel_size", r.spec.kernel_size},
      {"repetitions", r.spec.repetitions},
      {"warmup", r.spec.warmup},
      {"seed", r.spec.seed},
      {"median_ms", r.median_ms},
      {"samples_ms", r.samples_ms},
      {"messages", r.messages},
  };
}

}  // namespace scnn
