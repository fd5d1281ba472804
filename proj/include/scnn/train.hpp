#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "scnn/laneval.hpp"
#include "scnn/scene.hpp"
#include "scnn/tinynet.hpp"

namespace scnn {

struct TrainConfig {
  std::int64_t steps = 2000;
  std::size_t batch = 4;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  double poly_power = 0.9;
  double bg_weight = kBackgroundWeight;
  double exist_weight = 0.1;
  std::uint64_t seed = 11;
  SceneConfig scene;
  NetConfig net;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

// base * (1 - iter / max_iter)^power, clamped at zero.
double poly_lr(double base, std::int64_t iter, std::int64_t max_iter, double power);

struct StepLog {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  TinyNet net;
  std::vector<StepLog> log;
};

using StepCallback = std::function<void(const StepLog&)>;

/// SGD with momentum, weight decay and poly learning-rate decay on freshly
/// generated scenes. Deterministic for a given config. Throws TrainingError
/// if the loss becomes non-finite.
TrainResult train(const TrainConfig& cfg, bool use_scnn, Insertion insertion,
                  const StepCallback& on_step = {});

struct HeldOutReport {
  MatchCounts counts;
  double f1 = 0.0;
  double mean_loss = 0.0;
};

/// Decodes the net's predictions on `scenes` held-out frames (seeded
/// separately from training) and scores them against the generator's
/// centre lines.
HeldOutReport evaluate_heldout(const TinyNet& net, const SceneConfig& scene,
                               std::size_t scenes, std::uint64_t seed,
                               double iou_threshold = kDefaultIouThreshold,
                               double width = kDefaultStrokeWidth,
                               std::size_t row_step = kDefaultRowStep);

}  // namespace scnn
