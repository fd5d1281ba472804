#include "scnn/train.hpp"

#include <cmath>

namespace scnn {

namespace {
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kHeldOutStream = 3;
}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (!(base_lr > 0.0) || momentum < 0.0 || weight_decay < 0.0 || !(poly_power > 0.0) ||
      !(bg_weight > 0.0))
    throw ConfigError("learning-rate, momentum, decay and weight settings must be positive");
  net.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch", c.batch},
          {"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"poly_power", c.poly_power},
          {"bg_weight", c.bg_weight},
          {"exist_weight", c.exist_weight},
          {"seed", c.seed},
          {"scene",
           {{"rows", c.scene.rows},
            {"cols", c.scene.cols},
            {"lanes", c.scene.lanes},
            {"occlusion_rate", c.scene.occlusion_rate},
            {"stroke_width", c.scene.stroke_width},
            {"marking_width", c.scene.marking_width},
            {"noise_sigma", c.scene.noise_sigma}}},
          {"net", to_json(c.net)}};
}

double poly_lr(double base, std::int64_t iter, std::int64_t max_iter, double power) {
  if (max_iter <= 0) return base;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return frac <= 0.0 ? 0.0 : base * std::pow(frac, power);
}

TrainResult train(const TrainConfig& cfg, bool use_scnn, Insertion insertion,
                  const StepCallback& on_step) {
  TrainConfig c = cfg;
  c.net.use_scnn = use_scnn;
  c.net.insertion = insertion;
  c.net.lanes = c.scene.lanes;
  c.validate();

  std::mt19937_64 init_rng(derive_seed(c.seed, kInitStream, 0));
  TrainResult result{TinyNet(c.net, init_rng), {}};
  TinyNet& net = result.net;
  TinyNet velocity = net.zeros_like();

  for (std::int64_t step = 0; step < c.steps; ++step) {
    TinyNet grads = net.zeros_like();
    const double scale = 1.0 / static_cast<double>(c.batch);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < c.batch; ++b) {
      const auto scene = gen_scene(
          derive_seed(c.seed, kTrainStream, static_cast<std::uint64_t>(step) * c.batch + b),
          c.scene);
      batch_loss += scale * loss_and_backward(net, scene.image, scene.labels, scene.existence,
                                              c.bg_weight, grads, scale,
                                              c.exist_weight);
    }
    if (!std::isfinite(batch_loss)) throw TrainingError("loss diverged", step);

    const double lr = poly_lr(c.base_lr, step, c.steps, c.poly_power);
    auto w = net.parameters();
    auto g = grads.parameters();
    auto v = velocity.parameters();
    for (std::size_t blk = 0; blk < w.size(); ++blk)
      for (std::size_t e = 0; e < w[blk].size(); ++e) {
        const double d = g[blk][e] + c.weight_decay * w[blk][e];
        v[blk][e] = c.momentum * v[blk][e] + d;
        w[blk][e] -= lr * v[blk][e];
      }

    StepLog entry{step, lr, batch_loss};
    result.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return result;
}

HeldOutReport evaluate_heldout(const TinyNet& net, const SceneConfig& scene_cfg,
                               std::size_t scenes, std::uint64_t seed, double iou_threshold,
                               double width, std::size_t row_step) {
  HeldOutReport r;
  for (std::size_t i = 0; i < scenes; ++i) {
    const auto scene = gen_scene(derive_seed(seed, kHeldOutStream, i), scene_cfg);
    const NetOutput out = forward_net(net, scene.image);
    r.mean_loss += loss(out, scene) / static_cast<double>(scenes);
    const auto preds = decode(out.probmaps, out.existence, row_step);
    const auto c = match_and_score(preds, scene.ground_truth(), scene.rows(), scene.cols(),
                                   iou_threshold, width);
    r.counts.tp += c.tp;
    r.counts.fp += c.fp;
    r.counts.fn += c.fn;
  }
  r.f1 = fmeasure(r.counts.tp, r.counts.fp, r.counts.fn);
  return r;
}

}  // namespace scnn
