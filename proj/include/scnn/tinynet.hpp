#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scnn/scene.hpp"
#include "scnn/scnn.hpp"
#include "scnn/tensor.hpp"
#include "scnn/vendor_json.hpp"

namespace scnn {

// Where the SCNN stack sits: on the last hidden features or on the logits.
enum class Insertion { TopHidden, Output };

std::string_view to_string(Insertion i) noexcept;
Insertion parse_insertion(std::string_view s);

struct NetConfig {
  std::size_t hidden = 16;
  std::size_t conv_layers = 4;
  std::size_t lanes = 2;
  bool use_scnn = false;
  Insertion insertion = Insertion::TopHidden;
  std::size_t scnn_width = 9;
  std::string scnn_order = "DULR";
  Scheme scnn_scheme = Scheme::Sequential;
  // Kernel init bound is scale / sqrt(C * w). At 1.0 the sequential recurrence
  // can blow up early in training.
  double scnn_init_scale = 0.1;
  bool zero_classifier = false;
  bool zero_scnn = false;

  std::size_t scnn_channels() const noexcept {
    return insertion == Insertion::TopHidden ? hidden : lanes + 1;
  }
  void validate() const;
};

nlohmann::json to_json(const NetConfig& c);
NetConfig net_config_from_json(const nlohmann::json& j);

// k x k convolution (k = 3 for hidden layers, 1 for the classifier) with
// zero padding and stride 1. weight is [out][in][k*k].
struct ConvLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t ksize = 3;
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Small fully convolutional lane segmenter with an optional SCNN stack.
///
/// Classes are background (channel 0) plus one channel per lane. The
/// existence score of lane l is the mean over rows of that row's peak
/// probability in channel l.
class TinyNet {
 public:
  TinyNet() = default;
  TinyNet(const NetConfig& cfg, std::mt19937_64& rng);

  // Same architecture with every parameter set to zero.
  TinyNet zeros_like() const;

  const NetConfig& config() const noexcept { return cfg_; }
  std::size_t parameter_count() const noexcept;

  // Parameter blocks in a fixed order shared by every TinyNet with the same
  // config, so gradients and optimiser state can mirror the net.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::vector<std::string> parameter_names() const;

  std::vector<ConvLayer>& convs() noexcept { return convs_; }
  const std::vector<ConvLayer>& convs() const noexcept { return convs_; }
  ConvLayer& classifier() noexcept { return classifier_; }
  const ConvLayer& classifier() const noexcept { return classifier_; }
  ScnnStack& stack() noexcept { return stack_; }
  const ScnnStack& stack() const noexcept { return stack_; }

  void save(const std::filesystem::path& dir) const;
  static TinyNet load(const std::filesystem::path& dir);

 private:
  NetConfig cfg_;
  std::vector<ConvLayer> convs_;
  ConvLayer classifier_;
  ScnnStack stack_;
};

// Intermediate values kept for the backward pass.
struct ForwardCache {
  std::vector<Tensor3> activations;  // input, then post-ReLU of each conv
  std::vector<Tensor3> preacts;      // pre-ReLU of each conv
  Tensor3 features;                  // classifier input
  Tensor3 scores;                    // classifier output
  Tensor3 logits;                    // softmax input
  Tensor3 probmaps;
  std::vector<double> existence;
  std::vector<std::size_t> row_peaks;  // [lane][row] argmax column
};

struct NetOutput {
  Tensor3 probmaps;               // (L+1) x H x W
  std::vector<double> existence;  // L values in [0, 1]
};

NetOutput forward_net(const TinyNet& net, const Tensor3& image, ForwardCache* cache = nullptr);

inline constexpr double kBackgroundWeight = 0.4;

struct LossTerms {
  double pixel = 0.0;
  double existence = 0.0;
  double total() const noexcept { return pixel + existence; }
};

// Weighted pixel cross-entropy (background terms scaled by bg_weight,
// averaged over all pixels) plus existence BCE averaged over lanes.
LossTerms loss_terms(const Tensor3& probmaps, std::span<const double> existence,
                     std::span<const std::uint8_t> labels, const std::vector<bool>& exists,
                     double bg_weight = kBackgroundWeight);
double loss(const NetOutput& out, const SyntheticScene& scene,
            double bg_weight = kBackgroundWeight);

/// Loss and its gradient for one image; gradients are added into `grads`
/// scaled by `scale`.
/// The existence BCE enters the objective multiplied by `exist_weight`.
double loss_and_backward(const TinyNet& net, const Tensor3& image,
                         std::span<const std::uint8_t> labels,
                         const std::vector<bool>& exists, double bg_weight,
                         TinyNet& grads, double scale = 1.0, double exist_weight = 1.0);

}  // namespace scnn
