#include "scnn/tinynet.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "scnn/meanfield.hpp"

namespace scnn {

std::string_view to_string(Insertion i) noexcept {
  return i == Insertion::TopHidden ? "top_hidden" : "output";
}

Insertion parse_insertion(std::string_view s) {
  std::string v(s);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "top_hidden" || v == "tophidden" || v == "top" || v == "hidden")
    return Insertion::TopHidden;
  if (v == "output" || v == "out") return Insertion::Output;
  throw ConfigError("unknown insertion point '" + std::string(s) + "'");
}

void NetConfig::validate() const {
  if (hidden == 0 || conv_layers == 0 || lanes == 0)
    throw ConfigError("hidden width, layer count and lane count must be positive");
  if (use_scnn) {
    if (scnn_width == 0 || scnn_width % 2 == 0) throw ConfigError("SCNN width must be odd");
    if (scnn_order.empty()) throw ConfigError("SCNN order must not be empty");
    for (char c : scnn_order) parse_direction(std::string_view(&c, 1));
  }
}

nlohmann::json to_json(const NetConfig& c) {
  return {{"hidden", c.hidden},
          {"conv_layers", c.conv_layers},
          {"lanes", c.lanes},
          {"use_scnn", c.use_scnn},
          {"insertion", std::string(to_string(c.insertion))},
          {"scnn_width", c.scnn_width},
          {"scnn_order", c.scnn_order},
          {"scnn_scheme", std::string(to_string(c.scnn_scheme))},
          {"scnn_init_scale", c.scnn_init_scale},
          {"zero_classifier", c.zero_classifier},
          {"zero_scnn", c.zero_scnn}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.conv_layers = j.at("conv_layers").get<std::size_t>();
  c.lanes = j.at("lanes").get<std::size_t>();
  c.use_scnn = j.at("use_scnn").get<bool>();
  c.insertion = parse_insertion(j.at("insertion").get<std::string>());
  c.scnn_width = j.at("scnn_width").get<std::size_t>();
  c.scnn_order = j.at("scnn_order").get<std::string>();
  c.scnn_scheme = parse_scheme(j.at("scnn_scheme").get<std::string>());
  c.scnn_init_scale = j.value("scnn_init_scale", NetConfig{}.scnn_init_scale);
  c.zero_classifier = j.value("zero_classifier", false);
  c.zero_scnn = j.value("zero_scnn", false);
  return c;
}

namespace {

ConvLayer make_conv(std::size_t in, std::size_t out, std::size_t ksize,
                    std::mt19937_64* rng) {
  ConvLayer l{in, out, ksize, std::vector<double>(out * in * ksize * ksize, 0.0),
              std::vector<double>(out, 0.0)};
  if (rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in * ksize * ksize));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : l.weight) v = dist(*rng);
  }
  return l;
}

Tensor3 conv_forward(const ConvLayer& l, const Tensor3& in) {
  const std::size_t H = in.rows(), W = in.cols(), k = l.ksize;
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  Tensor3 out = Tensor3::zeros(l.out, H, W);
  for (std::size_t o = 0; o < l.out; ++o) {
    auto oc = out.channel(o);
    std::fill(oc.begin(), oc.end(), l.bias[o]);
    for (std::size_t c = 0; c < l.in; ++c) {
      const double* ic = in.channel(c).data();
      const double* wk = l.weight.data() + (o * l.in + c) * k * k;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(h, h - dy);
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const double kv = wk[(dy + r) * static_cast<std::ptrdiff_t>(k) + dx + r];
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            double* dst = oc.data() + y * w;
            const double* src = ic + (y + dy) * w + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] += kv * src[x];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients into `g`; returns dL/dinput when asked.
Tensor3 conv_backward(const ConvLayer& l, const Tensor3& in, const Tensor3& dout,
                      ConvLayer& g, double scale, bool want_input_grad) {
  const std::size_t H = in.rows(), W = in.cols(), k = l.ksize;
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  Tensor3 din;
  if (want_input_grad) din = Tensor3::zeros(l.in, H, W);
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* go = dout.channel(o).data();
    double bsum = 0.0;
    for (std::size_t e = 0; e < H * W; ++e) bsum += go[e];
    g.bias[o] += scale * bsum;
    for (std::size_t c = 0; c < l.in; ++c) {
      const double* ic = in.channel(c).data();
      double* dc = want_input_grad ? din.channel(c).data() : nullptr;
      const double* wk = l.weight.data() + (o * l.in + c) * k * k;
      double* gk = g.weight.data() + (o * l.in + c) * k * k;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(h, h - dy);
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          const std::ptrdiff_t tap = (dy + r) * static_cast<std::ptrdiff_t>(k) + dx + r;
          const double kv = wk[tap];
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
          double acc = 0.0;
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* gr = go + y * w;
            const double* src = ic + (y + dy) * w + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) acc += gr[x] * src[x];
            if (dc) {
              double* d = dc + (y + dy) * w + dx;
              for (std::ptrdiff_t x = x0; x < x1; ++x) d[x] += kv * gr[x];
            }
          }
          gk[tap] += scale * acc;
        }
      }
    }
  }
  return din;
}

Tensor3 relu(const Tensor3& z) {
  Tensor3 a = z;
  for (double& v : a.data()) v = std::max(v, 0.0);
  return a;
}

}  // namespace

TinyNet::TinyNet(const NetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = 1;
  for (std::size_t l = 0; l < cfg_.conv_layers; ++l) {
    convs_.push_back(make_conv(in, cfg_.hidden, 3, &rng));
    in = cfg_.hidden;
  }
  classifier_ = make_conv(cfg_.hidden, cfg_.lanes + 1, 1, cfg_.zero_classifier ? nullptr : &rng);
  if (cfg_.use_scnn)
    stack_ = make_stack(cfg_.scnn_order, cfg_.scnn_channels(), cfg_.scnn_width,
                        cfg_.scnn_scheme, cfg_.zero_scnn ? nullptr : &rng,
                        cfg_.scnn_init_scale);
}

TinyNet TinyNet::zeros_like() const {
  TinyNet z = *this;
  for (auto block : z.parameters()) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

std::vector<std::span<double>> TinyNet::parameters() {
  std::vector<std::span<double>> out;
  for (auto& c : convs_) {
    out.emplace_back(c.weight);
    out.emplace_back(c.bias);
  }
  for (auto& l : stack_.layers) out.push_back(l.kernel.data());
  out.emplace_back(classifier_.weight);
  out.emplace_back(classifier_.bias);
  return out;
}

std::vector<std::span<const double>> TinyNet::parameters() const {
  std::vector<std::span<const double>> out;
  for (auto block : const_cast<TinyNet*>(this)->parameters()) out.emplace_back(block);
  return out;
}

std::vector<std::string> TinyNet::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    names.push_back("layer" + std::to_string(i) + ".weight");
    names.push_back("layer" + std::to_string(i) + ".bias");
  }
  std::map<char, int> seen;
  for (const auto& l : stack_.layers) {
    const char d = direction_letter(l.config.direction);
    const int n = seen[d]++;
    names.push_back("scnn." + std::string(1, d) + (n ? std::to_string(n) : "") + ".kernel");
  }
  names.push_back("classifier.weight");
  names.push_back("classifier.bias");
  return names;
}

std::size_t TinyNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (auto block : parameters()) n += block.size();
  return n;
}

void TinyNet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto names = parameter_names();
  const auto blocks = parameters();
  std::vector<std::size_t> dims;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& name = names[b];
    std::vector<double> v(blocks[b].begin(), blocks[b].end());
    if (name.ends_with(".kernel")) {
      const std::size_t c = cfg_.scnn_channels();
      scnn::save(Tensor3::from_data(c, c, cfg_.scnn_width, std::move(v)), dir / name, kKernelMagic);
    } else if (name.ends_with(".bias")) {
      const std::size_t n = v.size();
      scnn::save(Tensor3::from_data(1, 1, n, std::move(v)), dir / name);
    } else {
      const ConvLayer& l = name.starts_with("classifier") ? classifier_
                           : convs_[std::stoul(name.substr(5))];
      scnn::save(Tensor3::from_data(l.out, l.in, l.ksize * l.ksize, std::move(v)), dir / name);
    }
  }
  nlohmann::json manifest{{"architecture", to_json(cfg_)},
                          {"parameters", names},
                          {"parameter_count", parameter_count()}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

TinyNet TinyNet::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  NetConfig cfg = net_config_from_json(manifest.at("architecture"));
  std::mt19937_64 rng(0);
  TinyNet net(cfg, rng);
  const auto names = net.parameter_names();
  auto blocks = net.parameters();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const bool kernel = names[b].ends_with(".kernel");
    const Tensor3 t = scnn::load(dir / names[b], kernel ? kKernelMagic : kTensorMagic);
    if (t.size() != blocks[b].size())
      throw ShapeError(names[b] + ": expected " + std::to_string(blocks[b].size()) +
                       " values, found " + std::to_string(t.size()));
    std::copy(t.data().begin(), t.data().end(), blocks[b].begin());
  }
  return net;
}

NetOutput forward_net(const TinyNet& net, const Tensor3& image, ForwardCache* cache) {
  const NetConfig& cfg = net.config();
  if (image.channels() != 1) throw ShapeError("TinyNet expects a single-channel image");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.activations.assign(1, image);
  c.preacts.clear();
  for (const auto& layer : net.convs()) {
    c.preacts.push_back(conv_forward(layer, c.activations.back()));
    c.activations.push_back(relu(c.preacts.back()));
  }
  const bool hidden_stack = cfg.use_scnn && cfg.insertion == Insertion::TopHidden;
  const bool output_stack = cfg.use_scnn && cfg.insertion == Insertion::Output;
  c.features = hidden_stack ? scnn_stack_forward(c.activations.back(), net.stack())
                            : c.activations.back();
  c.scores = conv_forward(net.classifier(), c.features);
  c.logits = output_stack ? scnn_stack_forward(c.scores, net.stack()) : c.scores;
  c.probmaps = softmax_channels(c.logits);

  const std::size_t L = cfg.lanes, H = image.rows(), W = image.cols();
  c.existence.assign(L, 0.0);
  c.row_peaks.assign(L * H, 0);
  for (std::size_t l = 0; l < L; ++l) {
    double sum = 0.0;
    for (std::size_t j = 0; j < H; ++j) {
      const double* row = &c.probmaps.data()[c.probmaps.offset(l + 1, j, 0)];
      const auto best = static_cast<std::size_t>(std::max_element(row, row + W) - row);
      c.row_peaks[l * H + j] = best;
      sum += row[best];
    }
    c.existence[l] = sum / static_cast<double>(H);
  }
  return {c.probmaps, c.existence};
}

namespace {

constexpr double kProbFloor = 1e-12;

double bce(double e, bool target) {
  const double v = std::clamp(e, kProbFloor, 1.0 - kProbFloor);
  return target ? -std::log(v) : -std::log(1.0 - v);
}

}  // namespace

LossTerms loss_terms(const Tensor3& probmaps, std::span<const double> existence,
                     std::span<const std::uint8_t> labels, const std::vector<bool>& exists,
                     double bg_weight) {
  const std::size_t N = probmaps.plane();
  if (labels.size() != N) throw ShapeError("label map does not match probmap size");
  if (existence.size() != exists.size() || probmaps.channels() != existence.size() + 1)
    throw ShapeError("existence size does not match probmap channels");
  LossTerms t;
  for (std::size_t px = 0; px < N; ++px) {
    const std::uint8_t lab = labels[px];
    const double p = std::max(probmaps.data()[lab * N + px], kProbFloor);
    t.pixel += (lab == 0 ? bg_weight : 1.0) * -std::log(p);
  }
  t.pixel /= static_cast<double>(N);
  for (std::size_t l = 0; l < existence.size(); ++l) t.existence += bce(existence[l], exists[l]);
  if (!existence.empty()) t.existence /= static_cast<double>(existence.size());
  return t;
}

double loss(const NetOutput& out, const SyntheticScene& scene, double bg_weight) {
  return loss_terms(out.probmaps, out.existence, scene.labels, scene.existence, bg_weight)
      .total();
}

double loss_and_backward(const TinyNet& net, const Tensor3& image,
                         std::span<const std::uint8_t> labels, const std::vector<bool>& exists,
                         double bg_weight, TinyNet& grads, double scale,
                         double exist_weight) {
  const NetConfig& cfg = net.config();
  ForwardCache c;
  forward_net(net, image, &c);
  const std::size_t L = cfg.lanes, K = L + 1, H = image.rows(), W = image.cols(), N = H * W;
  if (labels.size() != N) throw ShapeError("label map does not match image size");
  if (exists.size() != L) throw ShapeError("existence targets do not match lane count");

  // Pixel term via log-softmax of the logits for accuracy.
  const double* lg = c.logits.data().data();
  const double* pr = c.probmaps.data().data();
  Tensor3 dlogits = Tensor3::zeros(K, H, W);
  double* dl = dlogits.data().data();
  double pixel = 0.0;
  const double invN = 1.0 / static_cast<double>(N);
  for (std::size_t px = 0; px < N; ++px) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) hi = std::max(hi, lg[k * N + px]);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(lg[k * N + px] - hi);
    const std::uint8_t lab = labels[px];
    const double wpx = lab == 0 ? bg_weight : 1.0;
    pixel += wpx * (hi + std::log(s) - lg[lab * N + px]);
    for (std::size_t k = 0; k < K; ++k)
      dl[k * N + px] = wpx * invN * (pr[k * N + px] - (k == lab ? 1.0 : 0.0));
  }
  pixel *= invN;

  // Existence term reaches the probmaps only through each row's peak.
  double existence = 0.0;
  std::vector<double> gp(K * N, 0.0);
  std::vector<std::size_t> touched;
  for (std::size_t l = 0; l < L; ++l) {
    const double e = c.existence[l];
    existence += bce(e, exists[l]);
    if (e <= kProbFloor || e >= 1.0 - kProbFloor) continue;
    const double de = exist_weight * (e - (exists[l] ? 1.0 : 0.0)) / (e * (1.0 - e)) /
                      static_cast<double>(L);
    for (std::size_t j = 0; j < H; ++j) {
      const std::size_t px = j * W + c.row_peaks[l * H + j];
      gp[(l + 1) * N + px] += de / static_cast<double>(H);
      touched.push_back(px);
    }
  }
  existence *= exist_weight / static_cast<double>(L);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (std::size_t px : touched) {
    double dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) dot += gp[k * N + px] * pr[k * N + px];
    for (std::size_t k = 0; k < K; ++k)
      dl[k * N + px] += pr[k * N + px] * (gp[k * N + px] - dot);
  }

  const bool hidden_stack = cfg.use_scnn && cfg.insertion == Insertion::TopHidden;
  const bool output_stack = cfg.use_scnn && cfg.insertion == Insertion::Output;

  Tensor3 dscores = std::move(dlogits);
  if (output_stack) {
    auto sg = scnn_stack_backward(c.scores, net.stack(), dscores);
    for (std::size_t i = 0; i < sg.grad_k.size(); ++i) {
      auto dst = grads.stack().layers[i].kernel.data();
      auto src = sg.grad_k[i].data();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += scale * src[e];
    }
    dscores = std::move(sg.grad_x);
  }
  Tensor3 dact = conv_backward(net.classifier(), c.features, dscores, grads.classifier(),
                               scale, true);
  if (hidden_stack) {
    auto sg = scnn_stack_backward(c.activations.back(), net.stack(), dact);
    for (std::size_t i = 0; i < sg.grad_k.size(); ++i) {
      auto dst = grads.stack().layers[i].kernel.data();
      auto src = sg.grad_k[i].data();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += scale * src[e];
    }
    dact = std::move(sg.grad_x);
  }
  for (std::size_t li = net.convs().size(); li-- > 0;) {
    const Tensor3& z = c.preacts[li];
    for (std::size_t e = 0; e < dact.size(); ++e)
      if (!(z.data()[e] > 0.0)) dact.data()[e] = 0.0;
    dact = conv_backward(net.convs()[li], c.activations[li], dact, grads.convs()[li], scale,
                         li > 0);
  }
  return pixel + existence;
}

}  // namespace scnn
