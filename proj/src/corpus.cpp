#include "scnn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "scnn/vendor_json.hpp"

namespace scnn {

namespace {

constexpr std::uint64_t kCorpusStream = 7;

std::string numbered(std::size_t i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return std::string(buf) + suffix;
}

// Lane-shaped response: Gaussian across the centre line, damped under
// occluders, plus clipped noise.
Tensor3 synth_probmaps(const SyntheticScene& scene, bool lanes_visible, std::mt19937_64& rng) {
  const std::size_t L = scene.lane_count(), H = scene.rows(), W = scene.cols();
  Tensor3 p = Tensor3::zeros(L + 1, H, W, Precision::Float32);
  std::normal_distribution<double> noise(0.0, 0.03);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sigma = 3.0;
  for (std::size_t l = 0; l < L && lanes_visible; ++l) {
    const double peak = 0.75 + 0.2 * unit(rng);
    for (std::size_t j = 0; j < H; ++j) {
      const double cx = scene.centres[l][j].x;
      for (std::size_t k = 0; k < W; ++k) {
        const double d = static_cast<double>(k) - cx;
        double v = peak * std::exp(-d * d / (2.0 * sigma * sigma));
        if (scene.occlusion[j * W + k]) v *= 0.2;
        p(l + 1, j, k) = v;
      }
    }
  }
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = 0; j < H; ++j)
      for (std::size_t k = 0; k < W; ++k)
        p(l + 1, j, k) = std::clamp(p(l + 1, j, k) + noise(rng), 0.0, 1.0);
  for (std::size_t j = 0; j < H; ++j)
    for (std::size_t k = 0; k < W; ++k) {
      double rest = 1.0;
      for (std::size_t l = 0; l < L; ++l) rest -= p(l + 1, j, k);
      p(0, j, k) = std::max(rest, 0.0);
    }
  // Storage is 32-bit; keep the in-memory values identical to what is saved.
  for (double& v : p.data()) v = static_cast<float>(v);
  return p;
}

// A diagonal streak with a confident existence score, the kind of response
// a detector produces at a crossroad.
void add_spurious_lane(Tensor3& p, std::size_t lane, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double H = static_cast<double>(p.rows()), W = static_cast<double>(p.cols());
  const double x0 = W * (0.2 + 0.6 * unit(rng));
  const double x1 = W * (0.2 + 0.6 * unit(rng));
  for (std::size_t j = 0; j < p.rows(); ++j) {
    const double cx = x0 + (x1 - x0) * static_cast<double>(j) / H;
    for (std::size_t k = 0; k < p.cols(); ++k) {
      const double d = static_cast<double>(k) - cx;
      const double v = 0.8 * std::exp(-d * d / 18.0);
      p(lane, j, k) = static_cast<float>(std::max(p(lane, j, k), v));
      p(0, j, k) = static_cast<float>(std::max(0.0, p(0, j, k) - v));
    }
  }
}

}  // namespace

std::vector<CorpusEntry> generate_corpus(const CorpusConfig& cfg,
                                         const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "probmaps");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pred");

  std::vector<CorpusEntry> entries;
  nlohmann::json manifest = nlohmann::json::array();
  std::ofstream list(dir / kListName, std::ios::trunc);
  if (!list) throw Error("cannot write list file in " + dir.string());

  for (std::size_t i = 0; i < cfg.images; ++i) {
    const bool crossroad = i % 5 == 4;
    const bool occluded = !crossroad && i % 5 >= 2;
    SceneConfig sc = cfg.scene;
    sc.occlusion_rate = occluded ? cfg.occlusion_rate : 0.0;
    const SyntheticScene scene = gen_scene(derive_seed(cfg.seed, kCorpusStream, i), sc);
    std::mt19937_64 rng(derive_seed(cfg.seed, kCorpusStream + 1, i));

    Tensor3 probs = synth_probmaps(scene, !crossroad, rng);
    Tensor3 exist = Tensor3::zeros(1, 1, sc.lanes, Precision::Float32);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CurveFile gt{sc.cols, sc.rows, "image", {}};
    if (crossroad) {
      // Lanes absent; one spurious streak passes the existence gate.
      add_spurious_lane(probs, 1, rng);
      exist(0, 0, 0) = static_cast<float>(0.7 + 0.2 * unit(rng));
      for (std::size_t l = 1; l < sc.lanes; ++l)
        exist(0, 0, l) = static_cast<float>(0.2 * unit(rng));
      for (std::size_t l = 0; l < sc.lanes; ++l) gt.lanes.push_back({static_cast<int>(l + 1), false, {}, {}});
    } else {
      for (std::size_t l = 0; l < sc.lanes; ++l)
        exist(0, 0, l) = static_cast<float>(0.6 + 0.35 * unit(rng));
      gt.lanes = scene.ground_truth();
    }

    CorpusEntry e{"probmaps/" + numbered(i, ".probmap.scnt"),
                  "probmaps/" + numbered(i, ".exist.scnt"),
                  "pred/" + numbered(i, ".json"), "gt/" + numbered(i, ".json"),
                  crossroad ? "crossroad" : (occluded ? "occluded" : "normal")};
    save(probs, dir / e.probmap);
    save(exist, dir / e.existence);
    save_curves(gt, dir / e.ground_truth);
    list << e.prediction << ' ' << e.ground_truth << ' ' << e.category << '\n';
    manifest.push_back({{"probmap", e.probmap},
                        {"existence", e.existence},
                        {"prediction", e.prediction},
                        {"ground_truth", e.ground_truth},
                        {"category", e.category}});
    entries.push_back(std::move(e));
  }
  std::ofstream mf(dir / kManifestName, std::ios::trunc);
  if (!mf) throw Error("cannot write manifest in " + dir.string());
  mf << nlohmann::json{{"seed", cfg.seed},
                       {"images", cfg.images},
                       {"occlusion_rate", cfg.occlusion_rate},
                       {"entries", manifest}}
            .dump(2)
     << '\n';
  return entries;
}

CurveFile extract_curves(const std::filesystem::path& probmap_file,
                         const std::filesystem::path& existence_file,
                         const ExtractParams& params) {
  const Tensor3 probs = load(probmap_file);
  const Tensor3 exist = load(existence_file);
  const std::vector<double> e(exist.data().begin(), exist.data().end());
  CurveFile out{probs.cols(), probs.rows(), "probmap", {}};
  out.lanes = decode(probs, e, params.row_step, params.exist_threshold, params.response_floor);
  return out;
}

std::vector<CorpusEntry> load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open manifest " + manifest.string());
  try {
    nlohmann::json j;
    in >> j;
    std::vector<CorpusEntry> entries;
    for (const auto& ej : j.at("entries"))
      entries.push_back({ej.at("probmap").get<std::string>(),
                         ej.at("existence").get<std::string>(),
                         ej.at("prediction").get<std::string>(),
                         ej.at("ground_truth").get<std::string>(),
                         ej.at("category").get<std::string>()});
    return entries;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed manifest " + manifest.string() + ": " + e.what());
  }
}

void extract_corpus(const std::filesystem::path& manifest, const ExtractParams& params) {
  const auto base = manifest.parent_path();
  for (const auto& e : load_manifest(manifest))
    save_curves(extract_curves(base / e.probmap, base / e.existence, params),
                base / e.prediction);
}

}  // namespace scnn
