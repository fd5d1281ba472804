#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scnn/lanepost.hpp"
#include "scnn/scene.hpp"

namespace scnn {

struct CorpusConfig {
  std::size_t images = 10;
  std::uint64_t seed = 3;
  double occlusion_rate = 0.5;
  SceneConfig scene{.rows = 96, .cols = 160, .lanes = 2};
};

struct CorpusEntry {
  std::string probmap;    // tensor file, (L+1) x H x W, background first
  std::string existence;  // tensor file, 1 x 1 x L
  std::string prediction; // curve file written by extraction
  std::string ground_truth;
  std::string category;
};

/// Every fifth frame is a lane-free "crossroad" frame with spurious
/// responses; the rest alternate between "normal" (no occluders) and
/// "occluded" pairs. Probmaps imitate a detector whose response collapses
/// under occluders. Paths in the manifest are relative to `dir`.
std::vector<CorpusEntry> generate_corpus(const CorpusConfig& cfg,
                                         const std::filesystem::path& dir);

struct ExtractParams {
  std::size_t row_step = kDefaultRowStep;
  double exist_threshold = kDefaultExistThreshold;
  double response_floor = kDefaultResponseFloor;
};

CurveFile extract_curves(const std::filesystem::path& probmap_file,
                         const std::filesystem::path& existence_file,
                         const ExtractParams& params = {});

std::vector<CorpusEntry> load_manifest(const std::filesystem::path& manifest);

// Runs extraction for every manifest entry, writing its prediction file.
void extract_corpus(const std::filesystem::path& manifest, const ExtractParams& params = {});

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kListName = "list.txt";

}  // namespace scnn
