// Command-line front end. Every subcommand prints one JSON document on
// stdout that echoes the fully resolved configuration.
//
// Exit codes: 0 success, 1 domain error (or a failed check), 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scnn/corpus.hpp"
#include "scnn/costbench.hpp"
#include "scnn/laneval.hpp"
#include "scnn/scnn.hpp"
#include "scnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_dims(const std::string& s, std::size_t n, const char* flag) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": expected positive integers, got '" + s + "'");
    }
  }
  if (out.size() != n)
    throw UsageError(std::string(flag) + ": expected " + std::to_string(n) +
                     " comma-separated values, got '" + s + "'");
  return out;
}

// Names of options that were left at a default the method does not fix.
json impl_defaults(const CLI::App& sub, const std::set<std::string>& names) {
  json out = json::array();
  for (const auto& n : names) {
    const CLI::Option* o = sub.get_option_no_throw("--" + n);
    if (o == nullptr || o->count() == 0) out.push_back(n);
  }
  return out;
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string dims = "2,5,4";
  std::size_t w = 3;
  std::string dir = "down";
  std::string scheme = "seq";
  std::uint64_t seed = 1;
  double kink_margin = 1e-3;
};

int run_gradcheck(const CLI::App& sub, const GradcheckArgs& a) {
  const auto d = parse_dims(a.dims, 3, "--dims");
  const scnn::PropagationConfig cfg{scnn::parse_direction(a.dir), scnn::parse_scheme(a.scheme)};
  const auto r = scnn::gradcheck(d[0], d[1], d[2], a.w, cfg, a.seed, a.kink_margin);
  emit({{"command", "gradcheck"},
        {"config",
         {{"dims", d},
          {"w", a.w},
          {"dir", scnn::to_string(cfg.direction)},
          {"scheme", scnn::to_string(cfg.scheme)},
          {"seed", a.seed},
          {"kink_margin", a.kink_margin},
          {"step", scnn::kGradcheckStep},
          {"tolerance", scnn::kGradcheckTolerance},
          {"impl_default", impl_defaults(sub, {"dims", "w", "dir", "scheme", "seed",
                                               "kink-margin"})}}},
        {"pass", r.pass},
        {"max_rel_err", r.max_rel_err},
        {"max_rel_err_x", r.max_rel_err_x},
        {"max_rel_err_k", r.max_rel_err_k},
        {"checked", r.checked},
        {"draws", r.draws}});
  return r.pass ? 0 : kExitDomain;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string method = "scnn";
  std::string shape = "128,36,100";
  std::size_t w = 9;
  std::size_t iters = 10;
  std::size_t kernel = 21;
  int reps = 3;
  int warmup = 1;
  std::uint64_t seed = 0;
};

int run_bench_cmd(const CLI::App& sub, const BenchArgs& a) {
  const auto d = parse_dims(a.shape, 3, "--shape");
  scnn::BenchSpec spec;
  spec.method = scnn::parse_bench_method(a.method);
  spec.channels = d[0];
  spec.rows = d[1];
  spec.cols = d[2];
  spec.width = a.w;
  spec.iterations = a.iters;
  spec.kernel_size = a.kernel;
  spec.repetitions = a.reps;
  spec.warmup = a.warmup;
  spec.seed = a.seed;
  json j = scnn::to_json(scnn::run_bench(spec));
  j["command"] = "bench";
  j["impl_default"] = impl_defaults(sub, {"shape", "kernel", "reps", "warmup", "seed"});
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::int64_t steps = 300;
  std::size_t batch = 4;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  double bg_weight = 0.4;
  double exist_weight = 0.1;
  std::uint64_t seed = 11;
  std::size_t rows = 64;
  std::size_t cols = 96;
  std::size_t lanes = 1;
  double occlusion = 0.5;
  double stroke = 8.0;
  std::size_t hidden = 8;
  std::size_t layers = 4;
  bool scnn = false;
  std::string insertion = "top_hidden";
  std::size_t w = 9;
  std::string order = "DULR";
  std::size_t heldout = 40;
  std::uint64_t heldout_seed = 999;
  std::string checkpoint;
  std::int64_t log_every = 0;
};

int run_train(const CLI::App& sub, const TrainArgs& a) {
  scnn::TrainConfig c;
  c.steps = a.steps;
  c.batch = a.batch;
  c.base_lr = a.lr;
  c.momentum = a.momentum;
  c.weight_decay = a.weight_decay;
  c.poly_power = a.poly_power;
  c.bg_weight = a.bg_weight;
  c.exist_weight = a.exist_weight;
  c.seed = a.seed;
  c.scene.rows = a.rows;
  c.scene.cols = a.cols;
  c.scene.lanes = a.lanes;
  c.scene.occlusion_rate = a.occlusion;
  c.scene.stroke_width = a.stroke;
  c.net.hidden = a.hidden;
  c.net.conv_layers = a.layers;
  c.net.lanes = a.lanes;
  c.net.scnn_width = a.w;
  c.net.scnn_order = a.order;
  const auto insertion = scnn::parse_insertion(a.insertion);

  json log = json::array();
  const auto result = scnn::train(c, a.scnn, insertion, [&](const scnn::StepLog& s) {
    if (a.log_every > 0 && (s.step % a.log_every == 0 || s.step + 1 == c.steps))
      log.push_back({{"step", s.step}, {"lr", s.lr}, {"loss", s.loss}});
  });
  if (!a.checkpoint.empty()) result.net.save(a.checkpoint);

  json cfg = scnn::to_json(c);
  cfg["use_scnn"] = a.scnn;
  cfg["net"] = scnn::to_json(result.net.config());
  cfg["heldout"] = a.heldout;
  cfg["heldout_seed"] = a.heldout_seed;
  cfg["impl_default"] =
      impl_defaults(sub, {"steps", "batch", "exist-weight", "seed", "rows", "cols", "lanes",
                          "occlusion", "stroke", "hidden", "layers", "insertion", "order",
                          "heldout", "heldout-seed"});
  json out{{"command", "train-toy"},
           {"config", cfg},
           {"parameters", result.net.parameter_count()},
           {"initial_loss", result.log.empty() ? json(nullptr) : json(result.log.front().loss)},
           {"final_loss", result.log.empty() ? json(nullptr) : json(result.log.back().loss)}};
  if (a.log_every > 0) out["log"] = log;
  if (a.heldout > 0) {
    const auto h = scnn::evaluate_heldout(result.net, c.scene, a.heldout, a.heldout_seed);
    out["heldout"] = {{"tp", h.counts.tp},
                      {"fp", h.counts.fp},
                      {"fn", h.counts.fn},
                      {"f1", h.f1},
                      {"mean_loss", h.mean_loss}};
  }
  if (!a.checkpoint.empty()) out["checkpoint"] = a.checkpoint;
  emit(out);
  return 0;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string probmap;
  std::string exist;
  std::string out;
  std::string manifest;
  std::size_t row_step = scnn::kDefaultRowStep;
  double exist_threshold = scnn::kDefaultExistThreshold;
  double floor = scnn::kDefaultResponseFloor;
};

int run_extract(const CLI::App& sub, const ExtractArgs& a) {
  const scnn::ExtractParams p{a.row_step, a.exist_threshold, a.floor};
  json cfg{{"row_step", p.row_step},
           {"exist_threshold", p.exist_threshold},
           {"floor", p.response_floor},
           {"impl_default", impl_defaults(sub, {"floor"})}};
  if (!a.manifest.empty()) {
    if (!a.probmap.empty() || !a.exist.empty() || !a.out.empty())
      throw UsageError("--manifest cannot be combined with --probmap/--exist/--out");
    scnn::extract_corpus(a.manifest, p);
    cfg["manifest"] = a.manifest;
    emit({{"command", "extract"},
          {"config", cfg},
          {"files", scnn::load_manifest(a.manifest).size()}});
    return 0;
  }
  if (a.probmap.empty() || a.exist.empty() || a.out.empty())
    throw UsageError("extract needs --manifest or all of --probmap, --exist and --out");
  const auto curves = scnn::extract_curves(a.probmap, a.exist, p);
  scnn::save_curves(curves, a.out);
  cfg["probmap"] = a.probmap;
  cfg["exist"] = a.exist;
  cfg["out"] = a.out;
  std::size_t present = 0;
  for (const auto& l : curves.lanes) present += l.exists;
  emit({{"command", "extract"}, {"config", cfg}, {"lanes", curves.lanes.size()},
        {"present", present}});
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string list;
  double iou = scnn::kDefaultIouThreshold;
  double width = scnn::kDefaultStrokeWidth;
};

int run_eval(const CLI::App&, const EvalArgs& a) {
  const auto report = scnn::evaluate_corpus(a.list, a.iou, a.width);
  json j = scnn::to_json(report);
  j["command"] = "eval";
  j["config"] = {{"list", a.list},
                 {"iou", a.iou},
                 {"width", a.width},
                 {"fp_only", scnn::default_fp_only_categories()},
                 {"impl_default", json::array({"fp_only"})}};
  emit(j);
  return report.ok() ? 0 : kExitDomain;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::size_t n = 10;
  std::uint64_t seed = 3;
  double occlusion = 0.5;
  std::string out;
  std::size_t rows = 96;
  std::size_t cols = 160;
  std::size_t lanes = 2;
};

int run_gen(const CLI::App& sub, const GenArgs& a) {
  scnn::CorpusConfig c;
  c.images = a.n;
  c.seed = a.seed;
  c.occlusion_rate = a.occlusion;
  c.scene.rows = a.rows;
  c.scene.cols = a.cols;
  c.scene.lanes = a.lanes;
  const auto entries = scnn::generate_corpus(c, a.out);
  emit({{"command", "gen-corpus"},
        {"config",
         {{"n", a.n},
          {"seed", a.seed},
          {"occlusion", a.occlusion},
          {"out", a.out},
          {"rows", a.rows},
          {"cols", a.cols},
          {"lanes", a.lanes},
          {"impl_default",
           impl_defaults(sub, {"n", "seed", "occlusion", "rows", "cols", "lanes"})}}},
        {"images", entries.size()},
        {"list", (fs::path(a.out) / scnn::kListName).string()},
        {"manifest", (fs::path(a.out) / scnn::kManifestName).string()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial message-passing toolkit: gradient checks, cost benchmarks, "
               "toy training and lane evaluation"};
  app.require_subcommand(1);

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the SCNN backward pass");
  gc->add_option("--dims", ga.dims, "C,H,W")->capture_default_str();
  gc->add_option("--w", ga.w, "Kernel width (odd)")->capture_default_str();
  gc->add_option("--dir", ga.dir, "down|up|right|left")->capture_default_str();
  gc->add_option("--scheme", ga.scheme, "seq|par")->capture_default_str();
  gc->add_option("--seed", ga.seed)->capture_default_str();
  gc->add_option("--kink-margin", ga.kink_margin, "Redraw if a pre-activation is this close to 0")
      ->capture_default_str();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time SCNN (DULR) or the mean-field baseline");
  bench->add_option("--method", ba.method, "scnn|meanfield")->capture_default_str();
  bench->add_option("--shape", ba.shape, "C,H,W")->capture_default_str();
  bench->add_option("--w", ba.w)->capture_default_str();
  bench->add_option("--iters", ba.iters, "Mean-field iterations")->capture_default_str();
  bench->add_option("--kernel", ba.kernel, "Mean-field message kernel size")
      ->capture_default_str();
  bench->add_option("--reps", ba.reps)->capture_default_str();
  bench->add_option("--warmup", ba.warmup)->capture_default_str();
  bench->add_option("--seed", ba.seed)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "Train the toy lane segmenter on synthetic scenes");
  tr->add_option("--steps", ta.steps)->capture_default_str();
  tr->add_option("--batch", ta.batch)->capture_default_str();
  tr->add_option("--lr", ta.lr)->capture_default_str();
  tr->add_option("--momentum", ta.momentum)->capture_default_str();
  tr->add_option("--weight-decay", ta.weight_decay)->capture_default_str();
  tr->add_option("--poly-power", ta.poly_power)->capture_default_str();
  tr->add_option("--bg-weight", ta.bg_weight)->capture_default_str();
  tr->add_option("--exist-weight", ta.exist_weight)->capture_default_str();
  tr->add_option("--seed", ta.seed)->capture_default_str();
  tr->add_option("--rows", ta.rows)->capture_default_str();
  tr->add_option("--cols", ta.cols)->capture_default_str();
  tr->add_option("--lanes", ta.lanes)->capture_default_str();
  tr->add_option("--occlusion", ta.occlusion)->capture_default_str();
  tr->add_option("--stroke", ta.stroke, "Label stroke width")->capture_default_str();
  tr->add_option("--hidden", ta.hidden)->capture_default_str();
  tr->add_option("--layers", ta.layers, "Hidden 3x3 conv layers")->capture_default_str();
  tr->add_flag("--scnn", ta.scnn, "Insert an SCNN stack");
  tr->add_option("--insertion", ta.insertion, "top_hidden|output")->capture_default_str();
  tr->add_option("--w", ta.w)->capture_default_str();
  tr->add_option("--order", ta.order)->capture_default_str();
  tr->add_option("--heldout", ta.heldout, "Held-out scenes to score (0 to skip)")
      ->capture_default_str();
  tr->add_option("--heldout-seed", ta.heldout_seed)->capture_default_str();
  tr->add_option("--checkpoint", ta.checkpoint, "Directory for the trained parameters");
  tr->add_option("--log-every", ta.log_every, "Record every n-th step in the output")
      ->capture_default_str();

  ExtractArgs ea;
  auto* ex = app.add_subcommand("extract", "Decode probmaps into lane curve files");
  ex->add_option("--probmap", ea.probmap);
  ex->add_option("--exist", ea.exist);
  ex->add_option("--out", ea.out);
  ex->add_option("--manifest", ea.manifest, "Process every entry of a corpus manifest");
  ex->add_option("--row-step", ea.row_step)->capture_default_str();
  ex->add_option("--exist-threshold", ea.exist_threshold)->capture_default_str();
  ex->add_option("--floor", ea.floor, "Minimum row peak response")->capture_default_str();

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Score prediction curves against ground truth");
  ev->add_option("--list", va.list, "Lines of '<pred> <gt> <category>'")->required();
  ev->add_option("--iou", va.iou)->capture_default_str();
  ev->add_option("--width", va.width)->capture_default_str();

  GenArgs gn;
  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic probmap/ground-truth corpus");
  gen->add_option("--n", gn.n)->capture_default_str();
  gen->add_option("--seed", gn.seed)->capture_default_str();
  gen->add_option("--occlusion", gn.occlusion)->capture_default_str();
  gen->add_option("--out", gn.out)->required();
  gen->add_option("--rows", gn.rows)->capture_default_str();
  gen->add_option("--cols", gn.cols)->capture_default_str();
  gen->add_option("--lanes", gn.lanes)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gc) return run_gradcheck(*gc, ga);
    if (*bench) return run_bench_cmd(*bench, ba);
    if (*tr) return run_train(*tr, ta);
    if (*ex) return run_extract(*ex, ea);
    if (*ev) return run_eval(*ev, va);
    if (*gen) return run_gen(*gen, gn);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const scnn::TrainingError& e) {
    std::cerr << "error: " << e.what() << " at step " << e.step() << '\n';
    return kExitDomain;
  } catch (const scnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}
