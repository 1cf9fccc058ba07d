#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cmc/error.hpp"
#include "cmc/evalx.hpp"
#include "cmc/features.hpp"
#include "cmc/forest.hpp"
#include "cmc/image_io.hpp"
#include "cmc/parallel.hpp"
#include "cmc/phantom.hpp"
#include "cmc/pipelines.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cmc::cli {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  int threads = 0;
  std::string config_path;
  json config = json::object();

  void load() {
    if (config_path.empty()) return;
    try {
      config = json::parse(read_text_file(config_path));
    } catch (const json::exception& e) {
      throw FormatError("config " + config_path + ": " + e.what());
    }
    if (!config.is_object()) throw FormatError("config " + config_path + ": expected a JSON object");
  }
  json section(const char* name) const { return config.value(name, json::object()); }
};

std::string crc_hex(std::uint32_t crc) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

std::vector<fs::path> case_dirs(const fs::path& data) {
  if (fs::exists(data / "truth.json")) return {data};
  std::vector<fs::path> out;
  if (!fs::is_directory(data)) throw IoError("data directory not found: " + data.string());
  for (const auto& e : fs::directory_iterator(data))
    if (e.is_directory() && fs::exists(e.path() / "truth.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw InvalidInput("no phantom cases (truth.json) under " + data.string());
  return out;
}

// --- phantom -----------------------------------------------------------------

struct PhantomArgs {
  std::string out;
  int cases = 1;
  double sigma = 3.0;
  int group = 2;
  std::uint64_t seed = 1;
};

int cmd_phantom(const PhantomArgs& a, const Common& c, std::ostream& out) {
  const PhantomConfig pcfg = phantom_config_from_json(c.section("phantom"));
  if (a.cases < 1) throw UsageError("--cases must be >= 1");
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw IoError("cannot create output directory " + a.out);
  parallel_for(static_cast<std::size_t>(a.cases), c.threads, [&](std::size_t i) {
    const PhantomCase clean = generate_phantom(pcfg, derive_seed(a.seed, i));
    const PhantomCase motion = inject_motion(clean, a.sigma, a.group, derive_seed(a.seed ^ 0x6d6f74696f6eULL, i));
    char name[32];
    std::snprintf(name, sizeof name, "case_%03zu", i);
    write_case(fs::path(a.out) / name, motion, clean);
  });
  out << "wrote " << a.cases << " case(s) to " << a.out << "\n";
  return kOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string kind, data, out;
  int trees = 8;
  std::size_t samples = 200000;
  std::uint64_t seed = 1;
  CLI::Option* trees_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

int cmd_train(const TrainArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  const ModelKind kind = kind_from_name(a.kind);
  ForestConfig fcfg = forest_config_from_json(c.section("forest"));
  if (a.trees_opt->count() || !c.section("forest").contains("n_trees")) fcfg.n_trees = a.trees;
  if (a.seed_opt->count() || !c.section("forest").contains("seed")) fcfg.seed = a.seed;
  fcfg.threads = c.threads;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<PhantomCase> cases;
  for (const auto& d : case_dirs(a.data)) cases.push_back(read_case(d, true));
  std::vector<const PhantomCase*> ptrs;
  for (const auto& pc : cases) ptrs.push_back(&pc);
  TrainingOptions opt;
  opt.seed = derive_seed(fcfg.seed, 0x7261696eULL);
  opt.threads = c.threads;
  TrainingSet ts = build_training_set(ptrs, kind, a.samples, opt);
  const HybridForest forest = train_forest(ts, fcfg);
  for (std::size_t t = 0; t < forest.trees.size(); ++t)
    err << "tree " << t << ": depth " << forest.trees[t].depth() << ", nodes " << forest.trees[t].nodes.size()
        << ", leaves " << forest.trees[t].leaves.size() << "\n";
  if (const fs::path parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_model(a.out, forest);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "trained " << kind_name(kind) << " model (" << forest.trees.size() << " trees, " << a.samples
      << " samples) -> " << a.out << " in " << secs << " s\n";
  return kOk;
}

// --- correct -----------------------------------------------------------------

struct CorrectArgs {
  std::string mode, stack, la, models, out;
  bool overlays = false;
  bool repredict = false;
};

std::vector<PlanarImage> read_la(const fs::path& dir) {
  std::vector<PlanarImage> la;
  for (int v = 0; v < kLongAxisViews; ++v) {
    const fs::path p = dir / (std::string("la_") + kViewNames[v]);
    if (!fs::exists(p / "header.json")) throw InvalidInput("missing long-axis view " + p.string());
    la.push_back(read_image(p));
  }
  return la;
}

int cmd_correct(const CorrectArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  if (a.mode != "la-psm" && a.mode != "3d-psm" && a.mode != "la-int")
    throw UsageError("--mode must be one of la-psm, 3d-psm, la-int");
  const bool needs_la = a.mode != "3d-psm";
  if (needs_la && a.la.empty()) throw UsageError("--mode " + a.mode + " requires --la");
  if (a.mode != "la-int" && a.models.empty()) throw UsageError("--mode " + a.mode + " requires --models");
  PipelineConfig cfg = pipeline_config_from_json(c.section("pipeline"));
  if (a.repredict) cfg.repredict = true;
  cfg.threads = c.threads;

  const auto t0 = std::chrono::steady_clock::now();
  const SliceStack stack = read_stack(a.stack);
  json inputs{{"stack", crc_hex(file_crc32(fs::path(a.stack) / "data.raw"))}};
  std::vector<PlanarImage> la;
  if (needs_la) {
    la = read_la(a.la);
    for (int v = 0; v < kLongAxisViews; ++v)
      inputs[std::string("la_") + kViewNames[v]] =
          crc_hex(file_crc32(fs::path(a.la) / (std::string("la_") + kViewNames[v]) / "data.raw"));
  }
  auto load = [&](const char* name) {
    const fs::path p = fs::path(a.models) / (std::string(name) + ".camf");
    inputs[std::string("model_") + name] = crc_hex(file_crc32(p));
    return load_model(p);
  };
  MotionEstimate m;
  if (a.mode == "la-psm") {
    const HybridForest sa2d = load("sa2d");
    const HybridForest l2 = load("la2ch"), l3 = load("la3ch"), l4 = load("la4ch");
    m = mc_la_psm(stack, la, sa2d, LaModels{{&l2, &l3, &l4}}, cfg);
  } else if (a.mode == "3d-psm") {
    const HybridForest sa2d = load("sa2d");
    const HybridForest sa3d = load("sa3d");
    m = mc_3d_psm(stack, sa2d, sa3d, cfg);
  } else {
    m = mc_la_intensity(stack, la, cfg);
  }
  m.config["inputs"] = inputs;
  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "motion.json", motion_json_text(m));
  const SliceStack corrected = apply_motion(stack, m);
  write_stack(fs::path(a.out) / "corrected", corrected, {{"motion", m.method}});
  if (a.overlays) {
    fs::create_directories(fs::path(a.out) / "overlays");
    for (std::size_t k = 0; k < corrected.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "slice_%02zu.pgm", k);
      export_pgm(fs::path(a.out) / "overlays" / name, corrected[k]);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  err << a.mode << ": " << m.iterations << " iteration(s), converged " << (m.converged ? "yes" : "no") << ", "
      << secs << " s wall\n";
  out << "wrote " << (fs::path(a.out) / "motion.json").string() << "\n";
  return kOk;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  std::string reference, stack_seg, motion, out;
};

int cmd_evaluate(const EvaluateArgs& a, const Common& c, std::ostream& out) {
  EvalConfig cfg = eval_config_from_json(c.section("eval"));
  cfg.threads = c.threads;
  const Volume ref = read_volume(a.reference);
  const SliceStack seg = read_stack(a.stack_seg);
  MotionEstimate m;
  try {
    m = motion_from_json(json::parse(read_text_file(a.motion)));
  } catch (const json::exception& e) {
    throw FormatError("motion file: " + std::string(e.what()));
  }
  if (m.slices.size() != seg.size())
    throw InvalidInput("motion estimate has " + std::to_string(m.slices.size()) + " slices, segmentation stack has " +
                       std::to_string(seg.size()));
  EvalReport rep = evaluate_correction(ref, seg, m.translations(), cfg);
  rep.provenance["inputs"] = {{"reference", crc_hex(file_crc32(fs::path(a.reference) / "data.raw"))},
                              {"stack_seg", crc_hex(file_crc32(fs::path(a.stack_seg) / "data.raw"))},
                              {"motion", crc_hex(file_crc32(a.motion))}};
  rep.provenance["method"] = m.method;
  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "report.json", report_json_text(rep));
  write_text_file(fs::path(a.out) / "report.csv", report_csv(rep));
  write_text_file(fs::path(a.out) / "report.md", report_markdown(rep));
  out << report_markdown(rep);
  return kOk;
}

// --- inspect -----------------------------------------------------------------

struct InspectArgs {
  std::string path;
  std::string dump_channels;
};

int cmd_inspect(const InspectArgs& a, const Common&, std::ostream& out) {
  const fs::path p(a.path);
  if (fs::is_regular_file(p)) {
    const HybridForest f = load_model(p);
    json j = to_json(f.meta);
    json trees = json::array();
    for (const auto& t : f.trees)
      trees.push_back({{"depth", t.depth()}, {"nodes", t.nodes.size()}, {"leaves", t.leaves.size()}});
    j["trees"] = trees;
    j["crc32"] = crc_hex(file_crc32(p));
    out << j.dump(2) << "\n";
    return kOk;
  }
  const json header = read_header(p);
  out << header.dump(2) << "\n";
  if (!a.dump_channels.empty()) {
    const std::string kind = header.value("kind", std::string("stack"));
    if (kind != "stack") throw InvalidInput("--dump-channels expects a stack or image directory");
    const SliceStack s = read_stack(p);
    const FeatureChannels ch = compute_channels(s[0]);
    for (int i = 0; i < ch.channel_count(); ++i)
      write_image(fs::path(a.dump_channels) / ch.ids()[i], ch.channel_image(i, s[0]), {{"channel", ch.ids()[i]}});
    out << "wrote " << ch.channel_count() << " channels of slice 0 to " << a.dump_channels << "\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inter-slice motion correction for short-axis cardiac MR stacks"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (0 = all cores); outputs do not depend on it")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", common.config_path, "JSON config (sections: phantom, forest, pipeline, eval)");

  PhantomArgs pa;
  auto* ph = app.add_subcommand("phantom", "Generate synthetic phantom cases");
  ph->add_option("--out", pa.out, "Output directory")->required();
  ph->add_option("--cases", pa.cases, "Number of cases");
  ph->add_option("--motion-sigma", pa.sigma, "Per-group shift sd (mm)")->check(CLI::NonNegativeNumber);
  ph->add_option("--group", pa.group, "Slices per breath-hold")->check(CLI::Range(1, 3));
  ph->add_option("--seed", pa.seed, "Master seed");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a hybrid forest on phantom cases");
  tr->add_option("--kind", ta.kind, "Model kind")->required()->check(CLI::IsMember({"la2ch", "la3ch", "la4ch", "sa2d", "sa3d"}));
  tr->add_option("--data", ta.data, "Case directory or directory of cases")->required();
  tr->add_option("--out", ta.out, "Output model file (.camf)")->required();
  ta.trees_opt = tr->add_option("--trees", ta.trees, "Number of trees")->check(CLI::PositiveNumber);
  tr->add_option("--samples", ta.samples, "Training samples")->check(CLI::PositiveNumber);
  ta.seed_opt = tr->add_option("--seed", ta.seed, "Seed");

  CorrectArgs ca;
  auto* co = app.add_subcommand("correct", "Run a motion-correction pipeline");
  co->add_option("--mode", ca.mode, "la-psm | 3d-psm | la-int")->required();
  co->add_option("--stack", ca.stack, "SA stack directory")->required();
  co->add_option("--la", ca.la, "Directory holding la_2ch, la_3ch, la_4ch");
  co->add_option("--models", ca.models, "Directory with <kind>.camf models");
  co->add_option("--out", ca.out, "Output directory")->required();
  co->add_flag("--overlays", ca.overlays, "Write PGM previews of the corrected slices");
  co->add_flag("--repredict", ca.repredict, "Re-run SA 2D inference every iteration");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a motion estimate against the reference segmentation");
  ev->add_option("--reference", ea.reference, "Reference segmentation volume directory")->required();
  ev->add_option("--stack-seg", ea.stack_seg, "SA segmentation stack (before correction)")->required();
  ev->add_option("--motion", ea.motion, "motion.json")->required();
  ev->add_option("--out", ea.out, "Output directory")->required();

  InspectArgs ia;
  auto* in = app.add_subcommand("inspect", "Print image headers or model metadata");
  in->add_option("path", ia.path, "Model file or image directory")->required();
  in->add_option("--dump-channels", ia.dump_channels, "Write the feature channels of slice 0 to this directory");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    common.load();
    if (*ph) return cmd_phantom(pa, common, out);
    if (*tr) return cmd_train(ta, common, out, err);
    if (*co) return cmd_correct(ca, common, out, err);
    if (*ev) return cmd_evaluate(ea, common, out);
    if (*in) return cmd_inspect(ia, common, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const UndefinedMetric& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace cmc::cli
