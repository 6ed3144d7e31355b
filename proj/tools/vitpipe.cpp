/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// vitpipe: integer ViT inference, table construction, pipeline simulation and
// resource analysis from one binary.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vitpipe/attention_graph.hpp"
#include "vitpipe/bundle.hpp"
#include "vitpipe/model.hpp"
#include "vitpipe/resource.hpp"
#include "vitpipe/sim.hpp"
#include "vitpipe/table_set.hpp"

#ifndef VITPIPE_DATA_DIR
#define VITPIPE_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vitpipe;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDomain = 2, kIo = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Logging -------------------------------------------------------------------

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("VITPIPE_LOG_LEVEL");
    const std::string v = env ? env : "warn";
    if (v == "error") return Level::kError;
    if (v == "info") return Level::kInfo;
    if (v == "debug") return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

void log(Level l, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (l <= log_level()) std::cerr << "[vitpipe " << names[static_cast<int>(l)] << "] " << msg << "\n";
}

// Shared helpers ------------------------------------------------------------

struct Common {
  std::string preset = "deit-tiny";
  std::string bits = "a4w4";
  std::string parallelism;
  double clock_hz = 425e6;
  int jobs = 1;
};

ModelConfig make_config(const Common& c) {
  ModelConfig cfg = ModelConfig::preset(c.preset);
  apply_bit_regime(cfg, c.bits);
  cfg.validate();
  return cfg;
}

ParallelismConfig load_parallelism(const Common& c) {
  if (c.parallelism.empty()) return ParallelismConfig::deit_tiny();
  try {
    return parallelism_from_json(read_json(c.parallelism));
  } catch (const BundleError& e) {
    throw IoError(e.what());
  }
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  return out;
}

void add_common(CLI::App* cmd, Common& c, bool with_parallelism) {
  cmd->add_option("--preset", c.preset, "Model preset: deit-tiny, deit-small, toy, toy-mha")
      ->capture_default_str();
  cmd->add_option("--bits", c.bits, "Bit regime: a4w4, a3w3, a8w8")->capture_default_str();
  if (with_parallelism) {
    cmd->add_option("--parallelism", c.parallelism, "Parallelism JSON (default: built-in DeiT-tiny rows)");
    cmd->add_option("--clock", c.clock_hz, "Clock frequency in Hz")->capture_default_str();
  }
}

// tables --------------------------------------------------------------------

struct TablesArgs {
  Common common;
  bool synthetic = false;
  std::string samples;
  bool no_calibration = false;
  int n = 6;
  uint64_t seed = 1;
  std::string out = "vitpipe_tables";
};

void print_table_line(std::ostream& os, const std::string& name, const LutTable& t, const TableError& e) {
  os << "  " << std::left << std::setw(14) << name << std::right << " range [" << t.alpha << ", " << t.beta
     << "] s_pot " << t.s_pot << (t.inverted ? " inverted" : "") << "  repeated " << repeated_entries(t)
     << "  max_abs " << e.max_abs << "  mse " << e.mse << "\n";
}

int cmd_tables(const TablesArgs& a) {
  if (!a.synthetic && a.samples.empty()) throw UsageError("tables: pass --samples FILE or --synthetic");
  const ModelConfig cfg = make_config(a.common);
  std::vector<FamilySamples> samples;
  if (!a.samples.empty()) {
    try {
      samples = samples_from_json(read_json(a.samples));
    } catch (const BundleError& e) {
      throw IoError(e.what());
    }
  } else {
    samples = synthetic_samples(cfg, a.seed);
  }
  TableSetOptions opts;
  opts.n = a.n;
  opts.calibrate = !a.no_calibration;
  opts.jobs = a.common.jobs;
  log(Level::kInfo, "building tables for " + cfg.name + (opts.calibrate ? " with" : " without") + " calibration");
  const TableSet set = build_table_set(cfg, samples, opts);

  const fs::path dir = ensure_dir(a.out);
  const fs::path tdir = ensure_dir((dir / "tables").string());
  for (const FamilyReport& f : set.families) write_json(tdir / (f.name + ".json"), table_to_json(f.table));
  json seg = {{"pivot", set.recip.pivot}, {"low", table_to_json(set.recip.low)}, {"high", table_to_json(set.recip.high)}};
  write_json(tdir / "recip.json", seg);
  write_json(tdir / "recip_single.json", table_to_json(set.recip_single));
  json report = set.report();
  report["preset"] = cfg.name;
  report["bits"] = a.common.bits;
  report["calibrated"] = opts.calibrate;
  report["samples"] = a.samples.empty() ? json("synthetic") : json(a.samples);
  write_json(dir / "report.json", report);

  std::cout << "tables: " << cfg.name << " " << a.common.bits << (opts.calibrate ? ", calibrated" : ", raw range")
            << "\n";
  for (const FamilyReport& f : set.families) print_table_line(std::cout, f.name, f.table, f.error);
  print_table_line(std::cout, "recip.low", set.recip.low, set.recip_error);
  print_table_line(std::cout, "recip.high", set.recip.high, set.recip_error);
  print_table_line(std::cout, "recip_single", set.recip_single, set.recip_single_error);
  std::cout << "recip mse: segmented " << set.recip_error.mse << " vs single " << set.recip_single_error.mse << "\n"
            << "repeated entries: " << set.repeated_entries() << "\n"
            << "wrote " << (dir / "report.json").string() << "\n";
  return kOk;
}

// infer ---------------------------------------------------------------------

struct InferArgs {
  Common common;
  std::string model_dir;
  bool init_model = false;
  uint64_t seed = 0;
  int calib_images = 4;
  std::string save_model;
  std::string input;
  std::optional<uint64_t> random_input;
  std::string out;
  bool oracle = false;
  bool ops_only = false;
};

struct PointError {
  double max_abs = 0.0;
  double steps = 0.0;
};

std::map<std::string, PointError> compare_trace(const ActivationTrace& ints, const ActivationTrace& ref,
                                                const std::map<std::string, QuantFormat>& formats) {
  std::map<std::string, PointError> out;
  for (const auto& [name, x] : ints) {
    const auto r = ref.find(name);
    if (r == ref.end() || r->second.rows() != x.rows() || r->second.cols() != x.cols()) continue;
    PointError e;
    e.max_abs = (x - r->second).cwiseAbs().maxCoeff();
    const auto f = formats.find(name);
    e.steps = f != formats.end() && f->second.scale > 0.0 ? e.max_abs / f->second.scale : 0.0;
    out[name] = e;
  }
  return out;
}

Probe capture_probe(ActivationTrace& into, Probe inner = {}) {
  return [&into, inner](std::string_view point, Eigen::MatrixXd& x) {
    if (inner) inner(point, x);
    into[std::string(point)] = x;
  };
}

int argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

int cmd_infer(const InferArgs& a) {
  if (a.model_dir.empty() == !a.init_model && !a.ops_only) {
    throw UsageError("infer: pass exactly one of --model DIR or --init-model");
  }
  if (!a.input.empty() && a.random_input) throw UsageError("infer: --input and --random-input are exclusive");

  std::optional<Bundle> bundle;
  ModelConfig cfg;
  if (!a.model_dir.empty()) {
    bundle = load_bundle(a.model_dir);
    cfg = bundle->model.cfg;
  } else {
    cfg = make_config(a.common);
  }
  const OpCounts ops = count_ops(cfg);
  std::cout << "model: " << cfg.name << " (" << cfg.blocks << " blocks, T=" << cfg.tokens() << ", C=" << cfg.embed
            << ", A" << cfg.act_bits << "W" << cfg.weight_bits << ")\n"
            << "ops: " << std::fixed << std::setprecision(3) << static_cast<double>(ops.ops()) / 1e9 << " GOPs ("
            << ops.macs << " MACs)\n"
            << std::defaultfloat;
  if (a.ops_only) return kOk;

  if (!bundle) {
    Bundle b;
    b.float_params = FloatParams::random(cfg, a.seed);
    std::vector<Eigen::MatrixXd> calib;
    for (int i = 0; i < a.calib_images; ++i) calib.push_back(random_image(cfg, a.seed + 1000 + static_cast<uint64_t>(i)));
    log(Level::kInfo, "quantizing on " + std::to_string(calib.size()) + " calibration images");
    b.model = quantize_model(cfg, *b.float_params, calib);
    bundle = std::move(b);
  }
  if (!a.save_model.empty()) {
    save_bundle(a.save_model, bundle->model, bundle->float_params ? &*bundle->float_params : nullptr);
    std::cout << "saved model to " << a.save_model << "\n";
  }

  Eigen::MatrixXd image;
  if (!a.input.empty()) {
    image = load_image(a.input, cfg);
  } else {
    image = random_image(cfg, a.random_input.value_or(a.seed + 7));
  }

  const IntModel& m = bundle->model;
  ActivationTrace trace;
  const ForwardResult res = m.forward(image, a.oracle ? &trace : nullptr);
  const Eigen::VectorXd real = res.real_logits();
  json out{{"model", cfg.name},
           {"logits", std::vector<int32_t>(res.logits.data(), res.logits.data() + res.logits.size())},
           {"logit_scale", res.logit_scale},
           {"argmax", argmax(real)},
           {"macs", res.ops.macs},
           {"ops", res.ops.ops()}};
  std::cout << "argmax: " << argmax(real) << "\n";

  if (a.oracle) {
    const auto formats = m.point_formats();
    ActivationTrace fq;
    const Eigen::VectorXd fq_logits =
        reference_forward(cfg, m.dequantized_params(), image, capture_probe(fq, fake_quant_probe(formats)));
    const auto errs = compare_trace(trace, fq, formats);
    json table = json::array();
    std::map<std::string, PointError> per_block;
    for (const auto& [name, e] : errs) {
      table.push_back({{"point", name}, {"max_abs_err", e.max_abs}, {"max_err_steps", e.steps}});
      const std::string block = name.rfind("blocks.", 0) == 0 ? name.substr(0, name.find('.', 7)) : name;
      PointError& b = per_block[block];
      b.max_abs = std::max(b.max_abs, e.max_abs);
      b.steps = std::max(b.steps, e.steps);
    }
    json oracle{{"reference", "fake-quant float"}, {"points", table}, {"reference_argmax", argmax(fq_logits)}};
    std::cout << "oracle (fake-quant float reference), max error per block:\n";
    for (const auto& [block, e] : per_block) {
      std::cout << "  " << std::left << std::setw(12) << block << std::right << " max_abs " << e.max_abs
                << "  steps " << e.steps << "\n";
    }
    std::cout << "reference argmax: " << argmax(fq_logits) << "\n";
    if (bundle->float_params) {
      const Eigen::VectorXd fl = reference_forward(cfg, *bundle->float_params, image);
      oracle["float_argmax"] = argmax(fl);
      std::cout << "float argmax: " << argmax(fl) << "\n";
    }
    out["oracle"] = oracle;
  }
  if (!a.out.empty()) {
    if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path().string());
    write_json(a.out, out);
    std::cout << "wrote " << a.out << "\n";
  }
  return kOk;
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  Common common;
  int64_t images = 5;
  int64_t blocks = 1;
  bool no_mlp = false;
  int64_t deep_depth = 512;
  std::vector<std::string> fifo_depths;
  std::string min_depth;
  std::string out = "vitpipe_sim";
  std::string graph;
};

std::vector<int> match_channels(const Graph& g, const std::string& name) {
  std::vector<int> ids;
  for (size_t i = 0; i < g.channels.size(); ++i) {
    const std::string& c = g.channels[i].name;
    const bool suffix = c.size() > name.size() && c.compare(c.size() - name.size(), name.size(), name) == 0 &&
                        c[c.size() - name.size() - 1] == '.';
    if (c == name || suffix) ids.push_back(static_cast<int>(i));
  }
  if (ids.empty()) throw UsageError("no channel named " + name);
  return ids;
}

int cmd_simulate(const SimulateArgs& a) {
  if (a.images < 1) throw UsageError("simulate: --images must be positive");
  const ModelConfig cfg = make_config(a.common);
  const ParallelismConfig p = load_parallelism(a.common);
  GraphOptions go;
  go.blocks = a.blocks;
  go.mlp = !a.no_mlp;
  go.deep_fifo_depth = a.deep_depth;
  Graph g = build_attention_graph(cfg, p, go);
  for (const std::string& spec : a.fifo_depths) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw UsageError("--fifo-depth expects NAME=DEPTH, got " + spec);
    int64_t depth = 0;
    try {
      depth = std::stoll(spec.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("--fifo-depth: bad depth in " + spec);
    }
    for (int id : match_channels(g, spec.substr(0, eq))) g.channels[static_cast<size_t>(id)].depth = depth;
  }
  g.validate();

  SimOptions so;
  so.images = a.images;
  log(Level::kInfo, "simulating " + std::to_string(g.stages.size()) + " stages, " + std::to_string(a.images) + " images");
  const SimTrace t = simulate(g, so);

  const fs::path dir = ensure_dir(a.out);
  {
    std::ofstream csv = open_out(dir / "timeline.csv");
    export_timeline_csv(t, g, csv);
  }
  json summary = summary_json(t, g);
  std::vector<int64_t> iis;
  for (const StageParallelism& s : p.stages) iis.push_back(stage_ii(s));
  summary["analytic_ii"] = accelerator_ii(iis);
  summary["blocks"] = a.blocks;

  if (!a.min_depth.empty()) {
    const std::vector<int> ids = match_channels(g, a.min_depth);
    const int ch = ids.front();
    const int64_t tiles = g.stages[static_cast<size_t>(g.channels[static_cast<size_t>(ch)].from)].firings_per_image;
    const int64_t hi = std::max<int64_t>(4 * tiles, g.channels[static_cast<size_t>(ch)].depth);
    SimOptions probe = so;
    probe.images = std::max<int64_t>(a.images, 5);
    Graph wide = g;
    wide.channels[static_cast<size_t>(ch)].depth = hi;
    const SimTrace best = simulate(wide, probe);
    json search{{"channel", g.channels[static_cast<size_t>(ch)].name}, {"tiles_per_image", tiles}, {"upper", hi}};
    search["min_depth_completes"] = min_fifo_depth(g, ch, 1, hi, probe, a.common.jobs);
    if (const auto ii = best.stable_ii()) {
      search["stable_ii_at_upper"] = *ii;
      search["min_depth_full_throughput"] = min_fifo_depth_for_ii(g, ch, 1, hi, *ii, probe, a.common.jobs);
    }
    summary["depth_search"] = search;
    std::cout << "depth search on " << search["channel"].get<std::string>() << ": completes at "
              << search["min_depth_completes"] << " tiles";
    if (search.contains("min_depth_full_throughput")) {
      std::cout << ", full throughput at " << search["min_depth_full_throughput"] << " tiles";
    }
    std::cout << " (" << tiles << " tiles per image)\n";
  }
  write_json(dir / "summary.json", summary);
  if (!a.graph.empty()) write_json(a.graph, graph_to_json(g));

  std::cout << "status: " << to_string(t.status) << "\n";
  if (t.status != SimStatus::kCompleted) {
    std::ostringstream blocked;
    for (int s : t.blocked_stages) blocked << " " << g.stages[static_cast<size_t>(s)].name;
    std::cerr << "simulation " << to_string(t.status) << " at cycle " << t.end_cycle << "; blocked:" << blocked.str()
              << "\n";
    return kDomain;
  }
  const auto ii = t.stable_ii();
  std::cout << "stable II: " << (ii ? std::to_string(*ii) : std::string("not reached")) << " cycles\n"
            << "image 0 fill latency: " << t.images.front().latency() << " cycles\n"
            << "overlapped: " << (t.overlapped() ? "true" : "false") << "\n"
            << "wrote " << (dir / "summary.json").string() << "\n";
  return kOk;
}

// analyze -------------------------------------------------------------------

struct AnalyzeArgs {
  Common common;
  std::string scenarios = std::string(VITPIPE_DATA_DIR) + "/roofline_scenarios.json";
  int64_t tensor_brams = 14;
  int64_t pipo_stages = 6;
  std::string out = "vitpipe_analysis";
};

int cmd_analyze(const AnalyzeArgs& a) {
  const ModelConfig cfg = make_config(a.common);
  const ParallelismConfig p = load_parallelism(a.common);
  std::vector<RooflineScenario> scenarios;
  try {
    scenarios = scenarios_from_json(read_json(a.scenarios));
  } catch (const BundleError& e) {
    throw IoError(e.what());
  }

  json report;
  report["table"] = resource_report(p, cfg.weight_bits);
  const BalanceReport bal = balance_report(p);
  json brows = json::array();
  for (const BalanceRow& r : bal.rows) brows.push_back({{"name", r.name}, {"ii", r.ii}, {"bubble", r.bubble}});
  report["balance"] = {{"rows", brows}, {"bottleneck", bal.bottleneck}, {"accelerator_ii", bal.accelerator_ii}};

  const double ops = static_cast<double>(count_ops(cfg).ops());
  const Throughput tp = throughput(bal.accelerator_ii, a.common.clock_hz, ops);
  report["throughput"] = {{"clock_hz", a.common.clock_hz},
                          {"ops_per_inference", ops},
                          {"images_per_s", tp.images_per_s},
                          {"gops", tp.ops_per_s / 1e9}};

  // Hybrid residual buffer sized by simulation: the smallest deep FIFO that keeps the
  // pipeline at its stable II, rounded up to whole tensors.
  const Graph g = build_attention_graph(cfg, p);
  const int ch = g.channel_id("b0.residual");
  const int64_t tiles = g.stages[static_cast<size_t>(g.channels[static_cast<size_t>(ch)].from)].firings_per_image;
  SimOptions so;
  so.images = 6;
  so.record_events = false;
  const SimTrace base = simulate(g, so);
  const auto ii = base.stable_ii();
  if (!ii) throw std::domain_error("analyze: reference graph does not reach a stable II");
  const int64_t depth = min_fifo_depth_for_ii(g, ch, 1, 4 * tiles, *ii, so, a.common.jobs);
  const int64_t tensors = (depth + tiles - 1) / tiles;
  const BufferComparison bc = compare_residual_buffers(a.pipo_stages, a.tensor_brams, tensors);
  report["buffer_comparison"] = {{"pipo_stages", bc.pipo_stages},
                                 {"tensor_brams", bc.tensor_brams},
                                 {"pipo_brams", bc.pipo_brams},
                                 {"hybrid_depth_tiles", depth},
                                 {"tiles_per_tensor", tiles},
                                 {"hybrid_tensors", bc.hybrid_tensors},
                                 {"hybrid_brams", bc.hybrid_brams},
                                 {"reduction", bc.reduction()}};

  const DspEstimate dsp = naive_dsp_estimate(cfg, p, CostTable::defaults());
  json dl = json::array();
  for (const DspLine& l : dsp.lines) {
    dl.push_back({{"function", l.function}, {"site", l.site}, {"units", l.units}, {"dsp_per_unit", l.dsp_per_unit},
                  {"total", l.total()}});
  }
  report["naive_dsp"] = {{"lines", dl}, {"total", dsp.total()}};

  json roof = json::array();
  const fs::path dir = ensure_dir(a.out);
  {
    std::ofstream csv = open_out(dir / "roofline.csv");
    csv << "scenario,compute_ceiling,bandwidth,intensity,attainable\n";
    for (const RooflineScenario& s : scenarios) {
      const double r = roofline(s);
      csv << '"' << s.name << '"' << "," << s.compute_ceiling << "," << s.bandwidth << "," << s.intensity << "," << r
          << "\n";
      roof.push_back({{"name", s.name}, {"attainable", r}, {"intensity", s.intensity}});
    }
  }
  report["roofline"] = roof;
  report["recorded"] = recorded_measurements();
  write_json(dir / "report.json", report);

  std::cout << std::left << std::setw(6) << "block" << std::setw(15) << "stage" << std::right << std::setw(10) << "MOPs"
            << std::setw(6) << "P" << std::setw(8) << "II" << std::setw(7) << "#BRAM" << std::setw(8) << "eta" << "\n";
  for (const json& r : report["table"]["rows"]) {
    std::cout << std::left << std::setw(6) << r["block"].get<std::string>() << std::setw(15)
              << r["name"].get<std::string>() << std::right << std::setw(10) << std::fixed << std::setprecision(2)
              << r["MOPs"].get<double>() << std::setw(6) << r["P"].get<int64_t>() << std::setw(8)
              << r["II"].get<int64_t>() << std::setw(7)
              << (r["brams"].is_null() ? std::string("-") : std::to_string(r["brams"].get<int64_t>())) << std::setw(8)
              << (r["eta"].is_null() ? std::string("-") : std::to_string(r["eta"].get<double>()).substr(0, 5))
              << "\n";
  }
  std::cout << std::defaultfloat << std::setprecision(6) << "accelerator II: " << bal.accelerator_ii << " cycles (bottleneck "
            << bal.bottleneck << ")\n"
            << "ideal throughput: " << tp.images_per_s << " images/s, " << tp.ops_per_s / 1e9 << " GOP/s\n"
            << "residual buffers: PIPO " << bc.pipo_brams << " BRAMs vs hybrid " << bc.hybrid_brams << " BRAMs ("
            << std::setprecision(3) << 100.0 * bc.reduction() << "% reduction)\n"
            << "naive non-linear DSPs: " << dsp.total() << "\n";
  for (const json& r : roof) {
    std::cout << "roofline " << r["name"].get<std::string>() << ": " << r["attainable"].get<double>() / 1e12
              << " TOP/s\n";
  }
  std::cout << "wrote " << (dir / "report.json").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vitpipe: integer ViT inference, table construction, pipeline simulation and resource analysis"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI run configuration; command-line flags win");
  int jobs = 1;
  app.add_option("--jobs,-j", jobs, "Worker threads for table builds and depth-search probes")
      ->check(CLI::PositiveNumber);

  TablesArgs ta;
  CLI::App* tables = app.add_subcommand("tables", "Build and calibrate the five table families");
  add_common(tables, ta.common, false);
  auto* syn = tables->add_flag("--synthetic", ta.synthetic, "Use synthetic calibration samples");
  tables->add_option("--samples", ta.samples, "Calibration samples JSON")->excludes(syn);
  tables->add_flag("--no-calibration", ta.no_calibration, "Build tables on the raw sample min/max");
  tables->add_option("--n", ta.n, "Index bits per table")->capture_default_str();
  tables->add_option("--seed", ta.seed, "Seed for synthetic samples")->capture_default_str();
  tables->add_option("--out", ta.out, "Output directory")->capture_default_str();

  InferArgs ia;
  CLI::App* infer = app.add_subcommand("infer", "Run integer inference");
  add_common(infer, ia.common, false);
  infer->add_option("--model", ia.model_dir, "Model bundle directory");
  infer->add_flag("--init-model", ia.init_model, "Quantize randomly initialized float weights");
  infer->add_option("--seed", ia.seed, "Seed for --init-model")->capture_default_str();
  infer->add_option("--calib-images", ia.calib_images, "Calibration images for --init-model")
      ->check(CLI::PositiveNumber);
  infer->add_option("--save-model", ia.save_model, "Write the model bundle here");
  infer->add_option("--input", ia.input, "Image JSON");
  infer->add_option("--random-input", ia.random_input, "Use a random image with this seed");
  infer->add_option("--out", ia.out, "Logits JSON");
  infer->add_flag("--oracle", ia.oracle, "Compare every quantization point against the float reference");
  infer->add_flag("--ops-only", ia.ops_only, "Print the operation count and exit");

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "Simulate the attention and MLP pipeline");
  add_common(sim, sa.common, true);
  sim->add_option("--images", sa.images, "Images to stream")->capture_default_str();
  sim->add_option("--blocks", sa.blocks, "Transformer blocks to chain")->check(CLI::PositiveNumber);
  sim->add_flag("--no-mlp", sa.no_mlp, "Attention half only");
  sim->add_option("--deep-depth", sa.deep_depth, "Depth of the deep FIFOs in tiles")->capture_default_str();
  sim->add_option("--fifo-depth", sa.fifo_depths, "Override a channel depth: NAME=DEPTH (repeatable)");
  sim->add_option("--min-depth", sa.min_depth, "Search the smallest working depth of this channel");
  sim->add_option("--out", sa.out, "Output directory")->capture_default_str();
  sim->add_option("--graph", sa.graph, "Also write the graph JSON here");

  AnalyzeArgs aa;
  CLI::App* analyze = app.add_subcommand("analyze", "Resource, buffer, DSP and roofline report");
  add_common(analyze, aa.common, true);
  analyze->add_option("--scenarios", aa.scenarios, "Roofline scenario JSON")->capture_default_str();
  analyze->add_option("--tensor-brams", aa.tensor_brams, "BRAMs per residual tensor")->capture_default_str();
  analyze->add_option("--pipo-stages", aa.pipo_stages, "PIPO stages on the residual path")->capture_default_str();
  analyze->add_option("--out", aa.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  ta.common.jobs = ia.common.jobs = sa.common.jobs = aa.common.jobs = jobs;

  try {
    if (*tables) return cmd_tables(ta);
    if (*infer) return cmd_infer(ia);
    if (*sim) return cmd_simulate(sa);
    if (*analyze) return cmd_analyze(aa);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const BundleError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomain;
  }
  return kUsage;
}
