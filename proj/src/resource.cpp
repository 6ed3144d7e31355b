/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/resource.hpp"

#include <algorithm>
#include <stdexcept>

namespace vitpipe {

using nlohmann::json;

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

int64_t exact_div(int64_t total, int64_t par, const std::string& what) {
  if (par < 1 || total < 1 || total % par != 0) {
    throw std::invalid_argument(what + ": " + std::to_string(total) + " is not divisible by " +
                                std::to_string(par));
  }
  return total / par;
}

}  // namespace

int64_t StageParallelism::tt() const { return exact_div(t, tp, name + " T"); }
int64_t StageParallelism::cit() const { return exact_div(ci, cip, name + " CI"); }
int64_t StageParallelism::cot() const { return co == 0 ? 1 : exact_div(co, cop, name + " CO"); }
int64_t StageParallelism::ops() const { return t * ci * (co == 0 ? 1 : co) * passes; }

const StageParallelism& ParallelismConfig::find(std::string_view name) const {
  for (const StageParallelism& s : stages) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("parallelism config has no stage " + std::string(name));
}

ParallelismConfig ParallelismConfig::deit_tiny() {
  auto row = [](std::string name, std::string block, int64_t ci, int64_t cip, int64_t co,
                int64_t cop, int passes, bool stat) {
    return StageParallelism{std::move(name), std::move(block), 196, 2, ci, cip, co, cop, passes, stat};
  };
  ParallelismConfig p;
  p.stages = {
      row("LayerNorm", "MHA", 192, 1, 0, 1, 3, false),
      row("QKV Gen", "MHA", 192, 6, 64, 4, 1, true),
      row("QK MatMul", "MHA", 64, 4, 196, 7, 1, false),
      row("Softmax", "MHA", 196, 1, 0, 1, 3, false),
      row("RV MatMul", "MHA", 196, 7, 64, 4, 1, false),
      row("Output Proj", "MHA", 192, 12, 192, 6, 1, true),
      row("Residual Add", "MHA", 192, 1, 0, 1, 1, false),
      row("MLP LayerNorm", "MLP", 192, 1, 0, 1, 3, false),
      row("MatMul1", "MLP", 192, 12, 768, 24, 1, true),
      row("GeLU", "MLP", 768, 2, 0, 1, 1, false),
      row("MatMul2", "MLP", 768, 24, 192, 12, 1, true),
  };
  return p;
}

json parallelism_to_json(const ParallelismConfig& p) {
  json rows = json::array();
  for (const StageParallelism& s : p.stages) {
    rows.push_back({{"name", s.name},
                    {"block", s.block},
                    {"T", s.t},
                    {"TP", s.tp},
                    {"CI", s.ci},
                    {"CIP", s.cip},
                    {"CO", s.co},
                    {"COP", s.cop},
                    {"passes", s.passes},
                    {"static_weights", s.static_weights}});
  }
  return {{"stages", rows}};
}

ParallelismConfig parallelism_from_json(const json& j) {
  ParallelismConfig p;
  try {
    for (const json& r : j.at("stages")) {
      StageParallelism s;
      s.name = r.at("name").get<std::string>();
      s.block = r.value("block", std::string());
      s.t = r.at("T").get<int64_t>();
      s.tp = r.at("TP").get<int64_t>();
      s.ci = r.at("CI").get<int64_t>();
      s.cip = r.at("CIP").get<int64_t>();
      s.co = r.value("CO", int64_t{0});
      s.cop = r.value("COP", int64_t{1});
      s.passes = r.value("passes", 1);
      s.static_weights = r.value("static_weights", false);
      stage_ii(s);  // divisibility check
      p.stages.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("parallelism file: ") + e.what());
  }
  if (p.stages.empty()) throw std::invalid_argument("parallelism file: no stages");
  return p;
}

int64_t stage_ii(const TiledMatmulSpec& spec, int64_t t, int64_t ci, int64_t co, int passes) {
  if (passes < 1) throw std::invalid_argument("stage_ii: passes must be positive");
  const auto trips = spec.trips(t, ci, co);
  return trips.tt * trips.cit * trips.cot * passes;
}

int64_t stage_ii(const StageParallelism& s) {
  if (s.passes < 1) throw std::invalid_argument("stage_ii: passes must be positive");
  return s.tt() * s.cit() * s.cot() * s.passes;
}

int64_t accelerator_ii(const std::vector<int64_t>& stage_iis) {
  if (stage_iis.empty()) throw std::invalid_argument("accelerator_ii: no stages");
  return *std::max_element(stage_iis.begin(), stage_iis.end());
}

BramUsage bram_count_and_efficiency(int dw_w, int64_t cip, int64_t cop, int64_t cit, int64_t cot,
                                    const BramSpec& bram) {
  if (dw_w < 1 || cip < 1 || cop < 1 || cit < 1 || cot < 1 || bram.width < 1 || bram.depth < 1) {
    throw std::invalid_argument("bram_count_and_efficiency: arguments must be positive");
  }
  BramUsage u;
  u.brams = ceil_div(dw_w * cip * cop, bram.width) * ceil_div(cit * cot, bram.depth);
  const double useful = static_cast<double>(dw_w) * static_cast<double>(cip * cit) *
                        static_cast<double>(cop * cot);
  u.efficiency = useful / (static_cast<double>(u.brams) * static_cast<double>(bram.bits()));
  return u;
}

int64_t packed_brams(int64_t entries, int64_t word_bits, const BramSpec& bram) {
  if (entries < 0 || word_bits < 0) throw std::invalid_argument("packed_brams: negative size");
  if (entries == 0 || word_bits == 0) return 0;
  return ceil_div(word_bits, bram.width) * ceil_div(entries, bram.depth);
}

int64_t buffer_cost(const BufferSpec& b, const BramSpec& bram) {
  if (b.tile_elems < 1 || b.act_bits < 1) throw std::invalid_argument("buffer_cost: bad tile");
  const int64_t word = b.tile_elems * b.act_bits;
  switch (b.kind) {
    case BufferKind::kFifo: return packed_brams(b.fifo_depth, word, bram);
    case BufferKind::kDeepBuffer: return packed_brams(ceil_div(b.tensor_elems, b.tile_elems), word, bram);
    case BufferKind::kPipo: return 2 * packed_brams(ceil_div(b.tensor_elems, b.tile_elems), word, bram);
  }
  return 0;
}

double BufferComparison::reduction() const {
  if (pipo_brams == 0) return 0.0;
  return 1.0 - static_cast<double>(hybrid_brams) / static_cast<double>(pipo_brams);
}

BufferComparison compare_residual_buffers(int64_t pipo_stages, int64_t tensor_brams,
                                          int64_t hybrid_tensors) {
  if (pipo_stages < 0 || tensor_brams < 0 || hybrid_tensors < 0) {
    throw std::invalid_argument("compare_residual_buffers: negative input");
  }
  BufferComparison c;
  c.pipo_stages = pipo_stages;
  c.tensor_brams = tensor_brams;
  c.pipo_brams = pipo_stages * 2 * tensor_brams;
  c.hybrid_tensors = hybrid_tensors;
  c.hybrid_brams = hybrid_tensors * tensor_brams;
  return c;
}

const FunctionCost& CostTable::find(std::string_view name) const {
  for (const FunctionCost& f : functions) {
    if (f.name == name) return f;
  }
  throw std::invalid_argument("cost table has no function " + std::string(name));
}

CostTable CostTable::defaults() {
  CostTable c;
  c.functions = {
      {"Exp", 7, 945, 0, 50, 64, 8},
      {"GeLU", 26, 1650, 0, 43, 64, 3},
      {"Recip", 9, 196, 0, 72, 128, 8},
      {"Rsqrt", 8, 425, 0, 48, 64, 12},
      {"ReQuant", 1, 0, 0, 3, 64, 3},
  };
  return c;
}

int64_t DspEstimate::total() const {
  int64_t sum = 0;
  for (const DspLine& l : lines) sum += l.total();
  return sum;
}

DspEstimate naive_dsp_estimate(const ModelConfig& cfg, const ParallelismConfig& p,
                               const CostTable& cost, int requant_points) {
  DspEstimate e;
  const int64_t blocks = cfg.blocks;
  auto add = [&](const std::string& fn, const std::string& site, int64_t units) {
    if (units > 0) e.lines.push_back({fn, site, units, cost.find(fn).naive_dsp});
  };
  for (const StageParallelism& s : p.stages) {
    const std::string site = s.block + " " + s.name;
    if (s.name.find("LayerNorm") != std::string::npos) {
      add("Rsqrt", site, blocks * s.parallelism());
    } else if (s.name == "Softmax") {
      add("Exp", site, blocks * cfg.heads * s.parallelism());
      add("Recip", site, blocks * cfg.heads * s.parallelism());
    } else if (s.name == "GeLU") {
      add("GeLU", site, blocks * s.parallelism());
    }
  }
  if (!p.stages.empty()) add("ReQuant", "per-block requant sites", blocks * requant_points * p.stages.front().tp);
  return e;
}

double roofline(const RooflineScenario& s) {
  if (!(s.compute_ceiling > 0.0) || !(s.bandwidth > 0.0) || !(s.intensity > 0.0)) {
    throw std::invalid_argument("roofline: parameters must be positive");
  }
  return std::min(s.compute_ceiling, s.bandwidth * s.intensity);
}

std::vector<RooflineScenario> scenarios_from_json(const json& j) {
  std::vector<RooflineScenario> out;
  try {
    const json& pf = j.at("platform");
    RooflinePlatform plat{pf.at("dsp_ceiling").get<double>(), pf.at("lut_ceiling").get<double>(),
                          pf.at("bandwidth").get<double>()};
    for (const json& s : j.at("scenarios")) {
      RooflineScenario r;
      r.name = s.at("name").get<std::string>();
      const json& c = s.at("ceiling");
      if (c.is_number()) {
        r.compute_ceiling = c.get<double>();
      } else {
        const std::string which = c.get<std::string>();
        if (which == "dsp") {
          r.compute_ceiling = plat.dsp_ceiling;
        } else if (which == "lut") {
          r.compute_ceiling = plat.lut_ceiling;
        } else if (which == "combined") {
          r.compute_ceiling = plat.combined();
        } else {
          throw std::invalid_argument("scenario " + r.name + ": unknown ceiling " + which);
        }
      }
      r.bandwidth = s.value("bandwidth", plat.bandwidth);
      r.intensity = s.at("intensity").get<double>();
      roofline(r);  // positivity check
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario file: ") + e.what());
  }
  return out;
}

BalanceReport balance_report(const ParallelismConfig& p) {
  if (p.stages.empty()) throw std::invalid_argument("balance_report: no stages");
  BalanceReport r;
  std::vector<int64_t> iis;
  for (const StageParallelism& s : p.stages) iis.push_back(stage_ii(s));
  r.accelerator_ii = accelerator_ii(iis);
  const auto top = std::max_element(iis.begin(), iis.end()) - iis.begin();
  r.bottleneck = p.stages[static_cast<size_t>(top)].name;
  for (size_t i = 0; i < iis.size(); ++i) {
    r.rows.push_back({p.stages[i].name, iis[i],
                      1.0 - static_cast<double>(iis[i]) / static_cast<double>(r.accelerator_ii)});
  }
  return r;
}

Throughput throughput(int64_t ii, double clock_hz, double ops_per_inference) {
  if (ii < 1 || !(clock_hz > 0.0)) throw std::invalid_argument("throughput: ii and clock must be positive");
  Throughput t;
  t.images_per_s = clock_hz / static_cast<double>(ii);
  t.ops_per_s = t.images_per_s * ops_per_inference;
  return t;
}

json recorded_measurements() {
  return {
      {"note", "measured on hardware; reported for reference, not computed"},
      {"imagenet_top1", {{"a4w4", 0.7437}, {"a3w3", 0.7105}}},
      {"image1_latency_cycles", 824843},
      {"image1_latency_ms", 1.94},
      {"measured_images_per_s", 7118},
      {"measured_gops", 17795},
      {"vck190", {{"luts", 669000}, {"dsps", 312}, {"brams", 1006.5}, {"power_w", 46.7}}},
      {"normalisation",
       {{"dsp_per_aie", ComparisonConstants::kDspPerAie},
        {"bram_per_uram", ComparisonConstants::kBramPerUram},
        {"lut_per_dsp", ComparisonConstants::kLutPerDsp}}},
  };
}

json resource_report(const ParallelismConfig& p, int weight_bits, const BramSpec& bram) {
  json rows = json::array();
  std::vector<int64_t> iis;
  for (const StageParallelism& s : p.stages) {
    const int64_t ii = stage_ii(s);
    iis.push_back(ii);
    json r{{"block", s.block},
           {"name", s.name},
           {"TT", s.tt()},
           {"CIT", s.cit()},
           {"COT", s.co == 0 ? json(nullptr) : json(s.cot())},
           {"MOPs", static_cast<double>(s.ops()) / 1e6},
           {"P", s.parallelism()},
           {"II", ii}};
    if (s.co != 0) {
      const BramUsage u = bram_count_and_efficiency(weight_bits, s.cip, s.cop, s.cit(), s.cot(), bram);
      r["brams"] = u.brams;
      r["eta"] = u.efficiency;
    } else {
      r["brams"] = nullptr;
      r["eta"] = nullptr;
    }
    rows.push_back(r);
  }
  return {{"rows", rows},
          {"accelerator_ii", accelerator_ii(iis)},
          {"bram", {{"width", bram.width}, {"depth", bram.depth}}},
          {"weight_bits", weight_bits}};
}

}  // namespace vitpipe
