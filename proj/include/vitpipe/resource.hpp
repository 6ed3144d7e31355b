/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_RESOURCE_HPP
#define VITPIPE_RESOURCE_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vitpipe/model.hpp"
#include "vitpipe/tiling.hpp"

namespace vitpipe {

/// Shape and unroll factors of one pipeline stage. co == 0 marks an elementwise or
/// reduction stage (no CO dimension).
struct StageParallelism {
  std::string name;
  std::string block;  ///< "MHA" or "MLP"
  int64_t t = 1, tp = 1;
  int64_t ci = 1, cip = 1;
  int64_t co = 0, cop = 1;
  int passes = 1;
  bool static_weights = false;

  int64_t tt() const;
  int64_t cit() const;
  int64_t cot() const;  ///< 1 without a CO dimension
  int64_t parallelism() const { return tp * cip * cop; }
  /// T * CI * CO * passes, CO counted as 1 when absent.
  int64_t ops() const;
  TiledMatmulSpec spec() const { return {tp, cip, cop, static_weights ? WeightSource::kStatic : WeightSource::kDynamic}; }
};

struct ParallelismConfig {
  std::vector<StageParallelism> stages;

  const StageParallelism& find(std::string_view name) const;
  /// The 11 per-block rows used for DeiT-tiny at TP = 2.
  static ParallelismConfig deit_tiny();
};

nlohmann::json parallelism_to_json(const ParallelismConfig& p);
ParallelismConfig parallelism_from_json(const nlohmann::json& j);

/// TT * CIT * COT * passes. Throws std::invalid_argument unless every dimension divides.
int64_t stage_ii(const TiledMatmulSpec& spec, int64_t t, int64_t ci, int64_t co, int passes);
int64_t stage_ii(const StageParallelism& s);
/// Max over stages; std::invalid_argument when empty.
int64_t accelerator_ii(const std::vector<int64_t>& stage_iis);

struct BramSpec {
  int64_t width = 36;
  int64_t depth = 1024;
  int64_t bits() const { return width * depth; }
};

struct BramUsage {
  int64_t brams = 0;
  double efficiency = 0.0;
};

/// #BRAM = ceil(dw * CIP * COP / width) * ceil(CIT * COT / depth);
/// eta = dw * CI * CO / (#BRAM * width * depth).
BramUsage bram_count_and_efficiency(int dw_w, int64_t cip, int64_t cop, int64_t cit, int64_t cot,
                                    const BramSpec& bram = {});

/// Banks for `entries` words of `word_bits`: ceil(word_bits / width) side by side,
/// ceil(entries / depth) deep.
int64_t packed_brams(int64_t entries, int64_t word_bits, const BramSpec& bram = {});

enum class BufferKind { kPipo, kFifo, kDeepBuffer };

/// A buffer holding tiles of `tile_elems` elements of `act_bits` each; the tile is the
/// access-port word. FIFOs hold `fifo_depth` tiles, the others whole tensors.
struct BufferSpec {
  BufferKind kind = BufferKind::kPipo;
  int64_t tensor_elems = 0;
  int act_bits = 8;
  int64_t tile_elems = 1;
  int64_t fifo_depth = 0;
};

/// PIPO = 2 * tensor, DeepBuffer = 1 * tensor, FIFO = depth words; all via packed_brams.
int64_t buffer_cost(const BufferSpec& b, const BramSpec& bram = {});

struct BufferComparison {
  int64_t pipo_stages = 0;
  int64_t tensor_brams = 0;
  int64_t pipo_brams = 0;
  int64_t hybrid_tensors = 0;
  int64_t hybrid_brams = 0;
  double reduction() const;
};

/// Residual path buffered by `pipo_stages` PIPOs versus one deep FIFO holding
/// `hybrid_tensors` tensors, each tensor costing tensor_brams.
BufferComparison compare_residual_buffers(int64_t pipo_stages, int64_t tensor_brams,
                                          int64_t hybrid_tensors);

/// Per-function cost of a direct floating-point unit and of its table replacement.
struct FunctionCost {
  std::string name;
  int64_t naive_dsp = 0;
  int64_t naive_lut = 0;
  int64_t table_dsp = 0;
  int64_t table_lut = 0;
  int table_depth = 64;
  int table_bits = 8;
};

struct CostTable {
  std::vector<FunctionCost> functions;

  const FunctionCost& find(std::string_view name) const;
  /// Exp 7, Rsqrt 8, Recip 9, GeLU 26, ReQuant 1 DSPs per unit, with the table-side LUT costs.
  static CostTable defaults();
};

struct DspLine {
  std::string function;
  std::string site;
  int64_t units = 0;  ///< parallel units across the whole model
  int64_t dsp_per_unit = 0;
  int64_t total() const { return units * dsp_per_unit; }
};

struct DspEstimate {
  std::vector<DspLine> lines;
  int64_t total() const;
};

/// DSPs if every non-linear unit were a direct implementation. Per block: one Rsqrt per
/// LayerNorm lane, one Exp and one Recip per Softmax lane and head, one GeLU per lane, and
/// one ReQuant per lane of TP at each of `requant_points` sites.
DspEstimate naive_dsp_estimate(const ModelConfig& cfg, const ParallelismConfig& p,
                               const CostTable& cost, int requant_points = 10);

struct RooflineScenario {
  std::string name;
  double compute_ceiling = 0.0;  ///< OP/s available to this design
  double bandwidth = 0.0;        ///< bytes/s
  double intensity = 0.0;        ///< OP/byte
};

/// min(compute_ceiling, bandwidth * intensity).
double roofline(const RooflineScenario& s);

struct RooflinePlatform {
  double dsp_ceiling = 0.0;
  double lut_ceiling = 0.0;
  double bandwidth = 0.0;
  double combined() const { return dsp_ceiling + lut_ceiling; }
};

/// Scenario file: {"platform": {...}, "scenarios": [{"name", "ceiling": "dsp"|"lut"|"combined"|number,
/// "intensity"}]}. Scenario order is preserved.
std::vector<RooflineScenario> scenarios_from_json(const nlohmann::json& j);

struct BalanceRow {
  std::string name;
  int64_t ii = 0;
  double bubble = 0.0;  ///< 1 - ii / max ii
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  std::string bottleneck;
  int64_t accelerator_ii = 0;
};

BalanceReport balance_report(const ParallelismConfig& p);

struct Throughput {
  double images_per_s = 0.0;
  double ops_per_s = 0.0;
};

Throughput throughput(int64_t ii, double clock_hz, double ops_per_inference = 0.0);

/// Normalisation constants used when comparing against other accelerators. Report
/// annotations only.
struct ComparisonConstants {
  static constexpr int kDspPerAie = 32;
  static constexpr int kBramPerUram = 8;
  static constexpr int kLutPerDsp = 32;
};

/// Published measurements a desk-scale model cannot reproduce, carried into reports.
nlohmann::json recorded_measurements();

/// Per-stage resource report: per row MOPs, P, II, #BRAM and eta where weights are static.
nlohmann::json resource_report(const ParallelismConfig& p, int weight_bits = 4,
                               const BramSpec& bram = {});

}  // namespace vitpipe

#endif  // VITPIPE_RESOURCE_HPP
