/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_TABLE_SET_HPP
#define VITPIPE_TABLE_SET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitpipe/lut.hpp"
#include "vitpipe/model.hpp"

namespace vitpipe {

/// Integer inputs seen by one table family, with the real value of one input step.
struct FamilySamples {
  std::string name;  ///< "exp", "recip", "gelu", "rsqrt" or "requant"
  double in_scale = 1.0;
  std::vector<int64_t> samples;
};

/// Deterministic heavy-tailed inputs for all five families, shaped by the model
/// (row length for softmax, channel count for LayerNorm).
std::vector<FamilySamples> synthetic_samples(const ModelConfig& cfg, uint64_t seed,
                                             int64_t count = 4096);

/// {"families": {"exp": {"in_scale": s, "samples": [...]}, ...}}. All five must be present.
std::vector<FamilySamples> samples_from_json(const nlohmann::json& j);
nlohmann::json samples_to_json(const std::vector<FamilySamples>& s);

struct TableSetOptions {
  int n = 6;
  bool calibrate = true;
  int max_iters = 16;
  int jobs = 1;
};

struct FamilyReport {
  std::string name;
  LutTable table;
  int iterations = 0;
  TableError error;
};

struct TableSet {
  std::vector<FamilyReport> families;  ///< exp, gelu, rsqrt, requant
  SegmentedLutTable recip;
  LutTable recip_single;
  TableError recip_error;
  TableError recip_single_error;

  /// Repeated entries over every table in the set.
  int64_t repeated_entries() const;
  nlohmann::json report() const;
};

/// Builds every family on its samples: ranges from joint calibration, or the raw
/// sample min/max when calibration is off. Errors are measured on the same samples
/// against the real function including output saturation.
TableSet build_table_set(const ModelConfig& cfg, const std::vector<FamilySamples>& samples,
                         const TableSetOptions& opts = {});

}  // namespace vitpipe

#endif  // VITPIPE_TABLE_SET_HPP
