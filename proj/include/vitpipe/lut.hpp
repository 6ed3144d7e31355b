/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_LUT_HPP
#define VITPIPE_LUT_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vitpipe/quant.hpp"

namespace vitpipe {

/// Exact table index with a real multiply; the reference the shift-based index is checked against.
int64_t index_reference(double data, double alpha, double beta, int n);

/// (data - alpha) >> s_pot, or a left shift for negative s_pot.
int64_t index_pot(int64_t data, int64_t alpha, int s_pot);

/// (beta - data) >> s_pot. Anchors the table at beta so that data == beta maps to index 0.
int64_t index_pot_inverted(int64_t data, int64_t beta, int s_pot);

/// Shift for a table spanning [alpha, beta] with 2^n entries: ceil(log2((beta - alpha) / (2^n - 1))).
int pot_shift(int64_t alpha, int64_t beta, int n);

/// Output encoding and addressing of a table.
struct TableSpec {
  int n = 6;
  int out_bits = 8;
  bool out_signed = true;
  double out_scale = 1.0;  ///< real value of one output step
  bool inverted = false;
};

/// A sampled non-linear function over an integer input domain [alpha, beta].
struct LutTable {
  std::vector<int32_t> entries;
  int n = 6;
  int64_t alpha = 0;
  int64_t beta = 0;
  int s_pot = 0;
  bool inverted = false;
  int out_bits = 8;
  bool out_signed = true;
  double out_scale = 1.0;

  int64_t size() const { return static_cast<int64_t>(entries.size()); }
  /// Index for data, after clamping data into [alpha, beta].
  int64_t index(int64_t data) const;
  int32_t lookup(int64_t data) const { return entries[static_cast<size_t>(index(data))]; }
  double lookup_real(int64_t data) const { return lookup(data) * out_scale; }
  /// Highest index any in-range input can reach.
  int64_t max_reachable_index() const;
  /// Integer inputs that map to bin i: [first, last].
  std::pair<int64_t, int64_t> bin_inputs(int64_t i) const;
  /// Throws std::logic_error when an invariant is broken.
  void validate() const;
};

/// Samples f at each bin's representative input and quantizes by spec.out_scale.
///
/// The representative is the midpoint of the integer inputs in the bin. Inverted
/// tables sample at the anchor-side edge instead, so entry 0 is exactly f(beta).
/// f receives the integer-domain coordinate; compose any dequantization into f.
LutTable build_table(const std::function<double(double)>& f, int64_t alpha, int64_t beta,
                     const TableSpec& spec);

/// x/2 * (1 + erf(x / sqrt(2)))
double gelu(double x);

/// ReQuant(GeLU(x * in_scale)) as one table over accumulator integers in [alpha, beta].
LutTable fuse_gelu_requant(double in_scale, double out_scale, int out_bits, int64_t alpha,
                           int64_t beta, int n = 6);

/// Plain ReQuant (x * in_scale / out_scale, round, clamp) as a table.
LutTable build_requant_table(double in_scale, double out_scale, int out_bits, int64_t alpha,
                             int64_t beta, int n = 6);

/// Counting helpers for clamp plateaus.
/// LSI: last index of the run equal to entry 0. MSI: first index of the run equal to the
/// last reachable entry.
int64_t least_significant_index(const LutTable& t);
int64_t most_significant_index(const LutTable& t);
/// Number of i >= 1 with entries[i] == entries[i - 1].
int64_t repeated_entries(const LutTable& t);

struct CalibrationResult {
  int64_t alpha = 0;
  int64_t beta = 0;
  LutTable table;
  int iterations = 0;
  bool degenerate = false;
};

using TableBuilder = std::function<LutTable(int64_t alpha, int64_t beta)>;

/// Joint table range calibration: shrinks [alpha, beta] onto the bins between LSI and MSI,
/// rebuilding the table until both ends move by less than one bin or max_iters is reached.
CalibrationResult joint_range_calibration(std::span<const int64_t> samples,
                                          const TableBuilder& builder, int max_iters = 16);

/// Two tables splitting [0, beta] at pivot = beta / 8. Data <= pivot uses `low`.
struct SegmentedLutTable {
  LutTable low;
  LutTable high;
  int64_t pivot = 0;

  const LutTable& segment(int64_t data) const { return data <= pivot ? low : high; }
  int32_t lookup(int64_t data) const { return segment(data).lookup(data); }
  double lookup_real(int64_t data) const { return segment(data).lookup_real(data); }
};

/// Reciprocal tables for 1/(data * in_scale). Inputs below min_input (real) are sampled at
/// min_input. Each segment picks its own output scale from its largest value.
SegmentedLutTable build_segmented_recip(int64_t beta, int n_per_segment, int out_bits,
                                        double in_scale = 1.0, double min_input = 1.0);

/// Single-table counterpart of build_segmented_recip over [0, beta].
LutTable build_recip_table(int64_t beta, int n, int out_bits, double in_scale = 1.0,
                           double min_input = 1.0);

/// 1/sqrt(data * in_scale + eps) over [alpha, beta], scaled to fill out_bits unsigned.
LutTable build_rsqrt_table(int64_t alpha, int64_t beta, int n, int out_bits, double in_scale,
                           double eps);

/// exp(data * in_scale) for data in [alpha, 0], inverted addressing anchored at 0.
LutTable build_exp_table(int64_t alpha, int n, int out_bits, double in_scale);

struct TableError {
  double max_abs = 0.0;
  double mse = 0.0;
};

/// Dequantized lookup against a real oracle over the given integer inputs.
TableError table_error(const LutTable& t, const std::function<double(double)>& oracle,
                       std::span<const int64_t> inputs);
TableError table_error(const SegmentedLutTable& t, const std::function<double(double)>& oracle,
                       std::span<const int64_t> inputs);

}  // namespace vitpipe

#endif  // VITPIPE_LUT_HPP
