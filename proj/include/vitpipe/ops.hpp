/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_OPS_HPP
#define VITPIPE_OPS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "vitpipe/lut.hpp"
#include "vitpipe/quant.hpp"

namespace vitpipe {

inline constexpr double kLayerNormEps = 1e-5;

/// Rsqrt table plus the requant that maps (C*x - sum) * rsqrt onto the output grid.
struct LayerNormTables {
  LutTable rsqrt;          ///< input: C*sum(x^2) - sum(x)^2
  FixedPointScale out;     ///< (s_x / C) * rsqrt.out_scale / s_out
  int out_bits = 4;
};

/// Per-token variance numerators C*sum(x^2) - (sum x)^2 (64-bit).
std::vector<int64_t> layernorm_variances(const IntMatrix& x);

LayerNormTables build_layernorm_tables(double s_x, int64_t channels, double s_out, int out_bits,
                                       int64_t var_lo, int64_t var_hi, int n = 6,
                                       int rsqrt_bits = 12);

/// Three passes per token: sum, variance numerator, then (C*x - sum) * Rsqrt(var) and ReQuant.
/// No affine; gamma/beta are folded into the consuming matmul.
IntMatrix layernorm_int(const IntMatrix& x, const LayerNormTables& t);

struct SoftmaxTables {
  LutTable exp;              ///< inverted, anchored at 0; input = score - row max
  SegmentedLutTable recip;   ///< input = sum of exp entries
  FixedPointScale out_low;   ///< exp * recip(low segment) -> output steps
  FixedPointScale out_high;  ///< exp * recip(high segment) -> output steps
  int out_bits = 8;          ///< unsigned

  double out_scale() const { return 1.0 / static_cast<double>(quant_range(out_bits, false).max); }
};

/// Tables for rows of length row_len whose integer scores have real step score_scale.
SoftmaxTables build_softmax_tables(double score_scale, int64_t row_len, int n = 6,
                                   int exp_bits = 8, int recip_bits = 8, int out_bits = 8);

/// max-reduce; exp lookup and sum; recip lookup and multiply.
void softmax_int(std::span<const int32_t> row, const SoftmaxTables& t, std::span<int32_t> out);
IntMatrix softmax_int(const IntMatrix& scores, const SoftmaxTables& t);

/// Elementwise table lookup.
IntMatrix apply_table(const IntMatrix& x, const LutTable& t);

inline constexpr int kResidualFracBits = 8;

/// clamp(round(S * (main + R * residual)), bits), with R * residual rounded to
/// 2^-kResidualFracBits of an accumulator step.
IntMatrix residual_add(const IntMatrix& main_acc, const IntMatrix& residual, FixedPointScale r,
                       FixedPointScale s, int bits);

/// Elementwise requant with a fixed-point scale.
IntMatrix requant_matrix(const IntMatrix& x, FixedPointScale s, int bits, bool is_signed = true);

}  // namespace vitpipe

#endif  // VITPIPE_OPS_HPP
