/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_TILING_HPP
#define VITPIPE_TILING_HPP

#include <cstdint>
#include <span>

#include "vitpipe/quant.hpp"

namespace vitpipe {

enum class WeightSource { kStatic, kDynamic };

/// Parallelism of an output-stationary matmul over x(T, CI) and w(CO, CI).
struct TiledMatmulSpec {
  int64_t tp = 1;
  int64_t cip = 1;
  int64_t cop = 1;
  WeightSource weights = WeightSource::kStatic;

  struct Trips {
    int64_t tt, cit, cot;
  };
  /// Trip counts for a problem shape; throws std::invalid_argument unless every
  /// dimension divides its parallelism.
  Trips trips(int64_t t, int64_t ci, int64_t co) const;
};

/// Running statistics from a kernel invocation.
struct MacStats {
  int64_t macs = 0;
  int64_t max_abs_partial = 0;
};

/// y[t][co] = sum_ci x[t][ci] * w[co][ci] + bias[co], computed tile by tile in
/// Token -> CO -> CI order with a TP x COP partial-sum tile held across the CI trips.
/// Accumulators are 32-bit; std::overflow_error if a partial sum leaves that range.
IntMatrix tiled_matmul_os(const IntMatrix& x, const IntMatrix& w, std::span<const int32_t> bias,
                          const TiledMatmulSpec& spec, MacStats* stats = nullptr);

/// Convolution geometry and unroll factors for the Step3MACs kernel.
struct ConvSpec {
  int64_t kh = 1, kw = 1;    ///< kernel
  int64_t hs = 1, ws = 1;    ///< stride
  int64_t hip = 1, wip = 1;  ///< output rows/cols per tile
  int64_t cip = 1, cop = 1;  ///< channel parallelism

  int64_t out_h(int64_t h) const { return (h - kh) / hs + 1; }
  int64_t out_w(int64_t w) const { return (w - kw) / ws + 1; }
};

/// Valid (unpadded) strided convolution.
/// x: (CI, H*W) row-major image planes. w: (CO, CI*KH*KW). Returns (CO, OH*OW).
/// Loop order: tile loops over output rows/cols, CO trips, CI trips; the partial-sum tile
/// is reset on the first CI trip and flushed after the last.
IntMatrix conv_step3macs(const IntMatrix& x, int64_t h, int64_t w_dim, const IntMatrix& w,
                         const ConvSpec& spec, MacStats* stats = nullptr);

}  // namespace vitpipe

#endif  // VITPIPE_TILING_HPP
