/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vitpipe {

std::vector<int64_t> layernorm_variances(const IntMatrix& x) {
  const int64_t C = x.cols();
  std::vector<int64_t> out(static_cast<size_t>(x.rows()));
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    int64_t sum = 0, sq = 0;
    for (Eigen::Index c = 0; c < C; ++c) {
      const int64_t v = x(t, c);
      sum += v;
      sq += v * v;
    }
    out[static_cast<size_t>(t)] = C * sq - sum * sum;
  }
  return out;
}

LayerNormTables build_layernorm_tables(double s_x, int64_t channels, double s_out, int out_bits,
                                       int64_t var_lo, int64_t var_hi, int n, int rsqrt_bits) {
  if (channels < 2) throw std::invalid_argument("layernorm: need at least 2 channels");
  const double c = static_cast<double>(channels);
  LayerNormTables t;
  t.out_bits = out_bits;
  t.rsqrt = build_rsqrt_table(std::max<int64_t>(var_lo, 0), std::max(var_hi, var_lo), n,
                              rsqrt_bits, s_x * s_x / (c * c), kLayerNormEps);
  t.out = FixedPointScale::from_real((s_x / c) * t.rsqrt.out_scale / s_out);
  return t;
}

IntMatrix layernorm_int(const IntMatrix& x, const LayerNormTables& t) {
  const int64_t C = x.cols();
  if (C < 2) throw std::invalid_argument("layernorm_int: need at least 2 channels");
  IntMatrix y(x.rows(), x.cols());
  for (Eigen::Index tok = 0; tok < x.rows(); ++tok) {
    int64_t sum = 0;
    for (Eigen::Index c = 0; c < C; ++c) sum += x(tok, c);  // pass 1
    int64_t sq = 0;
    for (Eigen::Index c = 0; c < C; ++c) sq += int64_t{x(tok, c)} * x(tok, c);  // pass 2
    const int64_t var = C * sq - sum * sum;
    const int64_t r = t.rsqrt.lookup(var);
    for (Eigen::Index c = 0; c < C; ++c) {  // pass 3
      const int64_t d = C * x(tok, c) - sum;
      y(tok, c) = static_cast<int32_t>(requant(d * r, 0, t.out, t.out_bits));
    }
  }
  return y;
}

SoftmaxTables build_softmax_tables(double score_scale, int64_t row_len, int n, int exp_bits,
                                   int recip_bits, int out_bits) {
  if (row_len < 1) throw std::invalid_argument("softmax: empty rows");
  if (!(score_scale > 0.0)) throw std::invalid_argument("softmax: score scale must be positive");
  SoftmaxTables t;
  t.out_bits = out_bits;
  const double e_top = static_cast<double>(quant_range(exp_bits, false).max);
  const double o_top = static_cast<double>(quant_range(out_bits, false).max);
  // Past ln(2 * e_top) every exp entry rounds to zero.
  const int64_t span = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(std::log(2.0 * e_top) / score_scale)));
  t.exp = build_exp_table(-span, n, exp_bits, score_scale);
  // Sums are at least one full exp(0) entry, so the recip domain starts at real 1.0.
  t.recip = build_segmented_recip(row_len * static_cast<int64_t>(e_top), n, recip_bits,
                                  1.0 / e_top, 1.0);
  t.out_low = FixedPointScale::from_real(t.recip.low.out_scale * o_top / e_top);
  t.out_high = FixedPointScale::from_real(t.recip.high.out_scale * o_top / e_top);
  return t;
}

void softmax_int(std::span<const int32_t> row, const SoftmaxTables& t, std::span<int32_t> out) {
  if (row.empty()) throw std::invalid_argument("softmax_int: empty row");
  if (out.size() != row.size()) throw std::invalid_argument("softmax_int: output size mismatch");
  const int32_t mx = *std::max_element(row.begin(), row.end());  // pass 1
  int64_t sum = 0;
  for (size_t i = 0; i < row.size(); ++i) {  // pass 2
    const int64_t diff = int64_t{row[i]} - mx;
    out[i] = t.exp.lookup(diff);
    sum += out[i];
  }
  const LutTable& seg = t.recip.segment(sum);  // pass 3
  const int64_t r = seg.lookup(sum);
  const FixedPointScale s = (&seg == &t.recip.low) ? t.out_low : t.out_high;
  for (size_t i = 0; i < row.size(); ++i) {
    out[i] = static_cast<int32_t>(requant(int64_t{out[i]} * r, 0, s, t.out_bits, false));
  }
}

IntMatrix softmax_int(const IntMatrix& scores, const SoftmaxTables& t) {
  IntMatrix y(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    softmax_int(std::span<const int32_t>(scores.row(r).data(), static_cast<size_t>(scores.cols())), t,
                std::span<int32_t>(y.row(r).data(), static_cast<size_t>(y.cols())));
  }
  return y;
}

IntMatrix apply_table(const IntMatrix& x, const LutTable& t) {
  return x.unaryExpr([&t](int32_t v) { return t.lookup(v); });
}

IntMatrix residual_add(const IntMatrix& main_acc, const IntMatrix& residual, FixedPointScale r,
                       FixedPointScale s, int bits) {
  if (main_acc.rows() != residual.rows() || main_acc.cols() != residual.cols()) {
    throw std::invalid_argument("residual_add: shape mismatch");
  }
  // The sum carries kResidualFracBits below the accumulator grid, so a residual step finer
  // than the main branch's accumulator step survives the rescale.
  const int f = kResidualFracBits;
  const FixedPointScale s_fine{s.mantissa, s.shift + f};
  IntMatrix y(main_acc.rows(), main_acc.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const int64_t res = round_shift_half_even(int64_t{residual.data()[i]} * r.mantissa, r.shift - f);
    const int64_t acc = int64_t{main_acc.data()[i]} * (int64_t{1} << f) + res;
    y.data()[i] = static_cast<int32_t>(requant(acc, 0, s_fine, bits));
  }
  return y;
}

IntMatrix requant_matrix(const IntMatrix& x, FixedPointScale s, int bits, bool is_signed) {
  return x.unaryExpr([&](int32_t v) { return static_cast<int32_t>(requant(v, 0, s, bits, is_signed)); });
}

}  // namespace vitpipe
