/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/lut.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vitpipe {

int64_t index_reference(double data, double alpha, double beta, int n) {
  if (!(beta > alpha)) throw std::invalid_argument("index_reference: beta must exceed alpha");
  const int64_t top = (int64_t{1} << n) - 1;
  const int64_t idx = round_half_even((data - alpha) * static_cast<double>(top) / (beta - alpha));
  return std::clamp<int64_t>(idx, 0, top);
}

int64_t index_pot(int64_t data, int64_t alpha, int s_pot) {
  const int64_t d = data - alpha;
  return s_pot >= 0 ? (d >> s_pot) : (d << (-s_pot));
}

int64_t index_pot_inverted(int64_t data, int64_t beta, int s_pot) {
  const int64_t d = beta - data;
  return s_pot >= 0 ? (d >> s_pot) : (d << (-s_pot));
}

int pot_shift(int64_t alpha, int64_t beta, int n) {
  if (beta < alpha) throw std::invalid_argument("pot_shift: beta < alpha");
  if (beta == alpha) return 0;
  const double top = static_cast<double>((int64_t{1} << n) - 1);
  return pot_round_up(static_cast<double>(beta - alpha) / top);
}

int64_t LutTable::index(int64_t data) const {
  const int64_t d = std::clamp(data, alpha, beta);
  const int64_t idx = inverted ? index_pot_inverted(d, beta, s_pot) : index_pot(d, alpha, s_pot);
  if (idx < 0 || idx >= size()) throw std::logic_error("LutTable: index out of table");
  return idx;
}

int64_t LutTable::max_reachable_index() const {
  return inverted ? index_pot_inverted(alpha, beta, s_pot) : index_pot(beta, alpha, s_pot);
}

std::pair<int64_t, int64_t> LutTable::bin_inputs(int64_t i) const {
  if (s_pot < 0) {
    // Bins narrower than one integer: only every 2^-s_pot-th bin holds an input.
    const int64_t step = int64_t{1} << (-s_pot);
    if (i % step != 0) return {1, 0};
    const int64_t v = inverted ? beta - i / step : alpha + i / step;
    return {v, v};
  }
  const int64_t w = int64_t{1} << s_pot;
  int64_t first = 0;
  int64_t last = 0;
  if (inverted) {
    last = beta - i * w;
    first = last - w + 1;
  } else {
    first = alpha + i * w;
    last = first + w - 1;
  }
  return {std::max(first, alpha), std::min(last, beta)};
}

void LutTable::validate() const {
  if (entries.size() != (size_t{1} << n)) throw std::logic_error("LutTable: size != 2^n");
  if (beta < alpha) throw std::logic_error("LutTable: beta < alpha");
  if (max_reachable_index() > size() - 1) throw std::logic_error("LutTable: index can overflow");
  const QuantRange r = quant_range(out_bits, out_signed);
  for (int32_t e : entries) {
    if (e < r.min || e > r.max) throw std::logic_error("LutTable: entry outside output range");
  }
}

LutTable build_table(const std::function<double(double)>& f, int64_t alpha, int64_t beta,
                     const TableSpec& spec) {
  if (beta < alpha) throw std::invalid_argument("build_table: beta < alpha");
  if (spec.n < 1 || spec.n > 20) throw std::invalid_argument("build_table: n out of range");
  if (!(spec.out_scale > 0.0)) throw std::invalid_argument("build_table: out_scale must be positive");

  LutTable t;
  t.n = spec.n;
  t.alpha = alpha;
  t.beta = beta;
  t.s_pot = pot_shift(alpha, beta, spec.n);
  t.inverted = spec.inverted;
  t.out_bits = spec.out_bits;
  t.out_signed = spec.out_signed;
  t.out_scale = spec.out_scale;

  const QuantRange r = quant_range(spec.out_bits, spec.out_signed);
  const int64_t size = int64_t{1} << spec.n;
  const double width = std::ldexp(1.0, t.s_pot);
  const int64_t reachable = t.max_reachable_index();
  t.entries.resize(static_cast<size_t>(size));
  for (int64_t i = 0; i < size; ++i) {
    double x = 0.0;
    if (spec.inverted || t.s_pot <= 0) {
      x = spec.inverted ? static_cast<double>(beta) - i * width : static_cast<double>(alpha) + i * width;
    } else if (i <= reachable) {
      const auto [first, last] = t.bin_inputs(i);
      x = 0.5 * static_cast<double>(first + last);
    } else {
      x = static_cast<double>(alpha) + (static_cast<double>(i) + 0.5) * width - 0.5;
    }
    const double y = f(x);
    if (!std::isfinite(y)) throw std::domain_error("build_table: function is not finite on the range");
    t.entries[static_cast<size_t>(i)] =
        static_cast<int32_t>(clamp_to(round_half_even(y / spec.out_scale), r));
  }
  return t;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

LutTable fuse_gelu_requant(double in_scale, double out_scale, int out_bits, int64_t alpha,
                           int64_t beta, int n) {
  return build_table([in_scale](double x) { return gelu(x * in_scale); }, alpha, beta,
                     TableSpec{n, out_bits, true, out_scale, false});
}

LutTable build_requant_table(double in_scale, double out_scale, int out_bits, int64_t alpha,
                             int64_t beta, int n) {
  return build_table([in_scale](double x) { return x * in_scale; }, alpha, beta,
                     TableSpec{n, out_bits, true, out_scale, false});
}

int64_t least_significant_index(const LutTable& t) {
  const int64_t m = std::min(t.max_reachable_index(), t.size() - 1);
  int64_t i = 0;
  while (i < m && t.entries[static_cast<size_t>(i + 1)] == t.entries[0]) ++i;
  return i;
}

int64_t most_significant_index(const LutTable& t) {
  const int64_t m = std::min(t.max_reachable_index(), t.size() - 1);
  const int32_t last = t.entries[static_cast<size_t>(m)];
  int64_t i = m;
  while (i > 0 && t.entries[static_cast<size_t>(i - 1)] == last) --i;
  return i;
}

int64_t repeated_entries(const LutTable& t) {
  int64_t count = 0;
  for (size_t i = 1; i < t.entries.size(); ++i) {
    if (t.entries[i] == t.entries[i - 1]) ++count;
  }
  return count;
}

CalibrationResult joint_range_calibration(std::span<const int64_t> samples,
                                          const TableBuilder& builder, int max_iters) {
  if (samples.empty()) throw std::invalid_argument("joint_range_calibration: no samples");
  if (max_iters < 1) throw std::invalid_argument("joint_range_calibration: max_iters < 1");

  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  CalibrationResult res;
  res.alpha = *lo;
  res.beta = *hi;
  if (res.alpha == res.beta) {
    res.table = builder(res.alpha, res.beta);
    res.degenerate = true;
    return res;
  }

  for (int it = 0; it < max_iters; ++it) {
    const LutTable t = builder(res.alpha, res.beta);
    ++res.iterations;
    const int64_t lsi = least_significant_index(t);
    const int64_t msi = most_significant_index(t);
    const double width = std::ldexp(1.0, t.s_pot);
    // Keep the whole MSI bin; with sub-integer bins keep the first input reaching it.
    const int64_t keep_lo = static_cast<int64_t>(std::floor(lsi * width));
    const int64_t keep_hi = std::max(static_cast<int64_t>(std::ceil(msi * width)),
                                     static_cast<int64_t>(std::ceil((msi + 1) * width)) - 1);
    int64_t a = res.alpha + keep_lo;
    int64_t b = std::min(res.beta, res.alpha + keep_hi);
    if (t.inverted) {
      // Inverted tables count bins down from beta.
      b = res.beta - keep_lo;
      a = std::max(res.alpha, res.beta - keep_hi);
    }
    if (b <= a) break;
    const double bin = std::max(width, 1.0);
    const bool stable = std::abs(static_cast<double>(a - res.alpha)) < bin &&
                        std::abs(static_cast<double>(b - res.beta)) < bin;
    res.alpha = a;
    res.beta = b;
    if (stable) break;
  }
  res.table = builder(res.alpha, res.beta);
  return res;
}

namespace {

double recip_at(double x, double in_scale, double min_input) {
  return 1.0 / std::max(x * in_scale, min_input);
}

}  // namespace

LutTable build_recip_table(int64_t beta, int n, int out_bits, double in_scale, double min_input) {
  if (beta <= 0) throw std::invalid_argument("build_recip_table: beta must be positive");
  const double top = static_cast<double>(quant_range(out_bits, false).max);
  const double peak = recip_at(0.0, in_scale, min_input);
  return build_table([=](double x) { return recip_at(x, in_scale, min_input); }, 0, beta,
                     TableSpec{n, out_bits, false, peak / top, false});
}

SegmentedLutTable build_segmented_recip(int64_t beta, int n_per_segment, int out_bits,
                                        double in_scale, double min_input) {
  if (beta <= 0) throw std::invalid_argument("build_segmented_recip: beta must be positive");
  SegmentedLutTable s;
  s.pivot = beta / 8;
  const double top = static_cast<double>(quant_range(out_bits, false).max);
  auto f = [=](double x) { return recip_at(x, in_scale, min_input); };
  const double low_peak = recip_at(0.0, in_scale, min_input);
  s.low = build_table(f, 0, s.pivot, TableSpec{n_per_segment, out_bits, false, low_peak / top, false});
  const int64_t high_alpha = std::min(s.pivot + 1, beta);
  const double high_peak = recip_at(static_cast<double>(high_alpha), in_scale, min_input);
  s.high = build_table(f, high_alpha, beta,
                       TableSpec{n_per_segment, out_bits, false, high_peak / top, false});
  return s;
}

LutTable build_rsqrt_table(int64_t alpha, int64_t beta, int n, int out_bits, double in_scale,
                           double eps) {
  if (alpha < 0 || beta < alpha) throw std::invalid_argument("build_rsqrt_table: bad range");
  if (!(eps > 0.0)) throw std::invalid_argument("build_rsqrt_table: eps must be positive");
  auto f = [=](double x) { return 1.0 / std::sqrt(x * in_scale + eps); };
  const double top = static_cast<double>(quant_range(out_bits, false).max);
  return build_table(f, alpha, beta,
                     TableSpec{n, out_bits, false, f(static_cast<double>(alpha)) / top, false});
}

LutTable build_exp_table(int64_t alpha, int n, int out_bits, double in_scale) {
  if (alpha > 0) throw std::invalid_argument("build_exp_table: alpha must be <= 0");
  const double top = static_cast<double>(quant_range(out_bits, false).max);
  return build_table([in_scale](double x) { return std::exp(x * in_scale); }, alpha, 0,
                     TableSpec{n, out_bits, false, 1.0 / top, true});
}

namespace {

template <typename Table>
TableError error_over(const Table& t, const std::function<double(double)>& oracle,
                      std::span<const int64_t> inputs) {
  TableError e;
  if (inputs.empty()) return e;
  double sum_sq = 0.0;
  for (int64_t x : inputs) {
    const double d = t.lookup_real(x) - oracle(static_cast<double>(x));
    e.max_abs = std::max(e.max_abs, std::abs(d));
    sum_sq += d * d;
  }
  e.mse = sum_sq / static_cast<double>(inputs.size());
  return e;
}

}  // namespace

TableError table_error(const LutTable& t, const std::function<double(double)>& oracle,
                       std::span<const int64_t> inputs) {
  return error_over(t, oracle, inputs);
}

TableError table_error(const SegmentedLutTable& t, const std::function<double(double)>& oracle,
                       std::span<const int64_t> inputs) {
  return error_over(t, oracle, inputs);
}

}  // namespace vitpipe
