/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/quant.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vitpipe {

namespace {

__int128 round_shift_wide(__int128 value, int shift) {
  if (shift <= 0) return value << (-shift);
  __int128 q = value >> shift;  // floor
  const __int128 r = value - (q << shift);
  const __int128 half = __int128{1} << (shift - 1);
  if (r > half || (r == half && (q & 1) != 0)) ++q;
  return q;
}

}  // namespace

QuantRange quant_range(int bits, bool is_signed) {
  if (bits < 1 || bits > 32) throw std::invalid_argument("quant_range: bits must be in [1, 32]");
  if (is_signed) {
    return {-(int64_t{1} << (bits - 1)), (int64_t{1} << (bits - 1)) - 1};
  }
  return {0, (int64_t{1} << bits) - 1};
}

int64_t round_half_even(double x) {
  // nearbyint honours the default FE_TONEAREST mode, which breaks ties to even.
  return static_cast<int64_t>(std::nearbyint(x));
}

int64_t round_shift_half_even(int64_t value, int shift) {
  return static_cast<int64_t>(round_shift_wide(value, shift));
}

FixedPointScale FixedPointScale::from_real(double s, int mantissa_bits) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw std::invalid_argument("FixedPointScale: scale must be positive and finite");
  }
  const int64_t top = int64_t{1} << (mantissa_bits - 1);
  int exp = 0;
  const double frac = std::frexp(s, &exp);  // s = frac * 2^exp, frac in [0.5, 1)
  int shift = (mantissa_bits - 1) - exp;
  if (shift < 0) {
    const int64_t m = round_half_even(s);
    if (m >= top) throw std::invalid_argument("FixedPointScale: scale too large for mantissa");
    return {static_cast<int32_t>(m), 0};
  }
  if (shift > 62) {
    shift = 62;
    const int64_t m = round_half_even(std::ldexp(s, shift));
    if (m == 0) throw std::invalid_argument("FixedPointScale: scale underflows mantissa");
    return {static_cast<int32_t>(m), shift};
  }
  int64_t m = round_half_even(std::ldexp(frac, mantissa_bits - 1));
  if (m >= top) {
    m /= 2;
    --shift;
  }
  return {static_cast<int32_t>(m), shift};
}

double FixedPointScale::value() const { return std::ldexp(static_cast<double>(mantissa), -shift); }

bool FixedPointScale::valid(int mantissa_bits) const {
  const int64_t top = int64_t{1} << (mantissa_bits - 1);
  return shift >= 0 && mantissa != 0 && mantissa < top && mantissa >= -top;
}

int64_t requant(int64_t x, int64_t zero_point, FixedPointScale s, int bits, bool is_signed) {
  const QuantRange r = quant_range(bits, is_signed);
  const __int128 prod = static_cast<__int128>(x - zero_point) * s.mantissa;
  const __int128 q = round_shift_wide(prod, s.shift);
  if (q < r.min) return r.min;
  if (q > r.max) return r.max;
  return static_cast<int64_t>(q);
}

QuantTensor::QuantTensor(IntMatrix v, QuantFormat f)
    : values(std::move(v)), shape{values.rows(), values.cols()}, format(f) {}

QuantTensor::QuantTensor(IntMatrix v, std::vector<int64_t> s, QuantFormat f)
    : values(std::move(v)), shape(std::move(s)), format(f) {}

int64_t QuantTensor::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void QuantTensor::validate() const {
  if (shape.empty()) throw std::invalid_argument("QuantTensor: empty shape");
  if (numel() != values.size() || values.rows() != shape.front()) {
    throw std::invalid_argument("QuantTensor: storage does not match shape");
  }
  const QuantRange r = format.range();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const int64_t v = values.data()[i];
    if (v < r.min || v > r.max) throw std::invalid_argument("QuantTensor: value out of range");
  }
}

Eigen::MatrixXd QuantTensor::dequantize() const {
  return ((values.cast<double>().array() - format.zero_point) * format.scale).matrix();
}

IntMatrix quantize(const Eigen::MatrixXd& x, const QuantFormat& f) {
  const QuantRange r = f.range();
  return x.unaryExpr([&](double v) {
            return static_cast<int32_t>(clamp_to(round_half_even(v / f.scale) + f.zero_point, r));
          })
      .cast<int32_t>();
}

double BranchScale::factor() const {
  if (!(var + eps > 0.0)) throw std::domain_error("BranchScale: var + eps must be positive");
  return gamma * s_x * s_w / std::sqrt(var + eps);
}

int64_t fuse_bn_bias(double beta, double gamma, double mean, double var, double eps, double s_x,
                     double s_w) {
  const double denom = gamma * s_x * s_w;
  if (denom == 0.0) throw std::domain_error("fuse_bn_bias: gamma * s_x * s_w is zero");
  if (!(var + eps > 0.0)) throw std::domain_error("fuse_bn_bias: var + eps must be positive");
  return round_half_even((beta * std::sqrt(var + eps) - mean * gamma) / denom);
}

double residual_rescale_factor(const BranchScale& main, const BranchScale& res) {
  const double m = main.factor();
  if (m == 0.0) throw std::domain_error("residual_rescale_factor: main branch factor is zero");
  return res.factor() / m;
}

double output_requant_scale(double gamma, double var, double eps, double s_x, double s_w,
                            double s_y) {
  if (!(s_y > 0.0)) throw std::domain_error("output_requant_scale: s_y must be positive");
  if (!(var + eps > 0.0)) throw std::domain_error("output_requant_scale: var + eps must be positive");
  return gamma * s_x * s_w / (s_y * std::sqrt(var + eps));
}

int pot_round_up(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::domain_error("pot_round_up: x must be positive");
  int exp = 0;
  const double frac = std::frexp(x, &exp);  // x = frac * 2^exp
  return frac == 0.5 ? exp - 1 : exp;
}

}  // namespace vitpipe
