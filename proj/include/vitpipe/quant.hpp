/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_QUANT_HPP
#define VITPIPE_QUANT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace vitpipe {

/// Row-major integer matrix; the storage type for every integer tensor.
using IntMatrix = Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntVector = Eigen::Matrix<int32_t, Eigen::Dynamic, 1>;

/// Inclusive integer range [min, max] representable at a bit width.
struct QuantRange {
  int64_t min = 0;
  int64_t max = 0;
};

QuantRange quant_range(int bits, bool is_signed = true);

inline int64_t clamp_to(int64_t v, QuantRange r) {
  return v < r.min ? r.min : (v > r.max ? r.max : v);
}

/// Round to nearest, ties to even. All rounding in the integer pipeline uses this.
int64_t round_half_even(double x);

/// round_half_even(value / 2^shift) computed exactly in integer arithmetic.
int64_t round_shift_half_even(int64_t value, int shift);

/// A real scale represented as mantissa * 2^-shift.
struct FixedPointScale {
  static constexpr int kMantissaBits = 16;

  int32_t mantissa = 1;
  int shift = 0;

  /// Nearest representation of a positive real with a normalized signed mantissa.
  static FixedPointScale from_real(double s, int mantissa_bits = kMantissaBits);

  double value() const;
  bool valid(int mantissa_bits = kMantissaBits) const;
};

/// clamp(round_half_even((x - zero_point) * S), Q_min, Q_max).
int64_t requant(int64_t x, int64_t zero_point, FixedPointScale s, int bits, bool is_signed = true);

/// Bit width, signedness, and real scale of an integer tensor.
struct QuantFormat {
  int bits = 8;
  bool is_signed = true;
  double scale = 1.0;
  int32_t zero_point = 0;

  QuantRange range() const { return quant_range(bits, is_signed); }
};

/// Integer tensor. `values` holds shape[0] rows and prod(shape[1:]) columns,
/// so (T, C) token tensors and (C, H, W) images share one storage layout.
struct QuantTensor {
  IntMatrix values;
  std::vector<int64_t> shape;
  QuantFormat format;

  QuantTensor() = default;
  QuantTensor(IntMatrix v, QuantFormat f);
  QuantTensor(IntMatrix v, std::vector<int64_t> shape, QuantFormat f);

  int64_t numel() const;
  /// Throws std::invalid_argument when shape and storage disagree or a value is out of range.
  void validate() const;
  Eigen::MatrixXd dequantize() const;
};

/// Symmetric quantization of a real matrix at a given scale.
IntMatrix quantize(const Eigen::MatrixXd& x, const QuantFormat& f);

/// BatchNorm-style statistics of one branch, with the LSQ input/weight scales.
/// A branch without normalization uses gamma = 1, var = 1 - eps.
struct BranchScale {
  double gamma = 1.0;
  double var = 0.0;
  double eps = 1.0;
  double s_x = 1.0;
  double s_w = 1.0;

  /// gamma * s_x * s_w / sqrt(var + eps)
  double factor() const;
};

/// Integer bias folded from BatchNorm shift and mean:
/// round((beta * sqrt(var + eps) - mean * gamma) / (gamma * s_x * s_w)).
int64_t fuse_bn_bias(double beta, double gamma, double mean, double var, double eps, double s_x,
                     double s_w);

/// Ratio of residual-branch to main-branch scale factors.
double residual_rescale_factor(const BranchScale& main, const BranchScale& res);

/// gamma * s_x * s_w / (s_y * sqrt(var + eps)).
double output_requant_scale(double gamma, double var, double eps, double s_x, double s_w,
                            double s_y);

/// Smallest integer e with 2^e >= x.
int pot_round_up(double x);

}  // namespace vitpipe

#endif  // VITPIPE_QUANT_HPP
