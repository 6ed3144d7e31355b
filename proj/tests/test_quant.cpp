/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <stdexcept>
#include <random>

#include "doctest.h"
#include "vitpipe/quant.hpp"

using namespace vitpipe;

TEST_SUITE("quant") {
  TEST_CASE("quant_range covers signed and unsigned widths") {
    CHECK(quant_range(4).min == -8);
    CHECK(quant_range(4).max == 7);
    CHECK(quant_range(8, false).min == 0);
    CHECK(quant_range(8, false).max == 255);
    CHECK_THROWS_AS(quant_range(0), std::invalid_argument);
  }

  TEST_CASE("round_half_even breaks ties to even") {
    CHECK(round_half_even(0.5) == 0);
    CHECK(round_half_even(1.5) == 2);
    CHECK(round_half_even(2.5) == 2);
    CHECK(round_half_even(-0.5) == 0);
    CHECK(round_half_even(-1.5) == -2);
    CHECK(round_half_even(2.4999) == 2);
    CHECK(round_half_even(-2.6) == -3);
  }

  TEST_CASE("round_shift_half_even matches real division") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int64_t> v(-(int64_t{1} << 40), int64_t{1} << 40);
    for (int i = 0; i < 20000; ++i) {
      const int64_t x = v(rng);
      const int s = static_cast<int>(rng() % 20);
      CHECK(round_shift_half_even(x, s) == round_half_even(std::ldexp(static_cast<double>(x), -s)));
    }
    CHECK(round_shift_half_even(6, 2) == 2);   // 1.5
    CHECK(round_shift_half_even(10, 2) == 2);  // 2.5
    CHECK(round_shift_half_even(-6, 2) == -2);
    CHECK(round_shift_half_even(3, -2) == 12);
  }

  TEST_CASE("FixedPointScale represents reals within mantissa precision") {
    for (double s : {0.25, 1.0, 3.75, 1e-5, 20000.0, 0.0031}) {
      const FixedPointScale f = FixedPointScale::from_real(s);
      CHECK(f.valid());
      CHECK(std::abs(f.value() - s) <= s * std::ldexp(1.0, -14));
    }
    const FixedPointScale q = FixedPointScale::from_real(0.25);
    CHECK(q.value() == 0.25);
    CHECK_THROWS_AS(FixedPointScale::from_real(123456.0), std::invalid_argument);
  }

  TEST_CASE("requant frozen values") {
    const FixedPointScale quarter = FixedPointScale::from_real(0.25);
    CHECK(requant(37, 5, quarter, 4) == 7);
    CHECK(requant(5, 5, FixedPointScale::from_real(0.37), 4) == 0);
    CHECK(requant(1000, 0, FixedPointScale::from_real(1.0), 4) == 7);
    CHECK(requant(-1000, 0, FixedPointScale::from_real(1.0), 4) == -8);
    CHECK(requant(10, 0, quarter, 8) == 2);   // 2.5 rounds to 2
    CHECK(requant(14, 0, quarter, 8) == 4);   // 3.5 rounds to 4
    CHECK(requant(300, 0, FixedPointScale::from_real(1.0), 8, false) == 255);
  }

  TEST_CASE("requant agrees with the real formula") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int64_t> x(-100000, 100000);
    std::uniform_real_distribution<double> s(1e-4, 2.0);
    for (int i = 0; i < 5000; ++i) {
      const FixedPointScale f = FixedPointScale::from_real(s(rng));
      const int64_t v = x(rng);
      const int64_t want = clamp_to(round_half_even(static_cast<double>(v) * f.value()), quant_range(8));
      CHECK(requant(v, 0, f, 8) == want);
    }
  }

  TEST_CASE("fuse_bn_bias frozen values") {
    CHECK(fuse_bn_bias(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0) == 0);
    CHECK(fuse_bn_bias(1.0, 1.0, 0.0, 3.0, 1.0, 0.5, 0.5) == 8);
    CHECK(fuse_bn_bias(1.0, 2.0, 1.0, 0.0, 1.0, 1.0, 1.0) == 0);
  }

  TEST_CASE("residual and output scale factors") {
    const BranchScale same{1.0, 3.0, 1.0, 0.5, 0.5};
    CHECK(residual_rescale_factor(same, same) == doctest::Approx(1.0));
    const BranchScale res{1.0, 3.0, 1.0, 1.0, 1.0};
    const BranchScale main{1.0, 0.0, 1.0, 2.0, 1.0};
    CHECK(residual_rescale_factor(main, res) == doctest::Approx(0.25));
    CHECK(output_requant_scale(1.0, 0.0, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(1.0));
    CHECK(output_requant_scale(2.0, 3.0, 1.0, 0.5, 1.0, 0.25) == doctest::Approx(2.0));
    CHECK(output_requant_scale(1.0, 0.0, 1.0, 1.0, 1.0, 10.0) < output_requant_scale(1.0, 0.0, 1.0, 1.0, 1.0, 2.0));
  }

  TEST_CASE("pot_round_up frozen values") {
    CHECK(pot_round_up(1.0) == 0);
    CHECK(pot_round_up(8.0 / 63.0) == -2);
    CHECK(pot_round_up(255.0 / 63.0) == 3);
    CHECK(pot_round_up(4.0) == 2);
    CHECK(pot_round_up(4.0001) == 3);
  }

  TEST_CASE("quantize and dequantize round trip on the grid") {
    Eigen::MatrixXd x(2, 3);
    x << 0.1, -0.26, 0.74, 1.5, -2.0, 0.0;
    QuantFormat f{4, true, 0.25, 0};
    const IntMatrix q = quantize(x, f);
    CHECK(q(0, 0) == 0);
    CHECK(q(0, 1) == -1);
    CHECK(q(0, 2) == 3);
    CHECK(q(1, 0) == 6);
    CHECK(q(1, 1) == -8);
    QuantTensor t(q, f);
    CHECK_NOTHROW(t.validate());
    CHECK(t.dequantize()(1, 0) == doctest::Approx(1.5));
    IntMatrix bad = q;
    bad(0, 0) = 9;
    CHECK_THROWS_AS(QuantTensor(bad, f).validate(), std::invalid_argument);
  }
}
