/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vitpipe/model.hpp"
#include "vitpipe/ops.hpp"

using namespace vitpipe;

TEST_SUITE("ops") {
  TEST_CASE("LayerNorm of a constant token is zero") {
    const double s_x = 1.0 / 16.0;
    const LayerNormTables t = build_layernorm_tables(s_x, 8, 0.25, 4, 0, 8 * 8 * 127 * 127);
    IntMatrix x = IntMatrix::Constant(2, 8, 37);
    CHECK(layernorm_int(x, t).isZero());
  }

  TEST_CASE("LayerNorm of an alternating token gives +-1") {
    const double s_x = 1.0 / 16.0, s_out = 0.25;
    IntMatrix x(1, 8);
    x << 20, -20, 20, -20, 20, -20, 20, -20;
    const auto var = layernorm_variances(x);
    const LayerNormTables t = build_layernorm_tables(s_x, 8, s_out, 4, var[0] / 2, var[0] * 2);
    const IntMatrix y = layernorm_int(x, t);
    for (Eigen::Index c = 0; c < 8; ++c) CHECK(y(0, c) == (c % 2 == 0 ? 4 : -4));
    CHECK(y.sum() == 0);
  }

  TEST_CASE("LayerNorm stays within the table error bound") {
    std::mt19937_64 rng(7);
    const int64_t C = 64;
    const double s_x = 1.0 / 16.0, s_out = 3.0 / 7.0;
    IntMatrix x(200, C);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> sig(0.3, 4.0);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const double s = sig(rng);
      for (Eigen::Index c = 0; c < C; ++c) {
        x(t, c) = static_cast<int32_t>(clamp_to(round_half_even(s * nd(rng) / s_x), quant_range(8)));
      }
    }
    const auto vars = layernorm_variances(x);
    const auto [lo, hi] = std::minmax_element(vars.begin(), vars.end());
    const LayerNormTables tab = build_layernorm_tables(s_x, C, s_out, 4, *lo, *hi);
    const IntMatrix y = layernorm_int(x, tab);
    const Eigen::MatrixXd ref = normalize_rows(Eigen::MatrixXd(x.cast<double>() * s_x), kLayerNormEps);
    const double in_scale = s_x * s_x / static_cast<double>(C * C);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const int64_t v = vars[static_cast<size_t>(t)];
      const double exact = 1.0 / std::sqrt(static_cast<double>(v) * in_scale + kLayerNormEps);
      const double rel = std::abs(tab.rsqrt.lookup_real(v) - exact) / exact;
      for (Eigen::Index c = 0; c < C; ++c) {
        const double want = std::clamp(ref(t, c), -8 * s_out, 7 * s_out);
        const double bound = 0.5 * s_out + std::abs(ref(t, c)) * rel + 1e-9;
        REQUIRE(std::abs(y(t, c) * s_out - want) <= bound + std::abs(ref(t, c)) * 1e-4);
      }
    }
  }

  TEST_CASE("softmax of an all-equal row is uniform") {
    for (int64_t n : {1, 4, 8, 64, 196}) {
      const SoftmaxTables t = build_softmax_tables(1.0 / 8.0, n);
      IntMatrix s = IntMatrix::Constant(1, n, 5);
      const IntMatrix y = softmax_int(s, t);
      const double q = 1.0 / 255.0;
      for (Eigen::Index c = 0; c < n; ++c) CHECK(std::abs(y(0, c) * q - 1.0 / static_cast<double>(n)) <= 2 * q);
    }
  }

  TEST_CASE("softmax of a dominant score saturates") {
    const SoftmaxTables t = build_softmax_tables(1.0 / 8.0, 8);
    IntMatrix s = IntMatrix::Constant(1, 8, -128);
    s(0, 3) = 127;
    const IntMatrix y = softmax_int(s, t);
    CHECK(y(0, 3) == 255);
    CHECK(y.sum() == 255);
  }

  TEST_CASE("softmax L1 distance is within the measured table errors") {
    std::mt19937_64 rng(8);
    const int64_t n = 196;
    const double score_scale = 1.0 / 4.0;
    const SoftmaxTables t = build_softmax_tables(score_scale, n);
    // Table errors measured on every reachable input.
    std::vector<int64_t> ein;
    for (int64_t d = t.exp.alpha; d <= 0; ++d) ein.push_back(d);
    const double e_exp = table_error(t.exp, [&](double x) { return std::exp(x * score_scale); }, ein).max_abs;
    std::vector<int64_t> rin;
    for (int64_t d = 255; d <= n * 255; ++d) rin.push_back(d);
    const double e_rec = table_error(t.recip, [](double x) { return 255.0 / x; }, rin).max_abs;
    for (int r = 0; r < 50; ++r) {
      const IntMatrix s = oracle::random_int(1, n, 4, rng);
      const IntMatrix y = softmax_int(s, t);
      const Eigen::MatrixXd ref = softmax_rows(Eigen::MatrixXd(s.cast<double>() * score_scale));
      const double l1 = (y.cast<double>() / 255.0 - ref).cwiseAbs().sum();
      CHECK(l1 <= static_cast<double>(n) * (e_exp + e_rec));
    }
  }

  TEST_CASE("residual add with a zero main branch passes the residual") {
    std::mt19937_64 rng(9);
    const IntMatrix x = oracle::random_int(4, 6, 8, rng);
    const IntMatrix zero = IntMatrix::Zero(4, 6);
    const FixedPointScale one = FixedPointScale::from_real(1.0);
    CHECK(residual_add(zero, x, one, one, 8) == x);
  }

  TEST_CASE("residual add matches the real formula") {
    std::mt19937_64 rng(10);
    const IntMatrix acc = oracle::random_int(8, 16, 16, rng);
    const IntMatrix res = oracle::random_int(8, 16, 8, rng);
    const FixedPointScale r = FixedPointScale::from_real(0.37);
    const FixedPointScale s = FixedPointScale::from_real(0.011);
    const IntMatrix y = residual_add(acc, res, r, s, 8);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double want = s.value() * (acc.data()[i] + r.value() * res.data()[i]);
      const double clamped = std::clamp(want, -128.0, 127.0);
      CHECK(std::abs(y.data()[i] - clamped) <= 0.5 + 1e-9);
    }
    CHECK_THROWS_AS(residual_add(acc, oracle::random_int(8, 15, 8, rng), r, s, 8), std::invalid_argument);
  }

  TEST_CASE("symmetric Q and K give a symmetric score matrix") {
    std::mt19937_64 rng(12);
    const IntMatrix q = oracle::random_int(6, 8, 4, rng);
    const IntMatrix scores = tiled_matmul_os(q, q, {}, {2, 4, 3, WeightSource::kDynamic});
    CHECK(scores == scores.transpose());
  }
}
