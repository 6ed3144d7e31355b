/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// Straightforward reference implementations the optimized kernels are checked against.

#ifndef VITPIPE_TESTS_ORACLES_HPP
#define VITPIPE_TESTS_ORACLES_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "vitpipe/quant.hpp"
#include "vitpipe/sim.hpp"
#include "vitpipe/tiling.hpp"

namespace oracle {

using vitpipe::IntMatrix;

/// y[t][co] = sum_ci x[t][ci] * w[co][ci] + b[co] with 64-bit accumulation.
inline IntMatrix matmul(const IntMatrix& x, const IntMatrix& w, const std::vector<int32_t>& b) {
  IntMatrix y(x.rows(), w.rows());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index co = 0; co < w.rows(); ++co) {
      int64_t acc = b.empty() ? 0 : b[static_cast<size_t>(co)];
      for (Eigen::Index ci = 0; ci < x.cols(); ++ci) acc += int64_t{x(t, ci)} * w(co, ci);
      y(t, co) = static_cast<int32_t>(acc);
    }
  }
  return y;
}

/// Direct valid convolution: six nested loops over co, oh, ow, ci, kh, kw.
inline IntMatrix conv(const IntMatrix& x, int64_t h, int64_t w_dim, const IntMatrix& w,
                      const vitpipe::ConvSpec& s) {
  const int64_t ci_n = x.rows(), co_n = w.rows();
  const int64_t oh_n = s.out_h(h), ow_n = s.out_w(w_dim);
  IntMatrix y(co_n, oh_n * ow_n);
  for (int64_t co = 0; co < co_n; ++co) {
    for (int64_t oh = 0; oh < oh_n; ++oh) {
      for (int64_t ow = 0; ow < ow_n; ++ow) {
        int64_t acc = 0;
        for (int64_t ci = 0; ci < ci_n; ++ci) {
          for (int64_t kh = 0; kh < s.kh; ++kh) {
            for (int64_t kw = 0; kw < s.kw; ++kw) {
              acc += int64_t{x(ci, (oh * s.hs + kh) * w_dim + ow * s.ws + kw)} * w(co, (ci * s.kh + kh) * s.kw + kw);
            }
          }
        }
        y(co, oh * ow_n + ow) = static_cast<int32_t>(acc);
      }
    }
  }
  return y;
}

inline IntMatrix random_int(Eigen::Index rows, Eigen::Index cols, int bits, std::mt19937_64& rng) {
  const vitpipe::QuantRange r = vitpipe::quant_range(bits);
  std::uniform_int_distribution<int32_t> d(static_cast<int32_t>(r.min), static_cast<int32_t>(r.max));
  IntMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// A random divisor of n.
inline int64_t divisor(int64_t n, std::mt19937_64& rng) {
  std::vector<int64_t> ds;
  for (int64_t d = 1; d <= n; ++d) {
    if (n % d == 0) ds.push_back(d);
  }
  return ds[std::uniform_int_distribution<size_t>(0, ds.size() - 1)(rng)];
}

inline vitpipe::TiledMatmulSpec random_spec(int64_t t, int64_t ci, int64_t co, std::mt19937_64& rng) {
  return {divisor(t, rng), divisor(ci, rng), divisor(co, rng), vitpipe::WeightSource::kStatic};
}

/// Random layered DAG: a source, a few stages per layer, edges from each stage to one or two
/// stages of the next layer, all joined into one sink. Every stage fires `tiles` times per image.
/// Some edges become gated deep buffers so joins see skewed arrival times.
inline vitpipe::Graph random_graph(std::mt19937_64& rng, int64_t tiles = 8) {
  using vitpipe::ChannelKind;
  std::uniform_int_distribution<int> layers_d(2, 4), width_d(1, 3), ii_d(1, 12), coin(0, 3);
  vitpipe::Graph g;
  std::vector<int> prev{g.add_stage("src", 1, tiles)};
  const int layers = layers_d(rng);
  for (int l = 0; l < layers; ++l) {
    std::vector<int> cur;
    const int width = width_d(rng);
    for (int k = 0; k < width; ++k) {
      cur.push_back(g.add_stage("s" + std::to_string(l) + "_" + std::to_string(k), ii_d(rng), tiles));
    }
    std::vector<bool> fed(cur.size(), false);
    for (int p : prev) {
      const int a = std::uniform_int_distribution<int>(0, width - 1)(rng);
      const bool gated = coin(rng) == 0;
      g.connect(p, cur[static_cast<size_t>(a)], gated ? ChannelKind::kDeepBuffer : ChannelKind::kFifo, 2);
      fed[static_cast<size_t>(a)] = true;
      if (width > 1 && coin(rng) < 2) {
        const int b = (a + 1) % width;
        g.connect(p, cur[static_cast<size_t>(b)], ChannelKind::kFifo, 2);
        fed[static_cast<size_t>(b)] = true;
      }
    }
    for (size_t k = 0; k < cur.size(); ++k) {
      if (!fed[k]) g.connect(prev.front(), cur[k], ChannelKind::kFifo, 2);
    }
    prev = cur;
  }
  const int sink = g.add_stage("sink", 1, tiles);
  for (int p : prev) g.connect(p, sink, ChannelKind::kFifo, 2);
  return g;
}

}  // namespace oracle

#endif  // VITPIPE_TESTS_ORACLES_HPP
