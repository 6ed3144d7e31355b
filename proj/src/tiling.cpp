/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/tiling.hpp"

#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace vitpipe {

namespace {

int64_t trips_of(int64_t total, int64_t par, const char* what) {
  if (par < 1 || total < 1 || total % par != 0) {
    throw std::invalid_argument(std::string("tiling: ") + what + " does not divide evenly (" +
                                std::to_string(total) + " / " + std::to_string(par) + ")");
  }
  return total / par;
}

constexpr int64_t kAccMax = std::numeric_limits<int32_t>::max();
constexpr int64_t kAccMin = std::numeric_limits<int32_t>::min();

void check_partial(int64_t v, MacStats* stats) {
  if (v > kAccMax || v < kAccMin) throw std::overflow_error("32-bit accumulator overflow");
  if (stats && std::llabs(v) > stats->max_abs_partial) stats->max_abs_partial = std::llabs(v);
}

}  // namespace

TiledMatmulSpec::Trips TiledMatmulSpec::trips(int64_t t, int64_t ci, int64_t co) const {
  return {trips_of(t, tp, "T"), trips_of(ci, cip, "CI"), trips_of(co, cop, "CO")};
}

IntMatrix tiled_matmul_os(const IntMatrix& x, const IntMatrix& w, std::span<const int32_t> bias,
                          const TiledMatmulSpec& spec, MacStats* stats) {
  if (x.cols() != w.cols()) throw std::invalid_argument("tiled_matmul_os: CI mismatch");
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != w.rows()) {
    throw std::invalid_argument("tiled_matmul_os: bias length != CO");
  }
  const int64_t T = x.rows(), CI = x.cols(), CO = w.rows();
  const auto [tt, cit, cot] = spec.trips(T, CI, CO);
  const int64_t TP = spec.tp, CIP = spec.cip, COP = spec.cop;

  IntMatrix y(T, CO);
  std::vector<int64_t> psum(static_cast<size_t>(TP * COP));
  for (int64_t t0 = 0; t0 < tt; ++t0) {
    for (int64_t c0 = 0; c0 < cot; ++c0) {
      std::fill(psum.begin(), psum.end(), 0);
      for (int64_t k0 = 0; k0 < cit; ++k0) {
        for (int64_t tp = 0; tp < TP; ++tp) {
          const int32_t* xr = x.data() + (t0 * TP + tp) * CI + k0 * CIP;
          for (int64_t cop = 0; cop < COP; ++cop) {
            const int32_t* wr = w.data() + (c0 * COP + cop) * CI + k0 * CIP;
            int64_t acc = psum[static_cast<size_t>(tp * COP + cop)];
            for (int64_t cip = 0; cip < CIP; ++cip) acc += int64_t{xr[cip]} * wr[cip];
            check_partial(acc, stats);
            psum[static_cast<size_t>(tp * COP + cop)] = acc;
          }
        }
      }
      for (int64_t tp = 0; tp < TP; ++tp) {
        for (int64_t cop = 0; cop < COP; ++cop) {
          const int64_t co = c0 * COP + cop;
          int64_t v = psum[static_cast<size_t>(tp * COP + cop)];
          if (!bias.empty()) v += bias[static_cast<size_t>(co)];
          check_partial(v, stats);
          y(t0 * TP + tp, co) = static_cast<int32_t>(v);
        }
      }
    }
  }
  if (stats) stats->macs += T * CI * CO;
  return y;
}

IntMatrix conv_step3macs(const IntMatrix& x, int64_t h, int64_t w_dim, const IntMatrix& w,
                         const ConvSpec& spec, MacStats* stats) {
  const int64_t CI = x.rows();
  if (x.cols() != h * w_dim) throw std::invalid_argument("conv_step3macs: image size mismatch");
  if (w.cols() != CI * spec.kh * spec.kw) throw std::invalid_argument("conv_step3macs: weight shape mismatch");
  if (h < spec.kh || w_dim < spec.kw) throw std::invalid_argument("conv_step3macs: kernel larger than image");
  const int64_t CO = w.rows();
  const int64_t OH = spec.out_h(h), OW = spec.out_w(w_dim);
  const int64_t HIT = trips_of(OH, spec.hip, "output height");
  const int64_t WIT = trips_of(OW, spec.wip, "output width");
  const int64_t COT = trips_of(CO, spec.cop, "CO");
  const int64_t CIT = trips_of(CI, spec.cip, "CI");
  const int64_t KH = spec.kh, KW = spec.kw;

  IntMatrix y(CO, OH * OW);
  // Partial-sum tile y[cop][hop][wop].
  std::vector<int64_t> tile(static_cast<size_t>(spec.cop * spec.hip * spec.wip));
  auto at = [&](int64_t cop, int64_t hop, int64_t wop) -> int64_t& {
    return tile[static_cast<size_t>((cop * spec.hip + hop) * spec.wip + wop)];
  };

  for (int64_t hit = 0; hit < HIT; ++hit) {
    for (int64_t wit = 0; wit < WIT; ++wit) {             // Tile1
      for (int64_t cot = 0; cot < COT; ++cot) {           // Tile2
        for (int64_t cit = 0; cit < CIT; ++cit) {         // Tile3
          if (cit == 0) std::fill(tile.begin(), tile.end(), 0);
          for (int64_t hop = 0; hop < spec.hip; ++hop) {
            for (int64_t wop = 0; wop < spec.wip; ++wop) {
              for (int64_t cop = 0; cop < spec.cop; ++cop) {
                for (int64_t cip = 0; cip < spec.cip; ++cip) {
                  const int64_t ci = cit * spec.cip + cip;
                  const int64_t co = cot * spec.cop + cop;
                  int64_t& acc = at(cop, hop, wop);
                  for (int64_t kh = 0; kh < KH; ++kh) {
                    for (int64_t kw = 0; kw < KW; ++kw) {
                      const int64_t hi = (hit * spec.hip + hop) * spec.hs + kh;
                      const int64_t wi = (wit * spec.wip + wop) * spec.ws + kw;
                      acc += int64_t{x(ci, hi * w_dim + wi)} * w(co, (ci * KH + kh) * KW + kw);
                    }
                  }
                  check_partial(acc, stats);
                }
              }
            }
          }
        }
        for (int64_t cop = 0; cop < spec.cop; ++cop) {
          for (int64_t hop = 0; hop < spec.hip; ++hop) {
            for (int64_t wop = 0; wop < spec.wip; ++wop) {
              const int64_t oh = hit * spec.hip + hop, ow = wit * spec.wip + wop;
              y(cot * spec.cop + cop, oh * OW + ow) = static_cast<int32_t>(at(cop, hop, wop));
            }
          }
        }
      }
    }
  }
  if (stats) stats->macs += CO * CI * KH * KW * OH * OW;
  return y;
}

}  // namespace vitpipe
