/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vitpipe/model.hpp"

namespace vitpipe {

namespace {

double scale_for(double max_abs, int bits) {
  const double top = static_cast<double>(quant_range(bits, true).max);
  return max_abs > 0.0 ? max_abs / top : 1.0 / top;
}

/// Weights and bias of a linear layer whose input is LayerNorm output without affine.
struct Folded {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

Folded fold_affine(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const Eigen::VectorXd& g,
                   const Eigen::VectorXd& beta) {
  return {w * g.asDiagonal(), w * beta + b};
}

IntLinear make_linear(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, double s_in, int wbits) {
  IntLinear l;
  l.s_in = s_in;
  l.s_w = scale_for(w.cwiseAbs().maxCoeff(), wbits);
  l.w = quantize(w, QuantFormat{wbits, true, l.s_w, 0});
  const QuantRange acc = quant_range(32, true);
  l.b.resize(static_cast<size_t>(b.size()));
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    l.b[static_cast<size_t>(i)] = static_cast<int32_t>(clamp_to(round_half_even(b(i) / (s_in * l.s_w)), acc));
  }
  l.spec = TiledMatmulSpec{1, w.cols(), 1, WeightSource::kStatic};
  return l;
}

void append(std::vector<int64_t>& out, const IntMatrix& m) {
  out.insert(out.end(), m.data(), m.data() + m.size());
}

/// Adds the accumulator values where a requant onto (out_scale, bits) saturates, so the
/// table covers every unsaturated output even if calibration data is one-sided.
void append_saturation(std::vector<int64_t>& out, double in_scale, double out_scale, int bits,
                       bool negative_side = true) {
  const QuantRange r = quant_range(bits, true);
  const double step = out_scale / in_scale;
  out.push_back(static_cast<int64_t>(std::ceil((static_cast<double>(r.max) + 0.5) * step)));
  if (negative_side) out.push_back(static_cast<int64_t>(std::floor((static_cast<double>(r.min) - 0.5) * step)));
}

/// Requant-style table over observed accumulator samples, range-calibrated when enabled.
LutTable calibrated(const std::vector<int64_t>& samples, const TableBuilder& builder,
                    const QuantizeOptions& opts) {
  if (opts.calibrate_tables) return joint_range_calibration(samples, builder, opts.calibration_iters).table;
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  return builder(*lo, *hi);
}

LayerNormTables ln_tables(const std::vector<IntMatrix>& xs, double s_x, double s_out, int bits,
                          int n) {
  int64_t lo = std::numeric_limits<int64_t>::max(), hi = 0;
  for (const IntMatrix& x : xs) {
    for (int64_t v : layernorm_variances(x)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return build_layernorm_tables(s_x, xs.front().cols(), s_out, bits, lo, hi, n);
}

}  // namespace

IntModel quantize_model(const ModelConfig& cfg, const FloatParams& p,
                        const std::vector<Eigen::MatrixXd>& calibration_images,
                        const QuantizeOptions& opts) {
  cfg.validate();
  if (calibration_images.empty()) throw std::invalid_argument("quantize_model: no calibration images");
  if (static_cast<int64_t>(p.blocks.size()) != cfg.blocks) {
    throw std::invalid_argument("quantize_model: parameter block count does not match config");
  }
  const int a = cfg.act_bits, wb = cfg.weight_bits, rb = cfg.res_bits, n = opts.table_n;
  const int64_t C = cfg.embed, T = cfg.tokens(), hd = cfg.head_dim;

  // Float statistics.
  std::map<std::string, double> peak;
  const Probe stats = [&peak](std::string_view point, Eigen::MatrixXd& x) {
    double& m = peak[std::string(point)];
    m = std::max(m, x.cwiseAbs().maxCoeff());
  };
  for (const Eigen::MatrixXd& img : calibration_images) reference_forward(cfg, p, img, stats);
  auto act_scale = [&](const std::string& point, int bits) { return scale_for(peak[point], bits); };

  IntModel m;
  m.cfg = cfg;
  m.s_img = act_scale("image", cfg.input_bits);
  m.s_x0 = act_scale("embed", rb);
  m.s_patch_w = scale_for(p.patch_w.cwiseAbs().maxCoeff(), wb);
  m.patch_w = quantize(p.patch_w, QuantFormat{wb, true, m.s_patch_w, 0});
  m.patch_spec = ConvSpec{cfg.patch, cfg.patch, cfg.patch, cfg.patch, 1, 1, 1, 1};
  const Eigen::MatrixXd bias_real =
      p.pos.bottomRows(cfg.patch_tokens()).rowwise() + p.patch_b.transpose();
  m.embed_bias = quantize(bias_real, QuantFormat{32, true, m.s_img * m.s_patch_w, 0});
  m.embed_rq = FixedPointScale::from_real(m.s_img * m.s_patch_w / m.s_x0);
  if (cfg.class_token) {
    m.cls = quantize((p.cls + p.pos.row(0).transpose()).eval(), QuantFormat{rb, true, m.s_x0, 0});
  }

  std::vector<IntMatrix> xs;
  for (const Eigen::MatrixXd& img : calibration_images) {
    OpCounts ignored;
    xs.push_back(m.embed(m.quantize_image(img), ignored));
  }

  double s_x = m.s_x0;
  for (int64_t bi = 0; bi < cfg.blocks; ++bi) {
    const BlockParams& bp = p.blocks[static_cast<size_t>(bi)];
    IntBlock b;
    auto name = [bi](std::string_view what) { return point_name(bi, what); };

    b.s_ln1 = act_scale(name("ln1"), a);
    b.ln1 = ln_tables(xs, s_x, b.s_ln1, a, n);
    std::vector<IntMatrix> ln1;
    for (const IntMatrix& x : xs) ln1.push_back(layernorm_int(x, b.ln1));

    const Folded fq = fold_affine(bp.wq, bp.bq, bp.ln1_g, bp.ln1_b);
    const Folded fk = fold_affine(bp.wk, bp.bk, bp.ln1_g, bp.ln1_b);
    const Folded fv = fold_affine(bp.wv, bp.bv, bp.ln1_g, bp.ln1_b);
    b.q = make_linear(fq.w, fq.b, b.s_ln1, wb);
    b.k = make_linear(fk.w, fk.b, b.s_ln1, wb);
    b.v = make_linear(fv.w, fv.b, b.s_ln1, wb);
    b.s_q = act_scale(name("q"), a);
    b.s_k = act_scale(name("k"), a);
    b.s_v = act_scale(name("v"), a);

    auto requant_for = [&](const IntLinear& l, double s_out) {
      std::vector<int64_t> samples;
      for (const IntMatrix& x : ln1) append(samples, l.apply(x, nullptr));
      const double in_scale = l.s_in * l.s_w;
      append_saturation(samples, in_scale, s_out, a);
      return calibrated(samples, [=](int64_t lo, int64_t hi) {
        return build_requant_table(in_scale, s_out, a, lo, hi, n);
      }, opts);
    };
    b.q_rq = requant_for(b.q, b.s_q);
    b.k_rq = requant_for(b.k, b.s_k);
    b.v_rq = requant_for(b.v, b.s_v);

    b.softmax = build_softmax_tables(b.s_q * b.s_k / std::sqrt(static_cast<double>(hd)), T, n);
    b.qk_spec = TiledMatmulSpec{1, hd, 1, WeightSource::kDynamic};
    b.rv_spec = TiledMatmulSpec{1, T, 1, WeightSource::kDynamic};
    b.s_attn = act_scale(name("attn"), a);

    // RV accumulators for the attention-output requant table.
    std::vector<int64_t> rv_samples;
    for (const IntMatrix& x : ln1) {
      const IntMatrix q = apply_table(b.q.apply(x, nullptr), b.q_rq);
      const IntMatrix k = apply_table(b.k.apply(x, nullptr), b.k_rq);
      const IntMatrix v = apply_table(b.v.apply(x, nullptr), b.v_rq);
      for (int64_t h = 0; h < cfg.heads; ++h) {
        const IntMatrix qh = q.middleCols(h * hd, hd);
        const IntMatrix kh = k.middleCols(h * hd, hd);
        const IntMatrix probs = softmax_int(tiled_matmul_os(qh, kh, {}, b.qk_spec), b.softmax);
        const IntMatrix vt = v.middleCols(h * hd, hd).transpose();
        append(rv_samples, tiled_matmul_os(probs, vt, {}, b.rv_spec));
      }
    }
    const double rv_scale = b.softmax.out_scale() * b.s_v;
    append_saturation(rv_samples, rv_scale, b.s_attn, a);
    b.attn_rq = calibrated(rv_samples, [&](int64_t lo, int64_t hi) {
      return build_requant_table(rv_scale, b.s_attn, a, lo, hi, n);
    }, opts);

    b.o = make_linear(bp.wo, bp.bo, b.s_attn, wb);
    b.s_mid = act_scale(name("mid"), rb);
    b.res1_r = FixedPointScale::from_real(residual_rescale_factor(
        BranchScale{1.0, 0.0, 1.0, b.s_attn, b.o.s_w}, BranchScale{1.0, 0.0, 1.0, s_x, 1.0}));
    b.res1_s = FixedPointScale::from_real(output_requant_scale(1.0, 0.0, 1.0, b.s_attn, b.o.s_w, b.s_mid));

    // Run the attention half with the finished tables to get mid activations.
    b.s_ln2 = act_scale(name("ln2"), a);
    b.s_gelu = act_scale(name("gelu"), a);
    b.s_out = act_scale(name("out"), rb);
    std::vector<IntMatrix> mids;
    for (const IntMatrix& x : xs) {
      const IntMatrix l1 = layernorm_int(x, b.ln1);
      const IntMatrix q = apply_table(b.q.apply(l1, nullptr), b.q_rq);
      const IntMatrix k = apply_table(b.k.apply(l1, nullptr), b.k_rq);
      const IntMatrix v = apply_table(b.v.apply(l1, nullptr), b.v_rq);
      IntMatrix attn(T, C);
      for (int64_t h = 0; h < cfg.heads; ++h) {
        const IntMatrix qh = q.middleCols(h * hd, hd);
        const IntMatrix kh = k.middleCols(h * hd, hd);
        const IntMatrix probs = softmax_int(tiled_matmul_os(qh, kh, {}, b.qk_spec), b.softmax);
        const IntMatrix vt = v.middleCols(h * hd, hd).transpose();
        attn.middleCols(h * hd, hd) = apply_table(tiled_matmul_os(probs, vt, {}, b.rv_spec), b.attn_rq);
      }
      mids.push_back(residual_add(b.o.apply(attn, nullptr), x, b.res1_r, b.res1_s, rb));
    }

    b.ln2 = ln_tables(mids, b.s_mid, b.s_ln2, a, n);
    const Folded f1 = fold_affine(bp.w1, bp.b1, bp.ln2_g, bp.ln2_b);
    b.fc1 = make_linear(f1.w, f1.b, b.s_ln2, wb);
    std::vector<IntMatrix> ln2;
    std::vector<int64_t> fc1_samples;
    for (const IntMatrix& mid : mids) {
      ln2.push_back(layernorm_int(mid, b.ln2));
      append(fc1_samples, b.fc1.apply(ln2.back(), nullptr));
    }
    const double fc1_scale = b.s_ln2 * b.fc1.s_w;
    append_saturation(fc1_samples, fc1_scale, b.s_gelu, a, false);
    b.gelu = calibrated(fc1_samples, [&](int64_t lo, int64_t hi) {
      return fuse_gelu_requant(fc1_scale, b.s_gelu, a, lo, hi, n);
    }, opts);

    b.fc2 = make_linear(bp.w2, bp.b2, b.s_gelu, wb);
    b.res2_r = FixedPointScale::from_real(residual_rescale_factor(
        BranchScale{1.0, 0.0, 1.0, b.s_gelu, b.fc2.s_w}, BranchScale{1.0, 0.0, 1.0, b.s_mid, 1.0}));
    b.res2_s = FixedPointScale::from_real(output_requant_scale(1.0, 0.0, 1.0, b.s_gelu, b.fc2.s_w, b.s_out));

    for (size_t i = 0; i < xs.size(); ++i) {
      const IntMatrix g = apply_table(b.fc1.apply(ln2[i], nullptr), b.gelu);
      xs[i] = residual_add(b.fc2.apply(g, nullptr), mids[i], b.res2_r, b.res2_s, rb);
    }
    s_x = b.s_out;
    m.blocks.push_back(std::move(b));
  }

  m.s_lnf = act_scale("lnf", a);
  m.lnf = ln_tables(xs, s_x, m.s_lnf, a, n);
  const Folded fh = fold_affine(p.head_w, p.head_b, p.lnf_g, p.lnf_b);
  const IntLinear head = make_linear(fh.w, fh.b, m.s_lnf, wb);
  m.head_w = head.w;
  m.head_b = head.b;
  m.s_head_w = head.s_w;
  return m;
}

}  // namespace vitpipe
