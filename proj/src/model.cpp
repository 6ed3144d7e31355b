/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace vitpipe {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (patch < 1 || image_h % patch != 0 || image_w % patch != 0) fail("image size must divide by patch");
  if (embed != heads * head_dim) fail("embed must equal heads * head_dim");
  if (embed < 2 || heads < 1 || mlp_hidden < 1 || blocks < 0 || num_classes < 1 || in_channels < 1) {
    fail("non-positive dimension");
  }
  for (int b : {act_bits, weight_bits, res_bits, input_bits}) {
    if (b < 2 || b > 16) fail("bit widths must be in [2, 16]");
  }
}

ModelConfig ModelConfig::deit_tiny() {
  ModelConfig c;
  c.name = "deit-tiny";
  return c;
}

ModelConfig ModelConfig::deit_small() {
  ModelConfig c;
  c.name = "deit-small";
  c.embed = 384;
  c.heads = 6;
  c.mlp_hidden = 1536;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.name = "toy";
  c.image_h = 8;
  c.image_w = 16;
  c.patch = 4;
  c.embed = 12;
  c.heads = 2;
  c.head_dim = 6;
  c.mlp_hidden = 48;
  c.blocks = 2;
  c.num_classes = 10;
  return c;
}

ModelConfig ModelConfig::toy_mha() {
  ModelConfig c = toy();
  c.name = "toy-mha";
  c.image_h = 8;
  c.image_w = 8;
  c.blocks = 1;
  return c;
}

ModelConfig ModelConfig::preset(std::string_view name) {
  if (name == "deit-tiny") return deit_tiny();
  if (name == "deit-small") return deit_small();
  if (name == "toy") return toy();
  if (name == "toy-mha") return toy_mha();
  throw std::invalid_argument("unknown model preset: " + std::string(name));
}

void apply_bit_regime(ModelConfig& cfg, std::string_view regime) {
  if (regime == "a4w4") {
    cfg.act_bits = cfg.weight_bits = 4;
  } else if (regime == "a3w3") {
    cfg.act_bits = cfg.weight_bits = 3;
  } else if (regime == "a8w8") {
    cfg.act_bits = cfg.weight_bits = 8;
  } else {
    throw std::invalid_argument("unknown bit regime: " + std::string(regime));
  }
}

namespace {

struct Gaussian {
  std::mt19937_64 rng;
  explicit Gaussian(uint64_t seed) : rng(seed) {}
  Eigen::MatrixXd mat(int64_t r, int64_t c, double sigma, double mean = 0.0) {
    std::normal_distribution<double> d(mean, sigma);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
  }
  Eigen::VectorXd vec(int64_t n, double sigma, double mean = 0.0) { return mat(n, 1, sigma, mean); }
};

Eigen::MatrixXd affine(const Eigen::MatrixXd& n, const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
  return (n.array().rowwise() * g.transpose().array()).rowwise() + b.transpose().array();
}

Eigen::MatrixXd linear(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  return (x * w.transpose()).rowwise() + b.transpose();
}

/// (T_p, in_channels * P * P) with columns ordered (ci, kh, kw), tokens row-major over patches.
Eigen::MatrixXd im2col_patches(const ModelConfig& cfg, const Eigen::MatrixXd& image) {
  const int64_t P = cfg.patch, W = cfg.image_w, pw = cfg.image_w / P;
  Eigen::MatrixXd out(cfg.patch_tokens(), cfg.in_channels * P * P);
  for (int64_t t = 0; t < out.rows(); ++t) {
    const int64_t py = t / pw, px = t % pw;
    for (int64_t ci = 0; ci < cfg.in_channels; ++ci) {
      for (int64_t kh = 0; kh < P; ++kh) {
        for (int64_t kw = 0; kw < P; ++kw) {
          out(t, (ci * P + kh) * P + kw) = image(ci, (py * P + kh) * W + px * P + kw);
        }
      }
    }
  }
  return out;
}

}  // namespace

FloatParams FloatParams::random(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Gaussian g(seed);
  const int64_t C = cfg.embed, H = cfg.mlp_hidden, K = cfg.in_channels * cfg.patch * cfg.patch;
  const double sc = 1.0 / std::sqrt(static_cast<double>(C));
  FloatParams p;
  p.patch_w = g.mat(C, K, 1.0 / std::sqrt(static_cast<double>(K)));
  p.patch_b = g.vec(C, 0.1);
  p.pos = g.mat(cfg.tokens(), C, 0.5);
  if (cfg.class_token) p.cls = g.vec(C, 1.0);
  for (int64_t b = 0; b < cfg.blocks; ++b) {
    BlockParams bp;
    bp.ln1_g = g.vec(C, 0.1, 1.0);
    bp.ln1_b = g.vec(C, 0.1);
    bp.wq = g.mat(C, C, sc);
    bp.wk = g.mat(C, C, sc);
    bp.wv = g.mat(C, C, sc);
    bp.bq = g.vec(C, 0.1);
    bp.bk = g.vec(C, 0.1);
    bp.bv = g.vec(C, 0.1);
    bp.wo = g.mat(C, C, sc);
    bp.bo = g.vec(C, 0.1);
    bp.ln2_g = g.vec(C, 0.1, 1.0);
    bp.ln2_b = g.vec(C, 0.1);
    bp.w1 = g.mat(H, C, sc);
    bp.b1 = g.vec(H, 0.1);
    bp.w2 = g.mat(C, H, 1.0 / std::sqrt(static_cast<double>(H)));
    bp.b2 = g.vec(C, 0.1);
    p.blocks.push_back(std::move(bp));
  }
  p.lnf_g = g.vec(C, 0.1, 1.0);
  p.lnf_b = g.vec(C, 0.1);
  p.head_w = g.mat(cfg.num_classes, C, sc);
  p.head_b = g.vec(cfg.num_classes, 0.1);
  return p;
}

Eigen::MatrixXd random_image(const ModelConfig& cfg, uint64_t seed) {
  return Gaussian(seed).mat(cfg.in_channels, cfg.image_h * cfg.image_w, 1.0);
}

std::string point_name(int64_t block, std::string_view what) {
  return "blocks." + std::to_string(block) + "." + std::string(what);
}

Eigen::VectorXd reference_forward(const ModelConfig& cfg, const FloatParams& p,
                                  const Eigen::MatrixXd& image, const Probe& probe) {
  auto at = [&](std::string_view name, Eigen::MatrixXd& x) {
    if (probe) probe(name, x);
  };
  const int64_t C = cfg.embed, hd = cfg.head_dim, T = cfg.tokens();
  Eigen::MatrixXd img = image;
  at("image", img);

  Eigen::MatrixXd x(T, C);
  const Eigen::MatrixXd emb = linear(im2col_patches(cfg, img), p.patch_w, p.patch_b);
  if (cfg.class_token) {
    x.row(0) = p.cls.transpose();
    x.bottomRows(T - 1) = emb;
  } else {
    x = emb;
  }
  x += p.pos;
  at("embed", x);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int64_t b = 0; b < cfg.blocks; ++b) {
    const BlockParams& bp = p.blocks[static_cast<size_t>(b)];
    Eigen::MatrixXd n = normalize_rows(x, kLayerNormEps);
    at(point_name(b, "ln1"), n);
    const Eigen::MatrixXd h = affine(n, bp.ln1_g, bp.ln1_b);
    Eigen::MatrixXd q = linear(h, bp.wq, bp.bq);
    Eigen::MatrixXd k = linear(h, bp.wk, bp.bk);
    Eigen::MatrixXd v = linear(h, bp.wv, bp.bv);
    at(point_name(b, "q"), q);
    at(point_name(b, "k"), k);
    at(point_name(b, "v"), v);
    Eigen::MatrixXd attn(T, C);
    for (int64_t head = 0; head < cfg.heads; ++head) {
      const auto qh = q.middleCols(head * hd, hd);
      const auto kh = k.middleCols(head * hd, hd);
      Eigen::MatrixXd probs = softmax_rows((qh * kh.transpose() * inv_sqrt_d).eval());
      at(point_name(b, "probs"), probs);
      attn.middleCols(head * hd, hd) = probs * v.middleCols(head * hd, hd);
    }
    at(point_name(b, "attn"), attn);
    x += linear(attn, bp.wo, bp.bo);
    at(point_name(b, "mid"), x);

    Eigen::MatrixXd n2 = normalize_rows(x, kLayerNormEps);
    at(point_name(b, "ln2"), n2);
    Eigen::MatrixXd a = gelu(linear(affine(n2, bp.ln2_g, bp.ln2_b), bp.w1, bp.b1));
    at(point_name(b, "gelu"), a);
    x += linear(a, bp.w2, bp.b2);
    at(point_name(b, "out"), x);
  }

  Eigen::MatrixXd nf = normalize_rows(x, kLayerNormEps);
  at("lnf", nf);
  const Eigen::MatrixXd hf = affine(nf, p.lnf_g, p.lnf_b);
  const Eigen::VectorXd pooled =
      cfg.class_token ? Eigen::VectorXd(hf.row(0).transpose()) : Eigen::VectorXd(hf.colwise().mean().transpose());
  return p.head_w * pooled + p.head_b;
}

IntMatrix IntLinear::apply(const IntMatrix& x, MacStats* stats) const {
  return tiled_matmul_os(x, w, b, spec, stats);
}

OpCounts count_ops(const ModelConfig& cfg) {
  const int64_t T = cfg.tokens(), Tp = cfg.patch_tokens(), C = cfg.embed;
  OpCounts o;
  o.macs += Tp * C * cfg.in_channels * cfg.patch * cfg.patch;
  const int64_t per_block = 3 * T * C * C                      // QKV
                            + 2 * cfg.heads * T * T * cfg.head_dim  // QK^T and RV
                            + T * C * C                         // output projection
                            + 2 * T * C * cfg.mlp_hidden;       // MLP
  o.macs += cfg.blocks * per_block;
  o.macs += C * cfg.num_classes;
  return o;
}

IntMatrix IntModel::quantize_image(const Eigen::MatrixXd& image) const {
  return quantize(image, QuantFormat{cfg.input_bits, true, s_img, 0});
}

ForwardResult IntModel::forward(const Eigen::MatrixXd& image, ActivationTrace* trace) const {
  return forward_quantized(quantize_image(image), trace);
}

IntMatrix IntModel::embed(const IntMatrix& image, OpCounts& ops) const {
  if (image.rows() != cfg.in_channels || image.cols() != cfg.image_h * cfg.image_w) {
    throw std::invalid_argument("IntModel: image shape does not match config");
  }
  MacStats st;
  const IntMatrix conv = conv_step3macs(image, cfg.image_h, cfg.image_w, patch_w, patch_spec, &st);
  ops.macs += st.macs;
  ops.max_abs_partial = std::max(ops.max_abs_partial, st.max_abs_partial);
  const IntMatrix acc = conv.transpose() + embed_bias;
  const IntMatrix tokens = requant_matrix(acc, embed_rq, cfg.res_bits);
  if (!cfg.class_token) return tokens;
  IntMatrix x(cfg.tokens(), cfg.embed);
  x.row(0) = cls.transpose();
  x.bottomRows(tokens.rows()) = tokens;
  return x;
}

IntMatrix IntModel::block_forward(const IntBlock& b, int64_t index, const IntMatrix& x,
                                  OpCounts& ops, ActivationTrace* trace) const {
  const int64_t T = x.rows(), hd = cfg.head_dim;
  MacStats st;
  auto record = [&](std::string_view what, const IntMatrix& m, double scale) {
    if (trace) (*trace)[point_name(index, what)] = m.cast<double>() * scale;
  };

  const IntMatrix ln1 = layernorm_int(x, b.ln1);
  record("ln1", ln1, b.s_ln1);
  const IntMatrix q = apply_table(b.q.apply(ln1, &st), b.q_rq);
  const IntMatrix k = apply_table(b.k.apply(ln1, &st), b.k_rq);
  const IntMatrix v = apply_table(b.v.apply(ln1, &st), b.v_rq);
  record("q", q, b.s_q);
  record("k", k, b.s_k);
  record("v", v, b.s_v);

  IntMatrix attn(T, cfg.embed);
  for (int64_t h = 0; h < cfg.heads; ++h) {
    const IntMatrix qh = q.middleCols(h * hd, hd);
    const IntMatrix kh = k.middleCols(h * hd, hd);
    const IntMatrix scores = tiled_matmul_os(qh, kh, {}, b.qk_spec, &st);
    const IntMatrix probs = softmax_int(scores, b.softmax);
    // Transpose module: V is consumed row-wise as the dynamic weight of the RV matmul.
    const IntMatrix vt = v.middleCols(h * hd, hd).transpose();
    attn.middleCols(h * hd, hd) = apply_table(tiled_matmul_os(probs, vt, {}, b.rv_spec, &st), b.attn_rq);
    ops.lookups += 2 * T * T + T;
  }
  record("attn", attn, b.s_attn);
  const IntMatrix mid = residual_add(b.o.apply(attn, &st), x, b.res1_r, b.res1_s, cfg.res_bits);
  record("mid", mid, b.s_mid);

  const IntMatrix ln2 = layernorm_int(mid, b.ln2);
  record("ln2", ln2, b.s_ln2);
  const IntMatrix g = apply_table(b.fc1.apply(ln2, &st), b.gelu);
  record("gelu", g, b.s_gelu);
  const IntMatrix out = residual_add(b.fc2.apply(g, &st), mid, b.res2_r, b.res2_s, cfg.res_bits);
  record("out", out, b.s_out);

  ops.lookups += 2 * T + 3 * T * cfg.embed + T * cfg.mlp_hidden;
  ops.macs += st.macs;
  ops.max_abs_partial = std::max(ops.max_abs_partial, st.max_abs_partial);
  return out;
}

ForwardResult IntModel::forward_quantized(const IntMatrix& image, ActivationTrace* trace) const {
  ForwardResult r;
  IntMatrix x = embed(image, r.ops);
  if (trace) (*trace)["embed"] = x.cast<double>() * s_x0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    x = block_forward(blocks[i], static_cast<int64_t>(i), x, r.ops, trace);
  }
  const IntMatrix nf = layernorm_int(x, lnf);
  if (trace) (*trace)["lnf"] = nf.cast<double>() * s_lnf;
  r.ops.lookups += nf.rows();

  const int64_t T = cfg.tokens();
  IntMatrix pooled = cfg.class_token ? IntMatrix(nf.topRows(1)) : IntMatrix(nf.colwise().sum());
  const int64_t count = cfg.class_token ? 1 : T;
  std::vector<int32_t> bias(head_b.size());
  for (size_t i = 0; i < bias.size(); ++i) bias[i] = static_cast<int32_t>(head_b[i] * count);
  MacStats st;
  const IntMatrix logits = tiled_matmul_os(pooled, head_w, bias, TiledMatmulSpec{}, &st);
  r.ops.macs += st.macs;
  r.ops.max_abs_partial = std::max(r.ops.max_abs_partial, st.max_abs_partial);
  r.logits = logits.row(0).transpose();
  r.logit_scale = s_lnf * s_head_w / static_cast<double>(count);
  return r;
}

FloatParams IntModel::dequantized_params() const {
  const int64_t C = cfg.embed;
  auto deq = [](const IntLinear& l) {
    Eigen::MatrixXd w = l.w.cast<double>() * l.s_w;
    Eigen::VectorXd b(static_cast<Eigen::Index>(l.b.size()));
    for (size_t i = 0; i < l.b.size(); ++i) b(static_cast<Eigen::Index>(i)) = l.b[i] * l.s_in * l.s_w;
    return std::pair{w, b};
  };
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(C), zeros = Eigen::VectorXd::Zero(C);

  FloatParams p;
  p.patch_w = patch_w.cast<double>() * s_patch_w;
  p.patch_b = Eigen::VectorXd::Zero(C);
  p.pos = Eigen::MatrixXd::Zero(cfg.tokens(), C);
  p.pos.bottomRows(cfg.patch_tokens()) = embed_bias.cast<double>() * (s_img * s_patch_w);
  if (cfg.class_token) p.cls = cls.cast<double>() * s_x0;
  for (const IntBlock& b : blocks) {
    BlockParams bp;
    bp.ln1_g = bp.ln2_g = ones;
    bp.ln1_b = bp.ln2_b = zeros;
    std::tie(bp.wq, bp.bq) = deq(b.q);
    std::tie(bp.wk, bp.bk) = deq(b.k);
    std::tie(bp.wv, bp.bv) = deq(b.v);
    std::tie(bp.wo, bp.bo) = deq(b.o);
    std::tie(bp.w1, bp.b1) = deq(b.fc1);
    std::tie(bp.w2, bp.b2) = deq(b.fc2);
    p.blocks.push_back(std::move(bp));
  }
  p.lnf_g = ones;
  p.lnf_b = zeros;
  p.head_w = head_w.cast<double>() * s_head_w;
  p.head_b.resize(static_cast<Eigen::Index>(head_b.size()));
  for (size_t i = 0; i < head_b.size(); ++i) p.head_b(static_cast<Eigen::Index>(i)) = head_b[i] * s_lnf * s_head_w;
  return p;
}

std::map<std::string, QuantFormat> IntModel::point_formats() const {
  std::map<std::string, QuantFormat> f;
  const int a = cfg.act_bits, r = cfg.res_bits;
  f["image"] = {cfg.input_bits, true, s_img, 0};
  f["embed"] = {r, true, s_x0, 0};
  for (size_t i = 0; i < blocks.size(); ++i) {
    const IntBlock& b = blocks[i];
    const auto n = static_cast<int64_t>(i);
    f[point_name(n, "ln1")] = {a, true, b.s_ln1, 0};
    f[point_name(n, "q")] = {a, true, b.s_q, 0};
    f[point_name(n, "k")] = {a, true, b.s_k, 0};
    f[point_name(n, "v")] = {a, true, b.s_v, 0};
    f[point_name(n, "probs")] = {b.softmax.out_bits, false, b.softmax.out_scale(), 0};
    f[point_name(n, "attn")] = {a, true, b.s_attn, 0};
    f[point_name(n, "mid")] = {r, true, b.s_mid, 0};
    f[point_name(n, "ln2")] = {a, true, b.s_ln2, 0};
    f[point_name(n, "gelu")] = {a, true, b.s_gelu, 0};
    f[point_name(n, "out")] = {r, true, b.s_out, 0};
  }
  f["lnf"] = {a, true, s_lnf, 0};
  return f;
}

Probe fake_quant_probe(const std::map<std::string, QuantFormat>& formats) {
  return [formats](std::string_view point, Eigen::MatrixXd& x) {
    const auto it = formats.find(std::string(point));
    if (it == formats.end()) return;
    const QuantFormat& f = it->second;
    x = quantize(x, f).cast<double>() * f.scale;
  };
}

}  // namespace vitpipe
