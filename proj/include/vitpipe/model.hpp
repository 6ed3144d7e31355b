/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_MODEL_HPP
#define VITPIPE_MODEL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vitpipe/ops.hpp"
#include "vitpipe/tiling.hpp"

namespace vitpipe {

/// Shape and precision of a ViT. T counts patch tokens, plus one with class_token.
struct ModelConfig {
  std::string name = "custom";
  int64_t image_h = 224;
  int64_t image_w = 224;
  int64_t in_channels = 3;
  int64_t patch = 16;
  int64_t embed = 192;
  int64_t heads = 3;
  int64_t head_dim = 64;
  int64_t mlp_hidden = 768;
  int64_t blocks = 12;
  int64_t num_classes = 1000;
  int act_bits = 4;
  int weight_bits = 4;
  int res_bits = 8;    ///< residual stream
  int input_bits = 8;  ///< quantized image
  bool class_token = false;

  int64_t patch_tokens() const { return (image_h / patch) * (image_w / patch); }
  int64_t tokens() const { return patch_tokens() + (class_token ? 1 : 0); }
  /// Throws std::invalid_argument on inconsistent shapes.
  void validate() const;

  static ModelConfig deit_tiny();
  static ModelConfig deit_small();
  /// T = 8, CI = 12, 2 blocks.
  static ModelConfig toy();
  /// Single attention block over T = 4 tokens.
  static ModelConfig toy_mha();
  /// Preset by name ("deit-tiny", "deit-small", "toy", "toy-mha"); std::invalid_argument otherwise.
  static ModelConfig preset(std::string_view name);
};

/// Precision regimes: "a4w4", "a3w3", "a8w8".
void apply_bit_regime(ModelConfig& cfg, std::string_view regime);

struct BlockParams {
  Eigen::VectorXd ln1_g, ln1_b;
  Eigen::MatrixXd wq, wk, wv;  ///< (CI, CI), rows = outputs
  Eigen::VectorXd bq, bk, bv;
  Eigen::MatrixXd wo;
  Eigen::VectorXd bo;
  Eigen::VectorXd ln2_g, ln2_b;
  Eigen::MatrixXd w1;  ///< (hidden, CI)
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  ///< (CI, hidden)
  Eigen::VectorXd b2;
};

struct FloatParams {
  Eigen::MatrixXd patch_w;  ///< (CI, in_channels * patch * patch)
  Eigen::VectorXd patch_b;
  Eigen::MatrixXd pos;      ///< (tokens, CI)
  Eigen::VectorXd cls;      ///< empty without class token
  std::vector<BlockParams> blocks;
  Eigen::VectorXd lnf_g, lnf_b;
  Eigen::MatrixXd head_w;   ///< (classes, CI)
  Eigen::VectorXd head_b;

  static FloatParams random(const ModelConfig& cfg, uint64_t seed);
};

/// Image of shape (in_channels, H*W) with N(0, 1) pixels.
Eigen::MatrixXd random_image(const ModelConfig& cfg, uint64_t seed);

// Float building blocks, templated on scalar.

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Row-wise (x - mean) / sqrt(var + eps), no affine.
template <typename Derived>
Mat<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x,
                                             typename Derived::Scalar eps) {
  using S = typename Derived::Scalar;
  const auto mean = x.rowwise().mean();
  Mat<S> centered = x.colwise() - mean;
  const auto var = centered.array().square().rowwise().mean();
  return (centered.array().colwise() / (var + eps).sqrt()).matrix();
}

template <typename Derived>
Mat<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  Mat<S> e = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  return (e.array().colwise() / e.rowwise().sum().array()).matrix();
}

template <typename Derived>
Mat<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(0.5) * v * (S(1) + std::erf(v / std::sqrt(S(2)))); });
}

/// Quantization points a reference forward reports. The probe may read or rewrite x.
using Probe = std::function<void(std::string_view point, Eigen::MatrixXd& x)>;

std::string point_name(int64_t block, std::string_view what);

/// Float ViT forward (pre-norm blocks, mean-pool or class-token head). Returns logits.
Eigen::VectorXd reference_forward(const ModelConfig& cfg, const FloatParams& p,
                                  const Eigen::MatrixXd& image, const Probe& probe = {});

/// Linear layer with integer weights and bias at scale s_in * s_w.
struct IntLinear {
  IntMatrix w;
  std::vector<int32_t> b;
  double s_w = 1.0;
  double s_in = 1.0;
  TiledMatmulSpec spec;

  IntMatrix apply(const IntMatrix& x, MacStats* stats) const;
};

struct IntBlock {
  LayerNormTables ln1;
  double s_ln1 = 1.0;
  IntLinear q, k, v;
  LutTable q_rq, k_rq, v_rq;
  double s_q = 1.0, s_k = 1.0, s_v = 1.0;
  SoftmaxTables softmax;
  TiledMatmulSpec qk_spec, rv_spec;
  LutTable attn_rq;
  double s_attn = 1.0;
  IntLinear o;
  FixedPointScale res1_r, res1_s;
  double s_mid = 1.0;
  LayerNormTables ln2;
  double s_ln2 = 1.0;
  IntLinear fc1;
  LutTable gelu;
  double s_gelu = 1.0;
  IntLinear fc2;
  FixedPointScale res2_r, res2_s;
  double s_out = 1.0;
};

struct OpCounts {
  int64_t macs = 0;
  int64_t lookups = 0;
  int64_t max_abs_partial = 0;
  /// Two operations per multiply-accumulate.
  int64_t ops() const { return 2 * macs; }
};

/// MACs of one inference, counted from the shapes alone.
OpCounts count_ops(const ModelConfig& cfg);

/// Dequantized activations at each quantization point, keyed by point_name.
using ActivationTrace = std::map<std::string, Eigen::MatrixXd>;

struct ForwardResult {
  IntVector logits;
  double logit_scale = 1.0;
  OpCounts ops;
  Eigen::VectorXd real_logits() const { return logits.cast<double>() * logit_scale; }
};

struct IntModel {
  ModelConfig cfg;
  double s_img = 1.0;
  IntMatrix patch_w;
  double s_patch_w = 1.0;
  ConvSpec patch_spec;
  IntMatrix embed_bias;  ///< (patch tokens, CI) conv bias + position, at s_img * s_patch_w
  FixedPointScale embed_rq;
  double s_x0 = 1.0;
  IntVector cls;         ///< class token on the s_x0 grid (empty without class token)
  std::vector<IntBlock> blocks;
  LayerNormTables lnf;
  double s_lnf = 1.0;
  IntMatrix head_w;
  std::vector<int32_t> head_b;  ///< at s_lnf * s_head_w
  double s_head_w = 1.0;

  /// Quantized image (in_channels, H*W).
  IntMatrix quantize_image(const Eigen::MatrixXd& image) const;
  ForwardResult forward(const Eigen::MatrixXd& image, ActivationTrace* trace = nullptr) const;
  ForwardResult forward_quantized(const IntMatrix& image, ActivationTrace* trace = nullptr) const;

  IntMatrix embed(const IntMatrix& image, OpCounts& ops) const;
  IntMatrix block_forward(const IntBlock& b, int64_t index, const IntMatrix& x, OpCounts& ops,
                          ActivationTrace* trace) const;

  /// Float parameters equal to the dequantized integer weights (LayerNorm affine folded away).
  FloatParams dequantized_params() const;
  /// Scale and format of every quantization point, for fake-quant references.
  std::map<std::string, QuantFormat> point_formats() const;
};

struct QuantizeOptions {
  int table_n = 6;
  bool calibrate_tables = true;
  int calibration_iters = 16;
};

/// Post-training quantization: activation scales from float max-abs statistics over the
/// calibration images, then tables built and range-calibrated on integer samples.
IntModel quantize_model(const ModelConfig& cfg, const FloatParams& p,
                        const std::vector<Eigen::MatrixXd>& calibration_images,
                        const QuantizeOptions& opts = {});

/// Probe that snaps activations to the integer model's grids; with dequantized_params()
/// this gives a float reference whose only differences from the integer path are the tables.
Probe fake_quant_probe(const std::map<std::string, QuantFormat>& formats);

}  // namespace vitpipe

#endif  // VITPIPE_MODEL_HPP
