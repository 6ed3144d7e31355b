/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "vitpipe/bundle.hpp"
#include "vitpipe/model.hpp"

using namespace vitpipe;
namespace fs = std::filesystem;

namespace {

// Agreement rates measured before the build and frozen here.
constexpr double kToyArgmaxRate = 0.90;       // one model, 200 images: measured 190/200 against fake-quant
constexpr double kToyModelSweepRate = 0.80;   // 200 models, one image each: measured 169/200
constexpr double kToyMhaTokenRate = 0.85;     // measured 358-363/400 against the fake-quant reference

IntModel quantized(const ModelConfig& cfg, const FloatParams& p, uint64_t seed) {
  std::vector<Eigen::MatrixXd> cal;
  for (uint64_t i = 0; i < 4; ++i) cal.push_back(random_image(cfg, 100 + i + seed * 7));
  return quantize_model(cfg, p, cal);
}

Eigen::Index argmax_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  Eigen::Index i = 0;
  m.row(r).maxCoeff(&i);
  return i;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("vitpipe_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("presets have the expected shapes") {
    const ModelConfig t = ModelConfig::deit_tiny();
    CHECK(t.tokens() == 196);
    CHECK(t.embed == 192);
    CHECK(t.heads * t.head_dim == t.embed);
    CHECK_NOTHROW(t.validate());
    CHECK(ModelConfig::toy().tokens() == 8);
    CHECK(ModelConfig::toy().embed == 12);
    CHECK(ModelConfig::toy_mha().tokens() == 4);
    CHECK_THROWS_AS(ModelConfig::preset("resnet"), std::invalid_argument);
    ModelConfig bad = t;
    bad.patch = 15;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    ModelConfig r = t;
    apply_bit_regime(r, "a3w3");
    CHECK(r.act_bits == 3);
    CHECK(r.weight_bits == 3);
    CHECK_THROWS_AS(apply_bit_regime(r, "a5w5"), std::invalid_argument);
  }

  TEST_CASE("DeiT-tiny operation count is about 2.5 GOPs") {
    const OpCounts ops = count_ops(ModelConfig::deit_tiny());
    CHECK(ops.macs == 1246563840);
    CHECK(static_cast<double>(ops.ops()) / 1e9 == doctest::Approx(2.49).epsilon(0.01));
  }

  TEST_CASE("integer inference is deterministic") {
    const ModelConfig cfg = ModelConfig::toy();
    const FloatParams p = FloatParams::random(cfg, 1);
    const IntModel m = quantized(cfg, p, 1);
    const Eigen::MatrixXd img = random_image(cfg, 77);
    const ForwardResult a = m.forward(img);
    const ForwardResult b = m.forward(img);
    CHECK(a.logits == b.logits);
    CHECK(a.ops.macs == count_ops(cfg).macs);
  }

  TEST_CASE("toy model argmax agrees with the fake-quant reference") {
    const ModelConfig cfg = ModelConfig::toy();
    const FloatParams p = FloatParams::random(cfg, 1);
    std::vector<Eigen::MatrixXd> cal;
    for (uint64_t i = 0; i < 8; ++i) cal.push_back(random_image(cfg, 100 + i));
    const IntModel m = quantize_model(cfg, p, cal);
    const FloatParams dq = m.dequantized_params();
    const Probe fq = fake_quant_probe(m.point_formats());
    int agree = 0;
    const int draws = 200;
    for (int d = 0; d < draws; ++d) {
      const Eigen::MatrixXd img = random_image(cfg, 1000 + static_cast<uint64_t>(d));
      Eigen::Index a = 0, b = 0;
      m.forward(img).real_logits().maxCoeff(&a);
      reference_forward(cfg, dq, img, fq).maxCoeff(&b);
      agree += a == b;
    }
    MESSAGE("toy argmax agreement " << agree << "/" << draws);
    CHECK(static_cast<double>(agree) / draws >= kToyArgmaxRate);
  }

  TEST_CASE("toy argmax agreement across random models") {
    const ModelConfig cfg = ModelConfig::toy();
    int agree = 0;
    const int draws = 200;
    for (int d = 0; d < draws; ++d) {
      const FloatParams p = FloatParams::random(cfg, 10 + static_cast<uint64_t>(d));
      const IntModel m = quantized(cfg, p, static_cast<uint64_t>(d));
      const Eigen::MatrixXd img = random_image(cfg, 5000 + static_cast<uint64_t>(d));
      const Eigen::VectorXd got = m.forward(img).real_logits();
      const Eigen::VectorXd ref =
          reference_forward(cfg, m.dequantized_params(), img, fake_quant_probe(m.point_formats()));
      Eigen::Index a = 0, b = 0;
      got.maxCoeff(&a);
      ref.maxCoeff(&b);
      agree += a == b;
    }
    MESSAGE("toy argmax agreement over models " << agree << "/" << draws);
    CHECK(static_cast<double>(agree) / draws >= kToyModelSweepRate);
  }

  TEST_CASE("attention block per-token argmax agrees with the fake-quant reference") {
    const ModelConfig cfg = ModelConfig::toy_mha();
    int agree = 0, total = 0;
    for (int d = 0; d < 100; ++d) {
      const FloatParams p = FloatParams::random(cfg, 10 + static_cast<uint64_t>(d));
      const IntModel m = quantized(cfg, p, static_cast<uint64_t>(d));
      const Eigen::MatrixXd img = random_image(cfg, 5000 + static_cast<uint64_t>(d));
      ActivationTrace tr;
      m.forward(img, &tr);
      const Probe fq = fake_quant_probe(m.point_formats());
      Eigen::MatrixXd ref;
      reference_forward(cfg, m.dequantized_params(), img, [&](std::string_view n, Eigen::MatrixXd& x) {
        fq(n, x);
        if (n == "blocks.0.mid") ref = x;
      });
      const Eigen::MatrixXd& got = tr.at("blocks.0.mid");
      REQUIRE(got.rows() == ref.rows());
      for (Eigen::Index t = 0; t < got.rows(); ++t) {
        agree += argmax_row(got, t) == argmax_row(ref, t);
        ++total;
      }
    }
    MESSAGE("per-token agreement " << agree << "/" << total);
    CHECK(static_cast<double>(agree) / total >= kToyMhaTokenRate);
  }

  TEST_CASE("zero attention weights leave the residual stream unchanged") {
    const ModelConfig cfg = ModelConfig::toy_mha();
    FloatParams p = FloatParams::random(cfg, 3);
    for (BlockParams& b : p.blocks) {
      b.wo.setZero();
      b.bo.setZero();
      b.w2.setZero();
      b.b2.setZero();
    }
    const IntModel m = quantized(cfg, p, 3);
    ActivationTrace tr;
    m.forward(random_image(cfg, 9), &tr);
    CHECK((tr.at("blocks.0.mid") - tr.at("embed")).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((tr.at("blocks.0.out") - tr.at("embed")).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("bundle round trip preserves inference") {
    const ModelConfig cfg = ModelConfig::toy();
    const FloatParams p = FloatParams::random(cfg, 4);
    const IntModel m = quantized(cfg, p, 4);
    const fs::path dir = scratch_dir("bundle");
    save_bundle(dir, m, &p);
    const Bundle b = load_bundle(dir);
    REQUIRE(b.float_params.has_value());
    const Eigen::MatrixXd img = random_image(cfg, 12);
    CHECK(b.model.forward(img).logits == m.forward(img).logits);
    CHECK(b.float_params->head_w == p.head_w);
    CHECK_THROWS_AS(load_bundle(dir / "missing"), BundleError);
    fs::remove_all(dir);
  }

  TEST_CASE("image files round trip and reject wrong shapes") {
    const ModelConfig cfg = ModelConfig::toy();
    const fs::path dir = scratch_dir("image");
    fs::create_directories(dir);
    const Eigen::MatrixXd img = random_image(cfg, 5);
    save_image(dir / "img.json", cfg, img);
    CHECK(load_image(dir / "img.json", cfg) == img);
    CHECK_THROWS_AS(load_image(dir / "img.json", ModelConfig::toy_mha()), std::invalid_argument);
    fs::remove_all(dir);
  }
}
