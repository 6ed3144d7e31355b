/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "vitpipe/model.hpp"
#include "vitpipe/resource.hpp"

using namespace vitpipe;

TEST_SUITE("resource") {
  TEST_CASE("stage II examples") {
    CHECK(stage_ii({2, 6, 4}, 196, 192, 64, 1) == 50176);
    CHECK(stage_ii({2, 1, 1}, 196, 196, 1, 3) == 57624);
    CHECK(stage_ii({2, 4, 7}, 196, 64, 196, 1) == 43904);
    CHECK_THROWS_AS(stage_ii({3, 1, 1}, 196, 192, 1, 1), std::invalid_argument);
  }

  TEST_CASE("accelerator II is the maximum") {
    CHECK(accelerator_ii({42}) == 42);
    CHECK(accelerator_ii({7, 7, 7}) == 7);
    CHECK_THROWS_AS(accelerator_ii({}), std::invalid_argument);
  }

  TEST_CASE("DeiT-tiny rows tile by 98 tokens") {
    for (const StageParallelism& s : ParallelismConfig::deit_tiny().stages) CHECK(s.tt() == 98);
    const StageParallelism& qkv = ParallelismConfig::deit_tiny().find("QKV Gen");
    CHECK(qkv.cit() == 32);
    CHECK(qkv.cot() == 16);
    CHECK_THROWS_AS(ParallelismConfig::deit_tiny().find("Conv"), std::invalid_argument);
  }

  TEST_CASE("parallelism JSON round trip") {
    const ParallelismConfig p = ParallelismConfig::deit_tiny();
    const ParallelismConfig q = parallelism_from_json(parallelism_to_json(p));
    REQUIRE(q.stages.size() == p.stages.size());
    for (size_t i = 0; i < p.stages.size(); ++i) CHECK(stage_ii(q.stages[i]) == stage_ii(p.stages[i]));
    CHECK_THROWS_AS(parallelism_from_json(nlohmann::json{{"stages", {{{"name", "x"}}}}}), std::invalid_argument);
  }

  TEST_CASE("BRAM count and efficiency") {
    const BramUsage full = bram_count_and_efficiency(36, 1, 1, 1024, 1);
    CHECK(full.brams == 1);
    CHECK(full.efficiency == doctest::Approx(1.0));
    const BramUsage qkv = bram_count_and_efficiency(4, 6, 4, 32, 16);
    CHECK(qkv.brams == 3);
    CHECK(qkv.efficiency == doctest::Approx(49152.0 / 110592.0));
    const BramUsage narrow = bram_count_and_efficiency(4, 7, 4, 16, 28, BramSpec{72, 512});
    CHECK(narrow.brams == 2);
    CHECK(narrow.efficiency == doctest::Approx(50176.0 / 73728.0));
  }

  TEST_CASE("buffer costs") {
    BufferSpec fifo{BufferKind::kFifo, 0, 8, 1, 0};
    CHECK(buffer_cost(fifo) == 0);
    BufferSpec pipo{BufferKind::kPipo, 196 * 192, 8, 1, 0};
    BufferSpec deep{BufferKind::kDeepBuffer, 196 * 192, 8, 1, 0};
    CHECK(buffer_cost(pipo) == 2 * buffer_cost(deep));
    CHECK(packed_brams(1024, 36) == 1);
    CHECK(packed_brams(1025, 36) == 2);
    CHECK(packed_brams(1024, 37) == 2);
    const BufferComparison c = compare_residual_buffers(6, 14, 2);
    CHECK(c.pipo_brams == 168);
    CHECK(c.hybrid_brams == 28);
    CHECK(c.reduction() == doctest::Approx(1.0 - 1.0 / 6.0));
  }

  TEST_CASE("naive DSP estimate") {
    const CostTable cost = CostTable::defaults();
    CHECK(cost.find("GeLU").naive_dsp == 26);
    CHECK(cost.find("Exp").naive_dsp == 7);
    CHECK(cost.find("Rsqrt").naive_dsp == 8);
    CHECK(cost.find("Recip").naive_dsp == 9);
    const DspEstimate none = naive_dsp_estimate(ModelConfig::deit_tiny(), ParallelismConfig{}, cost, 0);
    CHECK(none.total() == 0);
    ParallelismConfig one;
    StageParallelism gelu;
    gelu.name = "GeLU";
    gelu.block = "MLP";
    one.stages.push_back(gelu);
    ModelConfig single = ModelConfig::deit_tiny();
    single.blocks = 1;
    CHECK(naive_dsp_estimate(single, one, cost, 0).total() == 26);
    CHECK(naive_dsp_estimate(ModelConfig::deit_tiny(), ParallelismConfig::deit_tiny(), cost).total() == 3024);
  }

  TEST_CASE("roofline") {
    CHECK(roofline({"x", 10.0, 1.0, 4.0}) == 4.0);
    CHECK(roofline({"x", 10.0, 1.0, 1e12}) == 10.0);
    const nlohmann::json j = {{"platform", {{"dsp_ceiling", 3.2e12}, {"lut_ceiling", 14.6e12}, {"bandwidth", 25.6e9}}},
                              {"scenarios",
                               {{{"name", "a"}, {"ceiling", "dsp"}, {"intensity", 43.0}},
                                {{"name", "b"}, {"ceiling", "combined"}, {"intensity", 1e5}},
                                {{"name", "c"}, {"ceiling", 5.0}, {"intensity", 1.0}}}}};
    const auto s = scenarios_from_json(j);
    REQUIRE(s.size() == 3);
    CHECK(s[0].name == "a");
    CHECK(roofline(s[0]) == doctest::Approx(1.1008e12));
    CHECK(roofline(s[1]) == doctest::Approx(17.8e12));
    CHECK(roofline(s[2]) == doctest::Approx(5.0));
  }

  TEST_CASE("balance report") {
    const BalanceReport b = balance_report(ParallelismConfig::deit_tiny());
    CHECK(b.bottleneck == "Softmax");
    CHECK(b.accelerator_ii == 57624);
    double worst = 0.0;
    std::string worst_name;
    for (const BalanceRow& r : b.rows) {
      if (r.name == "QKV Gen") CHECK(r.bubble == doctest::Approx(1.0 - 50176.0 / 57624.0));
      if (r.bubble > worst) {
        worst = r.bubble;
        worst_name = r.name;
      }
    }
    CHECK(worst_name == "Residual Add");
  }

  TEST_CASE("throughput") {
    const Throughput t = throughput(57624, 425e6);
    CHECK(t.images_per_s == doctest::Approx(425e6 / 57624.0));
    CHECK(throughput(57624, 850e6).images_per_s == doctest::Approx(2 * t.images_per_s));
    CHECK_THROWS_AS(throughput(0, 1.0), std::invalid_argument);
  }

  TEST_CASE("resource report has the 11 rows") {
    const nlohmann::json r = resource_report(ParallelismConfig::deit_tiny());
    CHECK(r["rows"].size() == 11);
    CHECK(r["accelerator_ii"] == 57624);
    CHECK(recorded_measurements()["image1_latency_cycles"] == 824843);
  }
}
