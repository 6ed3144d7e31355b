/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// Acceptance run: one PASS/FAIL line per criterion, with the measured value and the pinned
// tolerance. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vitpipe/attention_graph.hpp"
#include "vitpipe/lut.hpp"
#include "vitpipe/model.hpp"
#include "vitpipe/ops.hpp"
#include "vitpipe/resource.hpp"
#include "vitpipe/sim.hpp"
#include "vitpipe/tiling.hpp"

using namespace vitpipe;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream time;
  time << std::fixed << std::setprecision(3) << s << " s";
  if (limit_s > 0.0) {
    time << " (limit " << limit_s << " s)";
    if (s >= limit_s) {
      o.pass = false;
      o.detail += "; over time limit";
    }
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << std::setw(2) << id << " " << title << ": " << o.detail << " ["
            << time.str() << "]" << std::endl;
}

Outcome stage_iis() {
  const std::vector<int64_t> want{56448, 50176, 43904, 57624, 43904, 50176, 18816, 56448, 50176, 37632, 50176};
  std::vector<int64_t> got;
  for (const StageParallelism& s : ParallelismConfig::deit_tiny().stages) got.push_back(stage_ii(s));
  const int64_t acc = accelerator_ii(got);
  std::ostringstream d;
  d << "11 rows " << (got == want ? "equal" : "differ") << ", accelerator II " << acc << " (want 57624, exact)";
  return {got == want && acc == 57624, d.str()};
}

Outcome simulator_ii() {
  const ModelConfig cfg = ModelConfig::deit_tiny();
  GraphOptions go;
  go.blocks = cfg.blocks;
  const Graph g = build_attention_graph(cfg, ParallelismConfig::deit_tiny(), go);
  SimOptions so;
  so.images = 6;
  so.record_events = false;
  const SimTrace t = simulate(g, so);
  const auto ii = t.stable_ii();
  std::ostringstream d;
  d << cfg.blocks << " blocks, " << so.images << " images, status " << to_string(t.status) << ", stable II "
    << (ii ? std::to_string(*ii) : std::string("none")) << " (want 57624 from the third image on, exact)";
  return {ii && *ii == 57624, d.str()};
}

Outcome ideal_throughput() {
  const double ips = throughput(57624, 425e6).images_per_s;
  const double gops = 7118.0 * 2.5;
  const bool ok_ips = ips >= 7353.0 && ips <= 7376.0;
  const bool ok_gops = std::abs(gops - 17795.0) / 17795.0 <= 0.001;
  std::ostringstream d;
  d << std::fixed << std::setprecision(1) << ips << " images/s (want [7353, 7376]); 7118 x 2.5 GOPs = " << gops
    << " GOP/s (want 17795 within 0.1%)";
  return {ok_ips && ok_gops, d.str()};
}

Outcome buffer_cost_model() {
  const Graph g = build_attention_graph(ModelConfig::deit_tiny(), ParallelismConfig::deit_tiny());
  const int ch = g.channel_id("b0.residual");
  const int64_t tiles = g.stages[static_cast<size_t>(g.channels[static_cast<size_t>(ch)].from)].firings_per_image;
  SimOptions so;
  so.images = 6;
  so.record_events = false;
  const auto ii = simulate(g, so).stable_ii();
  if (!ii) return {false, "reference graph has no stable II"};
  const int64_t depth = min_fifo_depth_for_ii(g, ch, 1, 4 * tiles, *ii, so);
  const int64_t tensors = (depth + tiles - 1) / tiles;
  const BufferComparison c = compare_residual_buffers(6, 14, tensors);
  std::ostringstream d;
  d << "PIPO " << c.pipo_brams << " BRAMs (want 168), hybrid " << c.hybrid_brams << " BRAMs from a " << depth
    << "-tile deep FIFO, reduction " << std::fixed << std::setprecision(1) << 100.0 * c.reduction()
    << "% (want >= 83.0%)";
  return {c.pipo_brams == 168 && c.reduction() >= 0.830, d.str()};
}

Outcome pot_overflow() {
  int64_t checks = 0, violations = 0;
  for (int n : {4, 5, 6}) {
    const int64_t top = (int64_t{1} << n) - 1;
    for (int64_t a = -128; a <= 127; ++a) {
      for (int64_t b = a + 1; b <= 127; ++b) {
        const int s = pot_shift(a, b, n);
        for (int64_t d = a; d <= b; ++d) {
          const int64_t i = index_pot(d, a, s);
          const int64_t j = index_pot_inverted(d, b, s);
          violations += (i < 0 || i > top) + (j < 0 || j > top);
          checks += 2;
        }
      }
    }
  }
  std::ostringstream d;
  d << checks << " index evaluations over all 8-bit ranges, n in {4,5,6}: " << violations << " violations (want 0)";
  return {violations == 0, d.str()};
}

Outcome exp_anchor() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int64_t> len(1, 196);
  std::uniform_real_distribution<double> scale(1.0 / 32.0, 1.0);
  int anchor_fail = 0, sum_fail = 0;
  int64_t longest_failing = 0;
  double worst = 0.0;
  for (int r = 0; r < 1000; ++r) {
    const int64_t n = len(rng);
    const double ss = scale(rng);
    const SoftmaxTables t = build_softmax_tables(ss, n);
    const IntMatrix row = oracle::random_int(1, n, 8, rng);
    const int32_t mx = row.maxCoeff();
    const int32_t exp0 = static_cast<int32_t>(round_half_even(1.0 / t.exp.out_scale));
    if (t.exp.index(int64_t{mx} - mx) != 0 || t.exp.entries.front() != exp0) ++anchor_fail;
    const IntMatrix y = softmax_int(row, t);
    const double sum = y.cast<double>().sum() * t.out_scale();
    const double quantum = std::max(t.recip.low.out_scale, t.recip.high.out_scale);
    const double dev = std::abs(sum - 1.0);
    worst = std::max(worst, dev / (static_cast<double>(n) * quantum));
    if (dev > static_cast<double>(n) * quantum) {
      ++sum_fail;
      longest_failing = std::max(longest_failing, n);
    }
  }
  std::ostringstream d;
  d << "1000 rows: anchor failures " << anchor_fail << ", row-sum bound failures " << sum_fail
    << " (bound N x recip quantum, worst " << std::setprecision(3) << worst << " of bound";
  if (sum_fail > 0) d << ", longest failing row N = " << longest_failing;
  d << ")";
  return {anchor_fail == 0 && sum_fail == 0, d.str()};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int64_t> dim(1, 32);
  int mm_bad = 0, conv_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const int64_t t = dim(rng), ci = dim(rng), co = dim(rng);
    const IntMatrix x = oracle::random_int(t, ci, 4, rng);
    const IntMatrix w = oracle::random_int(co, ci, 4, rng);
    std::vector<int32_t> b(static_cast<size_t>(co));
    for (auto& v : b) v = static_cast<int32_t>(rng() % 256) - 128;
    mm_bad += tiled_matmul_os(x, w, b, oracle::random_spec(t, ci, co, rng)) != oracle::matmul(x, w, b);
  }
  std::uniform_int_distribution<int64_t> small(1, 8), kern(1, 4), stride(1, 3);
  for (int i = 0; i < 1000; ++i) {
    ConvSpec s;
    s.kh = kern(rng);
    s.kw = kern(rng);
    s.hs = stride(rng);
    s.ws = stride(rng);
    const int64_t h = s.kh + s.hs * (small(rng) - 1), w_dim = s.kw + s.ws * (small(rng) - 1);
    const int64_t ci = small(rng), co = small(rng);
    s.hip = oracle::divisor(s.out_h(h), rng);
    s.wip = oracle::divisor(s.out_w(w_dim), rng);
    s.cip = oracle::divisor(ci, rng);
    s.cop = oracle::divisor(co, rng);
    const IntMatrix x = oracle::random_int(ci, h * w_dim, 8, rng);
    const IntMatrix w = oracle::random_int(co, ci * s.kh * s.kw, 4, rng);
    conv_bad += conv_step3macs(x, h, w_dim, w, s) != oracle::conv(x, h, w_dim, w, s);
  }
  std::ostringstream d;
  d << "1000 matmuls: " << mm_bad << " mismatches; 1000 convolutions: " << conv_bad << " mismatches (want 0, exact)";
  return {mm_bad == 0 && conv_bad == 0, d.str()};
}

Outcome tiling_invariance() {
  std::mt19937_64 rng(8);
  const int64_t t = 24, ci = 32, co = 18;
  const IntMatrix x = oracle::random_int(t, ci, 4, rng);
  const IntMatrix w = oracle::random_int(co, ci, 4, rng);
  std::vector<int32_t> b(co, 5);
  const IntMatrix img = oracle::random_int(4, 12 * 12, 8, rng);
  const IntMatrix k = oracle::random_int(6, 4 * 9, 4, rng);
  ConvSpec base;
  base.kh = base.kw = 3;
  int bad = 0;
  for (int i = 0; i < 100; ++i) {
    bad += tiled_matmul_os(x, w, b, oracle::random_spec(t, ci, co, rng)) !=
           tiled_matmul_os(x, w, b, oracle::random_spec(t, ci, co, rng));
    ConvSpec s1 = base, s2 = base;
    for (ConvSpec* s : {&s1, &s2}) {
      s->hip = oracle::divisor(10, rng);
      s->wip = oracle::divisor(10, rng);
      s->cip = oracle::divisor(4, rng);
      s->cop = oracle::divisor(6, rng);
    }
    bad += conv_step3macs(img, 12, 12, k, s1) != conv_step3macs(img, 12, 12, k, s2);
  }
  std::ostringstream d;
  d << "100 matmul and 100 convolution tiling pairs: " << bad << " differences (want 0, exact)";
  return {bad == 0, d.str()};
}

Outcome segmented_recip() {
  const int64_t beta = 196 * 255;
  const double in = 1.0 / 255.0;
  const SegmentedLutTable seg = build_segmented_recip(beta, 6, 8, in, 1.0);
  const LutTable one = build_recip_table(beta, 6, 8, in, 1.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(std::log(255.0), std::log(static_cast<double>(beta)));
  std::vector<int64_t> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(static_cast<int64_t>(std::llround(std::exp(u(rng)))));
  auto f = [in](double x) { return 1.0 / (x * in); };
  const double ms = table_error(seg, f, xs).mse;
  const double m1 = table_error(one, f, xs).mse;
  std::ostringstream d;
  d << "MSE segmented " << std::scientific << std::setprecision(3) << ms << " vs single " << m1 << ", ratio "
    << std::fixed << std::setprecision(2) << m1 / ms << " (want >= 2; pivot " << seg.pivot << " = beta/8)";
  return {seg.pivot == beta / 8 && m1 >= 2.0 * ms, d.str()};
}

Outcome joint_calibration() {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int64_t> lo_d(-2000, 0), span_d(500, 4000);
  std::uniform_real_distribution<double> clip_d(0.1, 0.4);
  int bad = 0, max_iters = 0;
  for (int k = 0; k < 100; ++k) {
    const int64_t a = lo_d(rng), b = a + span_d(rng);
    const double xc = a + clip_d(rng) * static_cast<double>(b - a);
    // Flat left of xc, then rising 1000 steps by b. The 12-bit output leaves headroom so the
    // extrapolated bins past b never saturate.
    auto f = [=](double x) { return 1000.0 * (std::max(x, xc) - xc) / (static_cast<double>(b) - xc); };
    auto builder = [&](int64_t lo, int64_t hi) {
      TableSpec spec;
      spec.out_bits = 12;
      spec.out_signed = false;
      spec.out_scale = 1.0;
      return build_table(f, lo, hi, spec);
    };
    std::vector<int64_t> samples;
    std::uniform_int_distribution<int64_t> s(a, b);
    for (int i = 0; i < 2000; ++i) samples.push_back(s(rng));
    samples.push_back(a);
    samples.push_back(b);
    const LutTable before = builder(a, b);
    const CalibrationResult r = joint_range_calibration(samples, builder, 16);
    max_iters = std::max(max_iters, r.iterations);
    if (r.alpha <= a || least_significant_index(r.table) != 0 ||
        repeated_entries(r.table) >= repeated_entries(before) ||
        r.iterations > 16) {
      ++bad;
    }
  }
  std::ostringstream d;
  d << "100 clamped curves: " << bad << " failures (want alpha raised, LSI 0, fewer repeated entries), at most " << max_iters
    << " iterations (want <= 16)";
  return {bad == 0 && max_iters <= 16, d.str()};
}

Outcome deadlock_behaviour() {
  const Graph g = build_attention_graph(ModelConfig::deit_tiny(), ParallelismConfig::deit_tiny());
  const int ch = g.channel_id("b0.residual");
  SimOptions so;
  so.images = 5;
  so.record_events = false;
  Graph shallow = g;
  shallow.channels[static_cast<size_t>(ch)].depth = 2;
  const bool deadlocks = simulate(shallow, so).status == SimStatus::kDeadlock;
  const int64_t d = min_fifo_depth(g, ch, 1, 512, so);
  Graph found = g;
  found.channels[static_cast<size_t>(ch)].depth = d;
  const bool completes = simulate(found, so).status == SimStatus::kCompleted;

  std::mt19937_64 rng(11);
  int non_monotone = 0, searched = 0, search_mismatch = 0;
  SimOptions small;
  small.images = 3;
  small.record_events = false;
  for (int k = 0; k < 50; ++k) {
    const Graph r = oracle::random_graph(rng);
    std::vector<int> fifos;
    for (size_t c = 0; c < r.channels.size(); ++c) {
      if (r.channels[c].kind == ChannelKind::kFifo) fifos.push_back(static_cast<int>(c));
    }
    const int c = fifos[std::uniform_int_distribution<size_t>(0, fifos.size() - 1)(rng)];
    int64_t first = -1;
    for (int64_t depth = 1; depth <= 24; ++depth) {
      Graph h = r;
      h.channels[static_cast<size_t>(c)].depth = depth;
      const bool done = simulate(h, small).status == SimStatus::kCompleted;
      if (done && first < 0) first = depth;
      if (!done && first >= 0) ++non_monotone;
    }
    if (first >= 0) {
      ++searched;
      if (min_fifo_depth(r, c, 1, 24, small) != first) ++search_mismatch;
    }
  }
  std::ostringstream o;
  o << "depth 2 " << (deadlocks ? "deadlocks" : "does not deadlock") << "; search finds " << d << " tiles, "
    << (completes ? "completes" : "fails") << "; 50 random graphs: " << non_monotone << " monotonicity violations, "
    << search_mismatch << " search mismatches over " << searched << " searchable";
  return {deadlocks && completes && non_monotone == 0 && search_mismatch == 0, o.str()};
}

Outcome recorded_only() {
  const nlohmann::json r = recorded_measurements();
  const bool ok = r["imagenet_top1"]["a4w4"] == 0.7437 && r["imagenet_top1"]["a3w3"] == 0.7105 &&
                  r["image1_latency_cycles"] == 824843;
  ModelConfig cfg = ModelConfig::deit_tiny();
  GraphOptions go;
  go.blocks = cfg.blocks;
  SimOptions so;
  so.images = 3;
  so.record_events = false;
  const SimTrace t = simulate(build_attention_graph(cfg, ParallelismConfig::deit_tiny(), go), so);
  std::ostringstream d;
  d << "not reproducible at desk scale; recorded constants carried in reports (top-1 74.37% / 71.05%, image-1 "
       "latency 824843 cycles; simulated image-1 latency "
    << t.images.front().latency() << " cycles, same order)";
  return {ok, d.str()};
}

}  // namespace

int main() {
  std::cout << "acceptance criteria" << std::endl;
  run(1, "per-stage II reproduction", 1.0, stage_iis);
  run(2, "simulator stable II", 10.0, simulator_ii);
  run(3, "ideal throughput", 0.0, ideal_throughput);
  run(4, "buffer-cost model", 0.0, buffer_cost_model);
  run(5, "PoT overflow-freedom", 30.0, pot_overflow);
  run(6, "inverted-exp anchor", 0.0, exp_anchor);
  run(7, "oracle equivalence", 60.0, oracle_equivalence);
  run(8, "tiling invariance", 0.0, tiling_invariance);
  run(9, "segmented recip improvement", 0.0, segmented_recip);
  run(10, "joint calibration", 0.0, joint_calibration);
  run(11, "deadlock behaviour", 0.0, deadlock_behaviour);
  run(12, "recorded measurements", 0.0, recorded_only);
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
