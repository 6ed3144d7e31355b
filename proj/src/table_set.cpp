/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/table_set.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <random>
#include <stdexcept>

namespace vitpipe {

using nlohmann::json;

namespace {

constexpr int kExpBits = 8;
constexpr int kRecipBits = 8;
constexpr int kRsqrtBits = 12;
constexpr double kAccScale = 1.0 / 256.0;
constexpr double kScoreScale = 1.0 / 16.0;
constexpr double kResidualScale = 1.0 / 16.0;

double exp_quantum() { return 1.0 / static_cast<double>(quant_range(kExpBits, false).max); }

int64_t recip_beta(const ModelConfig& cfg) {
  return cfg.tokens() * quant_range(kExpBits, false).max;
}

struct Family {
  TableBuilder build;
  std::function<double(double)> oracle;
};

Family family(const ModelConfig& cfg, const FamilySamples& s, int n) {
  const int act = cfg.act_bits;
  const QuantRange q = quant_range(act);
  const double in = s.in_scale;
  if (s.name == "requant") {
    const double out = 2.5 / static_cast<double>(q.max);
    return {[=](int64_t a, int64_t b) { return build_requant_table(in, out, act, a, b, n); },
            [=](double x) { return std::clamp(x * in, q.min * out, q.max * out); }};
  }
  if (s.name == "gelu") {
    const double out = 3.0 / static_cast<double>(q.max);
    return {[=](int64_t a, int64_t b) { return fuse_gelu_requant(in, out, act, a, b, n); },
            [=](double x) { return std::clamp(gelu(x * in), q.min * out, q.max * out); }};
  }
  if (s.name == "exp") {
    return {[=](int64_t a, int64_t) { return build_exp_table(std::min<int64_t>(a, -1), n, kExpBits, in); },
            [=](double x) { return std::exp(x * in); }};
  }
  if (s.name == "rsqrt") {
    return {[=](int64_t a, int64_t b) { return build_rsqrt_table(a, b, n, kRsqrtBits, in, kLayerNormEps); },
            [=](double x) { return 1.0 / std::sqrt(x * in + kLayerNormEps); }};
  }
  throw std::invalid_argument("unknown table family " + s.name);
}

FamilyReport build_family(const ModelConfig& cfg, const FamilySamples& s, const TableSetOptions& opts) {
  if (s.samples.empty()) throw std::invalid_argument("table family " + s.name + " has no samples");
  const Family f = family(cfg, s, opts.n);
  FamilyReport r;
  r.name = s.name;
  if (opts.calibrate) {
    CalibrationResult c = joint_range_calibration(s.samples, f.build, opts.max_iters);
    r.table = std::move(c.table);
    r.iterations = c.iterations;
  } else {
    const auto [lo, hi] = std::minmax_element(s.samples.begin(), s.samples.end());
    r.table = f.build(*lo, std::max(*hi, *lo + 1));
  }
  r.error = table_error(r.table, f.oracle, s.samples);
  return r;
}

json table_summary(const LutTable& t) {
  return {{"n", t.n},
          {"alpha", t.alpha},
          {"beta", t.beta},
          {"s_pot", t.s_pot},
          {"inverted", t.inverted},
          {"out_bits", t.out_bits},
          {"out_scale", t.out_scale},
          {"repeated_entries", repeated_entries(t)},
          {"lsi", least_significant_index(t)},
          {"msi", most_significant_index(t)}};
}

json error_json(const TableError& e) { return {{"max_abs_err", e.max_abs}, {"mse", e.mse}}; }

const FamilySamples& find(const std::vector<FamilySamples>& all, const std::string& name) {
  for (const FamilySamples& s : all) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("missing samples for table family " + name);
}

const char* const kFamilies[] = {"exp", "gelu", "rsqrt", "requant", "recip"};

}  // namespace

std::vector<FamilySamples> synthetic_samples(const ModelConfig& cfg, uint64_t seed, int64_t count) {
  if (count < 1) throw std::invalid_argument("synthetic_samples: count must be positive");
  std::mt19937_64 rng(seed);
  std::student_t_distribution<double> heavy(3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<FamilySamples> out;
  FamilySamples acc{"requant", kAccScale, {}};
  FamilySamples pre_gelu{"gelu", kAccScale, {}};
  for (int64_t i = 0; i < count; ++i) {
    acc.samples.push_back(round_half_even(1.2 * heavy(rng) / kAccScale));
    pre_gelu.samples.push_back(round_half_even(1.2 * heavy(rng) / kAccScale));
  }

  // Softmax inputs: row-max-subtracted integer scores.
  FamilySamples exp{"exp", kScoreScale, {}};
  const int64_t row = cfg.tokens();
  while (static_cast<int64_t>(exp.samples.size()) < count) {
    std::vector<int64_t> r(static_cast<size_t>(row));
    for (int64_t& v : r) v = round_half_even(2.0 * normal(rng) / kScoreScale);
    const int64_t mx = *std::max_element(r.begin(), r.end());
    for (int64_t v : r) exp.samples.push_back(v - mx);
  }
  exp.samples.resize(static_cast<size_t>(count));

  // LayerNorm variance numerators C*sum(x^2) - sum(x)^2 of int8 residual tokens.
  FamilySamples var{"rsqrt", 0.0, {}};
  const int64_t c = cfg.embed;
  var.in_scale = kResidualScale * kResidualScale / static_cast<double>(c * c);
  const QuantRange r8 = quant_range(cfg.res_bits);
  for (int64_t i = 0; i < std::max<int64_t>(count / 8, 1); ++i) {
    const double sigma = 0.25 * std::pow(16.0, unit(rng));
    int64_t sum = 0, sq = 0;
    for (int64_t k = 0; k < c; ++k) {
      const int64_t v = clamp_to(round_half_even(sigma * normal(rng) / kResidualScale), r8);
      sum += v;
      sq += v * v;
    }
    var.samples.push_back(c * sq - sum * sum);
  }

  // Softmax denominators, log-uniform over one element to a full row at exp(0).
  FamilySamples recip{"recip", exp_quantum(), {}};
  const double lo = std::log(static_cast<double>(quant_range(kExpBits, false).max));
  const double hi = std::log(static_cast<double>(recip_beta(cfg)));
  for (int64_t i = 0; i < count; ++i) {
    recip.samples.push_back(round_half_even(std::exp(lo + (hi - lo) * unit(rng))));
  }

  out.push_back(std::move(exp));
  out.push_back(std::move(pre_gelu));
  out.push_back(std::move(var));
  out.push_back(std::move(acc));
  out.push_back(std::move(recip));
  return out;
}

std::vector<FamilySamples> samples_from_json(const json& j) {
  std::vector<FamilySamples> out;
  try {
    const json& fams = j.at("families");
    for (const char* name : kFamilies) {
      if (!fams.contains(name)) throw std::invalid_argument(std::string("samples file has no family ") + name);
      const json& f = fams.at(name);
      FamilySamples s{name, f.at("in_scale").get<double>(), f.at("samples").get<std::vector<int64_t>>()};
      if (!(s.in_scale > 0.0)) throw std::invalid_argument("family " + s.name + ": in_scale must be positive");
      if (s.samples.empty()) throw std::invalid_argument("family " + s.name + ": no samples");
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("samples file: ") + e.what());
  }
  return out;
}

json samples_to_json(const std::vector<FamilySamples>& all) {
  json fams = json::object();
  for (const FamilySamples& s : all) fams[s.name] = {{"in_scale", s.in_scale}, {"samples", s.samples}};
  return {{"families", fams}};
}

int64_t TableSet::repeated_entries() const {
  int64_t total = vitpipe::repeated_entries(recip.low) + vitpipe::repeated_entries(recip.high);
  for (const FamilyReport& f : families) total += vitpipe::repeated_entries(f.table);
  return total;
}

json TableSet::report() const {
  json fams = json::array();
  for (const FamilyReport& f : families) {
    json r = table_summary(f.table);
    r["name"] = f.name;
    r["iterations"] = f.iterations;
    r.update(error_json(f.error));
    fams.push_back(r);
  }
  json seg{{"name", "recip"},
           {"pivot", recip.pivot},
           {"low", table_summary(recip.low)},
           {"high", table_summary(recip.high)}};
  seg.update(error_json(recip_error));
  json single = table_summary(recip_single);
  single["name"] = "recip_single";
  single.update(error_json(recip_single_error));
  fams.push_back(seg);
  fams.push_back(single);
  return {{"families", fams},
          {"repeated_entries", repeated_entries()},
          {"recip_mse_ratio", recip_error.mse > 0.0 ? json(recip_single_error.mse / recip_error.mse) : json(nullptr)}};
}

TableSet build_table_set(const ModelConfig& cfg, const std::vector<FamilySamples>& samples,
                         const TableSetOptions& opts) {
  if (opts.n < 1 || opts.n > 16) throw std::invalid_argument("table index bits must be in [1, 16]");
  const char* const calibrated[] = {"exp", "gelu", "rsqrt", "requant"};
  TableSet set;
  std::vector<std::future<FamilyReport>> pending;
  for (const char* name : calibrated) {
    const FamilySamples& s = find(samples, name);
    auto job = [&cfg, &s, &opts] { return build_family(cfg, s, opts); };
    pending.push_back(std::async(opts.jobs > 1 ? std::launch::async : std::launch::deferred, job));
  }
  for (auto& f : pending) set.families.push_back(f.get());

  const FamilySamples& r = find(samples, "recip");
  const int64_t beta = std::max(recip_beta(cfg), *std::max_element(r.samples.begin(), r.samples.end()));
  const double in = r.in_scale;
  set.recip = build_segmented_recip(beta, opts.n, kRecipBits, in, 1.0);
  set.recip_single = build_recip_table(beta, opts.n, kRecipBits, in, 1.0);
  auto oracle = [in](double x) { return 1.0 / std::max(x * in, 1.0); };
  set.recip_error = table_error(set.recip, oracle, r.samples);
  set.recip_single_error = table_error(set.recip_single, oracle, r.samples);
  return set;
}

}  // namespace vitpipe
