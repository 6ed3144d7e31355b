/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/sim.hpp"

#include <algorithm>
#include <future>
#include <limits>
#include <stdexcept>

namespace vitpipe {

using nlohmann::json;

int Graph::add_stage(std::string name, int64_t ii_per_output, int64_t firings_per_image) {
  StageSpec s;
  s.name = std::move(name);
  s.ii_per_output = ii_per_output;
  s.firings_per_image = firings_per_image;
  stages.push_back(std::move(s));
  return static_cast<int>(stages.size()) - 1;
}

int Graph::connect(int from, int to, ChannelKind kind, int64_t depth, std::string name,
                   int64_t tile_size) {
  const int n = static_cast<int>(stages.size());
  if (from < 0 || from >= n || to < 0 || to >= n) throw std::invalid_argument("connect: no such stage");
  const int id = static_cast<int>(channels.size());
  if (name.empty()) name = stages[static_cast<size_t>(from)].name + "->" + stages[static_cast<size_t>(to)].name;
  channels.push_back(ChannelSpec{std::move(name), kind, from, to, depth, tile_size});
  stages[static_cast<size_t>(from)].outputs.push_back(id);
  stages[static_cast<size_t>(to)].inputs.push_back(id);
  if (kind != ChannelKind::kFifo) stages[static_cast<size_t>(to)].mode = DependencyMode::kGatherThenStream;
  return id;
}

int Graph::stage_id(std::string_view name) const {
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].name == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("no stage named " + std::string(name));
}

int Graph::channel_id(std::string_view name) const {
  for (size_t i = 0; i < channels.size(); ++i) {
    if (channels[i].name == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("no channel named " + std::string(name));
}

void Graph::validate() const {
  const int n = static_cast<int>(stages.size());
  if (n == 0) throw std::invalid_argument("graph has no stages");
  for (const StageSpec& s : stages) {
    if (s.ii_per_output < 1) throw std::invalid_argument("stage " + s.name + ": ii_per_output < 1");
    if (s.firings_per_image < 1) throw std::invalid_argument("stage " + s.name + ": firings_per_image < 1");
    for (int c : s.inputs) {
      if (c < 0 || c >= static_cast<int>(channels.size())) throw std::invalid_argument("stage " + s.name + ": unknown input");
    }
    for (int c : s.outputs) {
      if (c < 0 || c >= static_cast<int>(channels.size())) throw std::invalid_argument("stage " + s.name + ": unknown output");
    }
  }
  for (size_t i = 0; i < channels.size(); ++i) {
    const ChannelSpec& c = channels[i];
    if (c.from < 0 || c.from >= n || c.to < 0 || c.to >= n) throw std::invalid_argument("channel " + c.name + " is dangling");
    const StageSpec& p = stages[static_cast<size_t>(c.from)];
    const StageSpec& q = stages[static_cast<size_t>(c.to)];
    const int id = static_cast<int>(i);
    if (std::count(p.outputs.begin(), p.outputs.end(), id) != 1 ||
        std::count(q.inputs.begin(), q.inputs.end(), id) != 1) {
      throw std::invalid_argument("channel " + c.name + " is not wired to its stages");
    }
    if (c.tile_size < 1) throw std::invalid_argument("channel " + c.name + ": tile_size < 1");
    if (c.kind == ChannelKind::kFifo) {
      if (c.depth < 1) throw std::invalid_argument("channel " + c.name + ": FIFO depth < 1");
      if (p.firings_per_image != q.firings_per_image) {
        throw std::invalid_argument("channel " + c.name + ": FIFO endpoints fire at different rates");
      }
    } else if (c.depth < 0) {
      throw std::invalid_argument("channel " + c.name + ": negative staging depth");
    }
  }
}

const char* to_string(SimStatus s) {
  switch (s) {
    case SimStatus::kCompleted: return "completed";
    case SimStatus::kDeadlock: return "deadlock";
    case SimStatus::kHorizonExceeded: return "horizon_exceeded";
  }
  return "?";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::kRead: return "read";
    case Action::kCompute: return "compute";
    case Action::kWrite: return "write";
    case Action::kStall: return "stall";
  }
  return "?";
}

const char* to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::kFifo: return "fifo";
    case ChannelKind::kPipo: return "pipo";
    case ChannelKind::kDeepBuffer: return "deep_buffer";
  }
  return "?";
}

namespace {

ChannelKind kind_from_string(const std::string& s) {
  if (s == "fifo") return ChannelKind::kFifo;
  if (s == "pipo") return ChannelKind::kPipo;
  if (s == "deep_buffer") return ChannelKind::kDeepBuffer;
  throw std::invalid_argument("unknown channel kind: " + s);
}

struct ChannelState {
  int64_t started = 0;   // tiles the producer has begun
  int64_t done = 0;      // tiles written
  int64_t popped = 0;    // FIFO tiles taken by the consumer
  int64_t released = 0;  // gated: images the consumer has finished with
};

struct StageState {
  int64_t fired = 0;  // firings started
  int64_t busy_until = -1;
  bool stalled = false;
};

class Simulator {
 public:
  Simulator(const Graph& g, const SimOptions& o) : g_(g), o_(o), ch_(g.channels.size()), st_(g.stages.size()) {
    trace_.high_water.assign(g.channels.size(), 0);
    trace_.stage_image_done.assign(g.stages.size(), std::vector<int64_t>(static_cast<size_t>(o.images), -1));
    trace_.images.assign(static_cast<size_t>(o.images), ImageTiming{});
  }

  SimTrace run() {
    int64_t t = 0;
    for (;;) {
      finish_at(t);
      start_at(t);
      if (all_done()) {
        trace_.status = SimStatus::kCompleted;
        trace_.end_cycle = t;
        break;
      }
      int64_t next = std::numeric_limits<int64_t>::max();
      for (const StageState& s : st_) {
        if (s.busy_until > t) next = std::min(next, s.busy_until);
      }
      if (next == std::numeric_limits<int64_t>::max()) {
        trace_.status = SimStatus::kDeadlock;
        trace_.end_cycle = t;
        for (size_t i = 0; i < st_.size(); ++i) {
          if (st_[i].fired < total(static_cast<int>(i))) trace_.blocked_stages.push_back(static_cast<int>(i));
        }
        break;
      }
      if (next > o_.horizon) {
        trace_.status = SimStatus::kHorizonExceeded;
        trace_.end_cycle = o_.horizon;
        break;
      }
      t = next;
    }
    return std::move(trace_);
  }

 private:
  int64_t total(int s) const { return g_.stages[static_cast<size_t>(s)].firings_per_image * o_.images; }
  int64_t tiles_per_image(const ChannelSpec& c) const {
    return g_.stages[static_cast<size_t>(c.from)].firings_per_image;
  }

  bool all_done() const {
    for (size_t i = 0; i < st_.size(); ++i) {
      if (st_[i].fired < total(static_cast<int>(i)) || st_[i].busy_until > last_t_) return false;
    }
    return true;
  }

  int64_t held(size_t c) const {
    const ChannelSpec& spec = g_.channels[c];
    const ChannelState& s = ch_[c];
    if (spec.kind == ChannelKind::kFifo) return s.started - s.popped;
    return s.started - s.released * tiles_per_image(spec);
  }

  bool can_write(size_t c) const {
    const ChannelSpec& spec = g_.channels[c];
    const ChannelState& s = ch_[c];
    const int64_t tpi = tiles_per_image(spec);
    switch (spec.kind) {
      case ChannelKind::kFifo: return s.started - s.popped < spec.depth;
      case ChannelKind::kPipo: return s.started / tpi - s.released < 2;
      case ChannelKind::kDeepBuffer: return s.started - s.released * tpi < tpi + spec.depth;
    }
    return false;
  }

  bool can_read(size_t c, int64_t firing) const {
    const ChannelSpec& spec = g_.channels[c];
    const ChannelState& s = ch_[c];
    if (spec.kind == ChannelKind::kFifo) return s.done > s.popped;
    const int64_t image = firing / g_.stages[static_cast<size_t>(spec.to)].firings_per_image;
    return s.done >= (image + 1) * tiles_per_image(spec);
  }

  void log(int64_t cycle, int stage, int64_t firing, Action a) {
    if (!o_.record_events) return;
    const int64_t f = g_.stages[static_cast<size_t>(stage)].firings_per_image;
    trace_.events.push_back(SimEvent{cycle, stage, firing / f, firing % f, a});
  }

  void finish_at(int64_t t) {
    last_t_ = t;
    for (size_t i = 0; i < st_.size(); ++i) {
      StageState& s = st_[i];
      if (s.busy_until != t) continue;
      const StageSpec& spec = g_.stages[i];
      const int64_t firing = s.fired - 1;
      const int64_t image = firing / spec.firings_per_image;
      const bool last_of_image = firing % spec.firings_per_image == spec.firings_per_image - 1;
      for (int c : spec.outputs) ++ch_[static_cast<size_t>(c)].done;
      for (int c : spec.inputs) {
        if (g_.channels[static_cast<size_t>(c)].kind != ChannelKind::kFifo && last_of_image) {
          ++ch_[static_cast<size_t>(c)].released;
        }
      }
      if (last_of_image) {
        trace_.stage_image_done[i][static_cast<size_t>(image)] = t;
        if (spec.outputs.empty()) {
          ImageTiming& it = trace_.images[static_cast<size_t>(image)];
          it.exit = std::max(it.exit, t);
        }
      }
      log(t, static_cast<int>(i), firing, Action::kWrite);
    }
  }

  bool try_start(size_t i, int64_t t) {
    StageState& s = st_[i];
    const StageSpec& spec = g_.stages[i];
    if (s.busy_until > t || s.fired >= total(static_cast<int>(i))) return false;
    for (int c : spec.inputs) {
      if (!can_read(static_cast<size_t>(c), s.fired)) return false;
    }
    for (int c : spec.outputs) {
      if (!can_write(static_cast<size_t>(c))) return false;
    }
    for (int c : spec.inputs) {
      if (g_.channels[static_cast<size_t>(c)].kind == ChannelKind::kFifo) ++ch_[static_cast<size_t>(c)].popped;
    }
    for (int c : spec.outputs) {
      const auto ci = static_cast<size_t>(c);
      ++ch_[ci].started;
      trace_.high_water[ci] = std::max(trace_.high_water[ci], held(ci));
    }
    const int64_t image = s.fired / spec.firings_per_image;
    if (spec.inputs.empty() && s.fired % spec.firings_per_image == 0) {
      ImageTiming& it = trace_.images[static_cast<size_t>(image)];
      it.entry = it.entry < 0 ? t : std::min(it.entry, t);
    }
    if (!spec.inputs.empty()) log(t, static_cast<int>(i), s.fired, Action::kRead);
    log(t, static_cast<int>(i), s.fired, Action::kCompute);
    s.busy_until = t + spec.ii_per_output;
    s.stalled = false;
    ++s.fired;
    return true;
  }

  // Starting a firing only frees FIFO space or reserves space no other stage uses, so
  // repeating until nothing changes gives a result independent of stage order.
  void start_at(int64_t t) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (size_t i = 0; i < st_.size(); ++i) progress = try_start(i, t) || progress;
    }
    for (size_t i = 0; i < st_.size(); ++i) {
      StageState& s = st_[i];
      if (s.busy_until <= t && s.fired < total(static_cast<int>(i)) && !s.stalled) {
        s.stalled = true;
        log(t, static_cast<int>(i), s.fired, Action::kStall);
      }
    }
  }

  const Graph& g_;
  SimOptions o_;
  std::vector<ChannelState> ch_;
  std::vector<StageState> st_;
  SimTrace trace_;
  int64_t last_t_ = 0;
};

}  // namespace

std::optional<int64_t> SimTrace::stable_ii() const {
  if (status != SimStatus::kCompleted || images.size() < 3) return std::nullopt;
  const int64_t ii = images[2].exit - images[1].exit;
  for (size_t k = 3; k < images.size(); ++k) {
    if (images[k].exit - images[k - 1].exit != ii) return std::nullopt;
  }
  return ii;
}

std::optional<int64_t> SimTrace::stage_interval(int stage) const {
  const auto& done = stage_image_done.at(static_cast<size_t>(stage));
  if (done.size() < 2 || done[done.size() - 1] < 0 || done[done.size() - 2] < 0) return std::nullopt;
  return done[done.size() - 1] - done[done.size() - 2];
}

bool SimTrace::overlapped() const {
  for (size_t k = 0; k + 1 < images.size(); ++k) {
    if (images[k + 1].entry >= 0 && images[k].exit >= 0 && images[k + 1].entry < images[k].exit) return true;
  }
  return false;
}

SimTrace simulate(const Graph& g, const SimOptions& opts) {
  g.validate();
  if (opts.images < 1) throw std::invalid_argument("simulate: need at least one image");
  if (opts.horizon < 1) throw std::invalid_argument("simulate: horizon must be positive");
  return Simulator(g, opts).run();
}

namespace {

template <typename Pred>
int64_t search_depth(const Graph& g, int channel, int64_t lo, int64_t hi, const SimOptions& opts,
                     int jobs, const Pred& ok, const std::string& failure) {
  if (channel < 0 || channel >= static_cast<int>(g.channels.size())) {
    throw std::invalid_argument("depth search: no such channel");
  }
  if (lo < 1 || hi < lo) throw std::invalid_argument("depth search: need 1 <= lo <= hi");
  SimOptions o = opts;
  o.record_events = false;
  auto passes = [&](int64_t depth) {
    Graph work = g;
    work.channels[static_cast<size_t>(channel)].depth = depth;
    return ok(simulate(work, o));
  };
  if (!passes(hi)) {
    throw std::runtime_error("channel " + g.channels[static_cast<size_t>(channel)].name + " " +
                             failure + " at depth " + std::to_string(hi));
  }
  // Deeper channels never deadlock or slow the pipeline, so the predicate is monotone.
  // Each round probes up to `jobs` interior points and keeps the bracketing interval.
  const int k = std::max(jobs, 1);
  while (lo < hi) {
    std::vector<int64_t> probes;
    for (int i = 1; i <= k; ++i) {
      const int64_t d = lo + (hi - lo) * i / (k + 1);
      if (probes.empty() || d > probes.back()) probes.push_back(d);
    }
    std::vector<char> results(probes.size());
    if (probes.size() == 1) {
      results[0] = passes(probes[0]);
    } else {
      std::vector<std::future<bool>> pending;
      for (int64_t d : probes) pending.push_back(std::async(std::launch::async, passes, d));
      for (size_t i = 0; i < pending.size(); ++i) results[i] = pending[i].get();
    }
    int64_t new_lo = lo;
    int64_t new_hi = hi;
    for (size_t i = 0; i < probes.size(); ++i) {
      if (results[i]) {
        new_hi = probes[i];
        break;
      }
      new_lo = probes[i] + 1;
    }
    lo = new_lo;
    hi = new_hi;
  }
  return lo;
}

}  // namespace

int64_t min_fifo_depth(const Graph& g, int channel, int64_t lo, int64_t hi, const SimOptions& opts,
                       int jobs) {
  return search_depth(
      g, channel, lo, hi, opts, jobs, [](const SimTrace& t) { return t.status == SimStatus::kCompleted; },
      "still deadlocks");
}

int64_t min_fifo_depth_for_ii(const Graph& g, int channel, int64_t lo, int64_t hi,
                              int64_t target_ii, const SimOptions& opts, int jobs) {
  return search_depth(
      g, channel, lo, hi, opts, jobs,
      [target_ii](const SimTrace& t) {
        const auto ii = t.stable_ii();
        return ii && *ii <= target_ii;
      },
      "does not reach II " + std::to_string(target_ii));
}

void export_timeline_csv(const SimTrace& t, const Graph& g, std::ostream& out) {
  out << "cycle,stage,image,tile,action\n";
  for (const SimEvent& e : t.events) {
    out << e.cycle << ',' << g.stages[static_cast<size_t>(e.stage)].name << ',' << e.image << ','
        << e.tile << ',' << to_string(e.action) << '\n';
  }
  if (!out) throw std::runtime_error("timeline: write failed");
}

json timeline_json(const SimTrace& t, const Graph& g) {
  json rows = json::array();
  for (const SimEvent& e : t.events) {
    rows.push_back({{"cycle", e.cycle},
                    {"stage", g.stages[static_cast<size_t>(e.stage)].name},
                    {"image", e.image},
                    {"tile", e.tile},
                    {"action", to_string(e.action)}});
  }
  return rows;
}

json summary_json(const SimTrace& t, const Graph& g) {
  json j;
  j["status"] = to_string(t.status);
  j["end_cycle"] = t.end_cycle;
  const auto ii = t.stable_ii();
  j["stable_ii"] = ii ? json(*ii) : json(nullptr);
  j["overlapped"] = t.overlapped();
  json images = json::array();
  for (size_t k = 0; k < t.images.size(); ++k) {
    const ImageTiming& it = t.images[k];
    json row{{"image", k}, {"entry", it.entry}, {"exit", it.exit}};
    row["fill_latency"] = (it.entry >= 0 && it.exit >= 0) ? json(it.latency()) : json(nullptr);
    images.push_back(row);
  }
  j["images"] = images;
  json blocked = json::array();
  for (int s : t.blocked_stages) blocked.push_back(g.stages[static_cast<size_t>(s)].name);
  j["deadlock"] = {{"deadlocked", t.status == SimStatus::kDeadlock},
                   {"cycle", t.status == SimStatus::kDeadlock ? json(t.end_cycle) : json(nullptr)},
                   {"blocked_stages", blocked}};
  json hw = json::array();
  for (size_t c = 0; c < g.channels.size(); ++c) {
    hw.push_back({{"channel", g.channels[c].name},
                  {"kind", to_string(g.channels[c].kind)},
                  {"depth", g.channels[c].depth},
                  {"high_water", t.high_water[c]}});
  }
  j["channels"] = hw;
  return j;
}

json graph_to_json(const Graph& g) {
  json stages = json::array();
  for (const StageSpec& s : g.stages) {
    stages.push_back({{"name", s.name}, {"ii", s.ii_per_output}, {"firings_per_image", s.firings_per_image}});
  }
  json channels = json::array();
  for (const ChannelSpec& c : g.channels) {
    channels.push_back({{"name", c.name},
                        {"kind", to_string(c.kind)},
                        {"from", g.stages[static_cast<size_t>(c.from)].name},
                        {"to", g.stages[static_cast<size_t>(c.to)].name},
                        {"depth", c.depth},
                        {"tile_size", c.tile_size}});
  }
  return {{"stages", stages}, {"channels", channels}};
}

Graph graph_from_json(const json& j) {
  Graph g;
  try {
    for (const json& s : j.at("stages")) {
      g.add_stage(s.at("name").get<std::string>(), s.at("ii").get<int64_t>(),
                  s.value("firings_per_image", int64_t{1}));
    }
    for (const json& c : j.at("channels")) {
      g.connect(g.stage_id(c.at("from").get<std::string>()), g.stage_id(c.at("to").get<std::string>()),
                kind_from_string(c.value("kind", std::string("fifo"))), c.value("depth", int64_t{2}),
                c.value("name", std::string()), c.value("tile_size", int64_t{1}));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("graph description: ") + e.what());
  }
  g.validate();
  return g;
}

}  // namespace vitpipe
