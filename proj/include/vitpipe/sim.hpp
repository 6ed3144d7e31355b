/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_SIM_HPP
#define VITPIPE_SIM_HPP

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace vitpipe {

enum class ChannelKind {
  kFifo,        ///< tile queue of `depth` entries
  kPipo,        ///< two full-image banks; consumer starts once a bank is full
  kDeepBuffer,  ///< one full image read by every consumer firing, plus `depth` staging tiles
};

enum class DependencyMode {
  kStreaming,        ///< fires as soon as one tile per input is present
  kGatherThenStream  ///< waits for a whole image on some input
};

struct ChannelSpec {
  std::string name;
  ChannelKind kind = ChannelKind::kFifo;
  int from = -1;           ///< producing stage
  int to = -1;             ///< consuming stage
  int64_t depth = 2;       ///< FIFO entries, or DeepBuffer staging entries
  int64_t tile_size = 1;   ///< elements per transfer
};

/// One pipeline stage. Each firing reads one tile per FIFO input, reads the whole current
/// image of each PIPO/DeepBuffer input, and writes one tile per output after ii_per_output cycles.
struct StageSpec {
  std::string name;
  int64_t ii_per_output = 1;
  int64_t firings_per_image = 1;
  std::vector<int> inputs;
  std::vector<int> outputs;
  DependencyMode mode = DependencyMode::kStreaming;
};

struct Graph {
  std::vector<StageSpec> stages;
  std::vector<ChannelSpec> channels;

  int add_stage(std::string name, int64_t ii_per_output, int64_t firings_per_image = 1);
  /// Adds a channel from -> to. Gated kinds switch the consumer to kGatherThenStream.
  int connect(int from, int to, ChannelKind kind, int64_t depth, std::string name = {},
              int64_t tile_size = 1);
  int stage_id(std::string_view name) const;
  int channel_id(std::string_view name) const;
  /// Throws std::invalid_argument on dangling channels, bad IIs, or mismatched rates.
  void validate() const;
};

enum class SimStatus { kCompleted, kDeadlock, kHorizonExceeded };
enum class Action { kRead, kCompute, kWrite, kStall };

const char* to_string(SimStatus s);
const char* to_string(Action a);
const char* to_string(ChannelKind k);

struct SimEvent {
  int64_t cycle = 0;
  int stage = 0;
  int64_t image = 0;
  int64_t tile = 0;
  Action action = Action::kCompute;
};

struct ImageTiming {
  int64_t entry = -1;  ///< first source firing starts
  int64_t exit = -1;   ///< last sink firing ends
  int64_t latency() const { return exit - entry; }
};

struct SimOptions {
  int64_t images = 5;
  int64_t horizon = int64_t{1} << 40;
  bool record_events = true;
};

struct SimTrace {
  SimStatus status = SimStatus::kCompleted;
  int64_t end_cycle = 0;
  std::vector<SimEvent> events;             ///< sorted by (cycle, stage, action)
  std::vector<int> blocked_stages;          ///< stages with work left at a deadlock
  std::vector<ImageTiming> images;
  std::vector<std::vector<int64_t>> stage_image_done;  ///< [stage][image] end of last firing
  std::vector<int64_t> high_water;          ///< per channel, peak tiles held

  /// Sink completion interval, when every interval from the third image onward agrees.
  std::optional<int64_t> stable_ii() const;
  /// Completion interval of one stage between its last two images.
  std::optional<int64_t> stage_interval(int stage) const;
  /// Some image enters before the previous one has left.
  bool overlapped() const;
};

SimTrace simulate(const Graph& g, const SimOptions& opts = {});

/// Smallest depth in [lo, hi] for `channel` at which the simulation completes.
/// Throws std::runtime_error if it still deadlocks at hi. `jobs` > 1 probes that many
/// depths concurrently per round.
int64_t min_fifo_depth(const Graph& g, int channel, int64_t lo, int64_t hi,
                       const SimOptions& opts = {}, int jobs = 1);

/// Smallest depth in [lo, hi] at which the simulation completes with a stable II no larger
/// than target_ii. Throws std::runtime_error if hi does not reach it.
int64_t min_fifo_depth_for_ii(const Graph& g, int channel, int64_t lo, int64_t hi,
                              int64_t target_ii, const SimOptions& opts = {}, int jobs = 1);

/// Columns: cycle,stage,image,tile,action. Header only for an empty trace.
void export_timeline_csv(const SimTrace& t, const Graph& g, std::ostream& out);
nlohmann::json timeline_json(const SimTrace& t, const Graph& g);
/// Status, stable II, per-image entry/exit/latency, deadlock info, channel high-water marks.
nlohmann::json summary_json(const SimTrace& t, const Graph& g);

nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);

}  // namespace vitpipe

#endif  // VITPIPE_SIM_HPP
