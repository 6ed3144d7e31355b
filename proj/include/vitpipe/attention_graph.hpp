/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_ATTENTION_GRAPH_HPP
#define VITPIPE_ATTENTION_GRAPH_HPP

#include <cstdint>

#include "vitpipe/model.hpp"
#include "vitpipe/resource.hpp"
#include "vitpipe/sim.hpp"

namespace vitpipe {

struct GraphOptions {
  int64_t blocks = 1;             ///< MHA+MLP blocks chained between source and sink
  bool mlp = true;                ///< append the MLP half of each block
  int64_t fifo_depth = 2;         ///< ordinary stage-to-stage FIFOs
  int64_t deep_fifo_depth = 512;  ///< residual and Q deep FIFOs, K/V staging
};

/// Pipeline graph of the attention (and MLP) blocks. LayerNorm fans out to four branches:
/// residual deep FIFO, Q deep FIFO, K deep buffer, and V through a transpose module into a
/// deep buffer. Every stage fires once per token tile (T / TP tiles per image) with a
/// per-tile cost of its II divided by that tile count. Channels of block i are named
/// "b<i>.residual", "b<i>.q", "b<i>.k", "b<i>.v", "b<i>.mlp_residual", ...
/// Throws std::invalid_argument when a required stage row is missing or an II does not
/// split evenly over the tiles.
Graph build_attention_graph(const ModelConfig& cfg, const ParallelismConfig& p,
                            const GraphOptions& opts = {});

}  // namespace vitpipe

#endif  // VITPIPE_ATTENTION_GRAPH_HPP
