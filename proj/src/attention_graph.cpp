/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "vitpipe/attention_graph.hpp"

#include <stdexcept>
#include <string>

namespace vitpipe {

Graph build_attention_graph(const ModelConfig& cfg, const ParallelismConfig& p,
                            const GraphOptions& opts) {
  if (opts.blocks < 1) throw std::invalid_argument("build_attention_graph: need at least one block");
  const StageParallelism& ln = p.find("LayerNorm");
  const int64_t tiles = ln.tt();
  if (ln.t != cfg.tokens()) throw std::invalid_argument("build_attention_graph: LayerNorm T does not match the model");

  auto per_tile = [&](const StageParallelism& s) {
    const int64_t ii = stage_ii(s);
    if (s.tt() != tiles || ii % tiles != 0) {
      throw std::invalid_argument("build_attention_graph: " + s.name + " does not split into " +
                                  std::to_string(tiles) + " token tiles");
    }
    return ii / tiles;
  };

  const StageParallelism& qkv = p.find("QKV Gen");
  const StageParallelism& qk = p.find("QK MatMul");
  const StageParallelism& sm = p.find("Softmax");
  const StageParallelism& rv = p.find("RV MatMul");
  const StageParallelism& proj = p.find("Output Proj");
  const StageParallelism& res = p.find("Residual Add");
  // Transposing V touches each head-dim column of a tile once.
  const int64_t transpose_ii = rv.co / rv.cop;

  Graph g;
  const int64_t d = opts.fifo_depth, deep = opts.deep_fifo_depth;
  int prev = g.add_stage("Source", 1, tiles);
  for (int64_t b = 0; b < opts.blocks; ++b) {
    const std::string pre = "b" + std::to_string(b) + ".";
    auto stage = [&](const std::string& name, int64_t ii) { return g.add_stage(pre + name, ii, tiles); };

    const int ln1 = stage("LayerNorm", per_tile(ln));
    const int qg = stage("Q Gen", per_tile(qkv));
    const int kg = stage("K Gen", per_tile(qkv));
    const int vg = stage("V Gen", per_tile(qkv));
    const int tr = stage("Transpose", transpose_ii);
    const int qkm = stage("QK MatMul", per_tile(qk));
    const int smx = stage("Softmax", per_tile(sm));
    const int rvm = stage("RV MatMul", per_tile(rv));
    const int op = stage("Output Proj", per_tile(proj));
    const int add = stage("Residual Add", per_tile(res));

    g.connect(prev, ln1, ChannelKind::kFifo, d, pre + "in");
    g.connect(ln1, add, ChannelKind::kFifo, deep, pre + "residual");
    g.connect(ln1, qg, ChannelKind::kFifo, d, pre + "ln_q");
    g.connect(ln1, kg, ChannelKind::kFifo, d, pre + "ln_k");
    g.connect(ln1, vg, ChannelKind::kFifo, d, pre + "ln_v");
    g.connect(qg, qkm, ChannelKind::kFifo, deep, pre + "q");
    g.connect(kg, qkm, ChannelKind::kDeepBuffer, deep, pre + "k");
    g.connect(vg, tr, ChannelKind::kFifo, d, pre + "v_stream");
    g.connect(tr, rvm, ChannelKind::kDeepBuffer, deep, pre + "v");
    g.connect(qkm, smx, ChannelKind::kFifo, d, pre + "scores");
    g.connect(smx, rvm, ChannelKind::kFifo, d, pre + "probs");
    g.connect(rvm, op, ChannelKind::kFifo, d, pre + "attn");
    g.connect(op, add, ChannelKind::kFifo, d, pre + "proj");
    prev = add;

    if (opts.mlp) {
      const int ln2 = stage("MLP LayerNorm", per_tile(p.find("MLP LayerNorm")));
      const int fc1 = stage("MatMul1", per_tile(p.find("MatMul1")));
      const int act = stage("GeLU", per_tile(p.find("GeLU")));
      const int fc2 = stage("MatMul2", per_tile(p.find("MatMul2")));
      const int add2 = stage("MLP Residual Add", per_tile(res));
      g.connect(add, ln2, ChannelKind::kFifo, d, pre + "mid");
      g.connect(add, add2, ChannelKind::kFifo, deep, pre + "mlp_residual");
      g.connect(ln2, fc1, ChannelKind::kFifo, d, pre + "ln2");
      g.connect(fc1, act, ChannelKind::kFifo, d, pre + "hidden");
      g.connect(act, fc2, ChannelKind::kFifo, d, pre + "gelu");
      g.connect(fc2, add2, ChannelKind::kFifo, d, pre + "mlp_out");
      prev = add2;
    }
  }
  const int sink = g.add_stage("Sink", 1, tiles);
  g.connect(prev, sink, ChannelKind::kFifo, d, "out");
  g.validate();
  return g;
}

}  // namespace vitpipe
