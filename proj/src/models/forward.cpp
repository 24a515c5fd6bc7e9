#include "flowgnn/models/forward.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowgnn/errors.hpp"
#include "flowgnn/rng.hpp"

namespace flowgnn::models {
namespace {

using diffcore::SparseMatrix;
using diffcore::TransitionMatrix;
using sampler::NodeBlock;
using sampler::SampledBlock;

// Dense n x n adjacency past this is refused outright, independent of
// any configured budget.
constexpr std::size_t kDenseNodeCeiling = std::size_t{1} << 14;

std::vector<std::int64_t> as_indices(const std::vector<std::uint32_t>& ids) {
  std::vector<std::int64_t> idx(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    idx[i] = static_cast<std::int64_t>(ids[i]);
  }
  return idx;
}

// Positions of `items` inside a sorted unique universe; every item must
// be present.
std::vector<std::int64_t> positions_in(
    const std::vector<std::uint32_t>& universe,
    const std::vector<std::uint32_t>& items, const char* what) {
  std::vector<std::int64_t> pos(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto it = std::lower_bound(universe.begin(), universe.end(), items[i]);
    if (it == universe.end() || *it != items[i]) {
      throw UsageError(std::string(what) + ": node " +
                       std::to_string(items[i]) + " missing from block layer");
    }
    pos[i] = it - universe.begin();
  }
  return pos;
}

void require_arch(const ModelState& state, Arch arch, const char* fn) {
  if (state.arch != arch) {
    throw UsageError(std::string(fn) + " called with a " +
                     arch_name(state.arch) + " state");
  }
}

// Neighbor segments of one block layer with empty neighborhoods replaced
// by a self-edge, every id mapped to its row in the previous layer.
struct LayerSegments {
  std::vector<std::size_t> offsets;       // layer.nodes.size() + 1
  std::vector<std::int64_t> nbr_pos;      // rows into the previous layer
  std::vector<std::int64_t> center_pos;   // parallel to nbr_pos
};

LayerSegments attention_segments(const NodeBlock::Layer& layer,
                                 const std::vector<std::uint32_t>& prev_nodes,
                                 const char* fn) {
  if (layer.nbr_offsets.size() != layer.nodes.size() + 1) {
    throw UsageError(std::string(fn) + ": block layer lacks neighbor slices");
  }
  std::vector<std::int64_t> self_pos = positions_in(prev_nodes, layer.nodes, fn);
  std::vector<std::int64_t> all_nbr_pos =
      positions_in(prev_nodes, layer.nbr, fn);
  LayerSegments seg;
  seg.offsets.assign(1, 0);
  seg.offsets.reserve(layer.nodes.size() + 1);
  for (std::size_t i = 0; i < layer.nodes.size(); ++i) {
    std::size_t lo = layer.nbr_offsets[i];
    std::size_t hi = layer.nbr_offsets[i + 1];
    if (lo == hi) {
      seg.nbr_pos.push_back(self_pos[i]);  // self-edge keeps softmax defined
      seg.center_pos.push_back(self_pos[i]);
    } else {
      for (std::size_t j = lo; j < hi; ++j) {
        seg.nbr_pos.push_back(all_nbr_pos[j]);
        seg.center_pos.push_back(self_pos[i]);
      }
    }
    seg.offsets.push_back(seg.nbr_pos.size());
  }
  return seg;
}

Tensor classifier_head(const Tensor& h, const ModelState& state) {
  return diffcore::add_row_bias(diffcore::matmul(h, state.param("cls.W")),
                                state.param("cls.b"));
}

}  // namespace

Tensor mean_aggregate(const Tensor& neighbors, std::size_t width) {
  if (width == 0) throw DimensionError("mean_aggregate: zero width");
  // An undefined tensor is the empty neighborhood (zero-extent tensors
  // do not exist in this core).
  if (!neighbors.defined()) return Tensor::zeros({1, width});
  if (neighbors.rank() != 2 || neighbors.dim(1) != width) {
    throw DimensionError("mean_aggregate: neighbor rows are " +
                         std::to_string(neighbors.dim(1)) + " wide, expected " +
                         std::to_string(width));
  }
  return diffcore::mean_rows(neighbors);
}

Tensor sage_update(const Tensor& h_prev, const Tensor& h_agg,
                   const Tensor& w) {
  if (h_prev.dim(0) != h_agg.dim(0)) {
    throw DimensionError("sage_update: row counts differ");
  }
  return diffcore::relu(
      diffcore::matmul(diffcore::concat_cols({h_prev, h_agg}), w));
}

Tensor sage_edge_embed(const Tensor& h_u, const Tensor& h_v,
                       const Tensor& e_uv, bool residual) {
  if (residual) return diffcore::concat_cols({h_u, h_v, e_uv});
  return diffcore::concat_cols({h_u, h_v});
}

Tensor egraphsage_forward(const SampledBlock& block,
                          const std::vector<std::uint32_t>& batch_edges,
                          const sampler::SampleGraph& graph,
                          const Tensor& edge_features,
                          const ModelState& state) {
  require_arch(state, Arch::kEGraphSageM, "egraphsage_forward");
  const Hyper& h = state.hyper;
  if (block.layers.size() != h.sage_layers + 1) {
    throw ConfigError("egraphsage_forward: block depth " +
                      std::to_string(block.layers.size() ? block.layers.size() - 1
                                                         : 0) +
                      " does not match sage_layers " +
                      std::to_string(h.sage_layers));
  }
  if (edge_features.rank() != 2 || edge_features.dim(1) != h.feature_dim) {
    throw DimensionError("egraphsage_forward: edge feature width mismatch");
  }

  // All-ones node states, as wide as the edge features.
  Tensor states = Tensor::ones({block.layers[0].nodes.size(), h.feature_dim});
  for (std::size_t k = 1; k <= h.sage_layers; ++k) {
    const SampledBlock::Layer& layer = block.layers[k];
    const std::vector<std::uint32_t>& prev = block.layers[k - 1].nodes;
    if (layer.nbr_offsets.size() != layer.nodes.size() + 1) {
      throw UsageError("egraphsage_forward: layer lacks neighbor slices");
    }
    std::vector<std::int64_t> nbr_pos =
        positions_in(prev, layer.nbr, "egraphsage_forward");
    Tensor h_agg =
        diffcore::segment_mean_rows(states, layer.nbr_offsets, nbr_pos);
    Tensor h_self = diffcore::gather_rows(
        states, positions_in(prev, layer.nodes, "egraphsage_forward"));
    states = sage_update(h_self, h_agg,
                         state.param("sage.l" + std::to_string(k) + ".W"));
  }

  const std::vector<std::uint32_t>& final_nodes = block.layers.back().nodes;
  std::vector<std::uint32_t> us(batch_edges.size());
  std::vector<std::uint32_t> vs(batch_edges.size());
  std::vector<std::int64_t> eidx(batch_edges.size());
  for (std::size_t i = 0; i < batch_edges.size(); ++i) {
    if (batch_edges[i] >= graph.edge_endpoints.size()) {
      throw UsageError("egraphsage_forward: edge id out of range");
    }
    const auto& [u, v] = graph.edge_endpoints[batch_edges[i]];
    us[i] = u;
    vs[i] = v;
    eidx[i] = static_cast<std::int64_t>(batch_edges[i]);
  }
  Tensor z = sage_edge_embed(
      diffcore::gather_rows(states,
                            positions_in(final_nodes, us, "egraphsage_forward")),
      diffcore::gather_rows(states,
                            positions_in(final_nodes, vs, "egraphsage_forward")),
      diffcore::gather_rows(edge_features, eidx), /*residual=*/true);
  return classifier_head(z, state);
}

Tensor attention_coeffs(const Tensor& h_v, const Tensor& neighbors,
                        const Tensor& w, const Tensor& a) {
  if (!neighbors.defined()) {
    throw UsageError("attention_coeffs: empty neighborhood");
  }
  Tensor wh_u = diffcore::matmul(neighbors, w);
  Tensor wh_v = diffcore::matmul(h_v, w);
  std::vector<std::int64_t> rep(neighbors.dim(0), 0);
  Tensor wh_v_rows = diffcore::gather_rows(wh_v, rep);
  Tensor scores = diffcore::leaky_relu(
      diffcore::matmul(diffcore::concat_cols({wh_u, wh_v_rows}), a), 0.2);
  return diffcore::segment_softmax(scores, {0, neighbors.dim(0)});
}

Tensor attention_stack(const NodeBlock& block, const Tensor& node_features,
                       const ModelState& state, const char* prefix,
                       bool residual_concat, bool train,
                       std::uint64_t dropout_key) {
  const Hyper& hyp = state.hyper;
  if (block.layers.size() != hyp.layers + 1) {
    throw ConfigError("attention_stack: block depth " +
                      std::to_string(block.layers.size() ? block.layers.size() - 1
                                                         : 0) +
                      " does not match configured layers " +
                      std::to_string(hyp.layers));
  }
  Tensor h = diffcore::gather_rows(node_features,
                                   as_indices(block.layers[0].nodes));
  for (std::size_t k = 1; k <= hyp.layers; ++k) {
    const NodeBlock::Layer& layer = block.layers[k];
    LayerSegments seg = attention_segments(layer, block.layers[k - 1].nodes,
                                           "attention_stack");
    std::vector<Tensor> heads;
    heads.reserve(hyp.heads);
    for (std::size_t m = 1; m <= hyp.heads; ++m) {
      std::string base = std::string(prefix) + ".l" + std::to_string(k) +
                         ".h" + std::to_string(m);
      Tensor wh = diffcore::matmul(h, state.param(base + ".W"));
      Tensor wh_u = diffcore::gather_rows(wh, seg.nbr_pos);
      Tensor wh_c = diffcore::gather_rows(wh, seg.center_pos);
      Tensor scores = diffcore::leaky_relu(
          diffcore::matmul(diffcore::concat_cols({wh_u, wh_c}),
                           state.param(base + ".a")),
          0.2);
      Tensor alpha = diffcore::segment_softmax(scores, seg.offsets);
      if (train && hyp.dropout > 0.0) {
        rng::Pcg gen(rng::combine(rng::combine(dropout_key, k), m));
        alpha = diffcore::dropout(alpha, hyp.dropout, gen, true);
      }
      Tensor agg = diffcore::segment_sum_rows(
          diffcore::scale_rows(wh_u, alpha), seg.offsets);
      heads.push_back(diffcore::tanh(agg));
    }
    Tensor h_agg = hyp.heads == 1 ? heads[0] : diffcore::concat_cols(heads);
    if (residual_concat) {
      Tensor e_v =
          diffcore::gather_rows(node_features, as_indices(layer.nodes));
      h = diffcore::concat_cols(
          {h_agg, diffcore::matmul(e_v, state.param("res.W"))});
    } else {
      h = h_agg;
    }
  }
  return h;
}

Tensor gat_forward(const NodeBlock& block,
                   const std::vector<std::uint32_t>& batch_nodes,
                   const Tensor& node_features, const ModelState& state,
                   bool train, std::uint64_t dropout_key) {
  require_arch(state, Arch::kGat, "gat_forward");
  Tensor h = attention_stack(block, node_features, state, "gat",
                             /*residual_concat=*/false, train, dropout_key);
  Tensor h_batch = diffcore::gather_rows(
      h, positions_in(block.layers.back().nodes, batch_nodes, "gat_forward"));
  return classifier_head(h_batch, state);
}

Tensor gated_tcn(const Tensor& x, const Tensor& filter, const Tensor& fbias,
                 const Tensor& gate, const Tensor& gbias,
                 std::size_t dilation) {
  Tensor filt =
      diffcore::tanh(diffcore::conv1d_causal(x, filter, fbias, dilation));
  Tensor gt =
      diffcore::sigmoid(diffcore::conv1d_causal(x, gate, gbias, dilation));
  return diffcore::hadamard(filt, gt);
}

Tensor adaptive_adjacency(const Tensor& e1, const Tensor& e2) {
  if (e1.rank() != 2 || e2.rank() != 2 || e1.dim(1) != e2.dim(1) ||
      e1.dim(0) != e2.dim(0)) {
    throw DimensionError("adaptive_adjacency: embeddings must be n x r");
  }
  if (e1.dim(0) > kDenseNodeCeiling) {
    throw ResourceError("adaptive_adjacency: " + std::to_string(e1.dim(0)) +
                        " nodes would make a dense matrix past the " +
                        std::to_string(kDenseNodeCeiling) + "-node ceiling");
  }
  return diffcore::softmax_rows(
      diffcore::relu(diffcore::matmul(e1, diffcore::transpose(e2))));
}

Tensor diffusion_gconv(const Tensor& x, const TransitionMatrix& p_f,
                       const TransitionMatrix& p_b, const Tensor& a_adp,
                       const ModelState& state) {
  const std::size_t order = state.hyper.diffusion_order;
  Tensor xf = x;
  Tensor xb = x;
  Tensor xa = x;
  Tensor z;
  for (std::size_t k = 0; k <= order; ++k) {
    if (k > 0) {
      // Repeated propagation: P^k X arrives as P (P^{k-1} X).
      xf = diffcore::propagate(p_f, xf);
      xb = diffcore::propagate(p_b, xb);
      xa = diffcore::matmul(a_adp, xa);
    }
    std::string base = "diff.k" + std::to_string(k);
    Tensor term = diffcore::add(
        diffcore::add(diffcore::matmul(xf, state.param(base + ".W1")),
                      diffcore::matmul(xb, state.param(base + ".W2"))),
        diffcore::matmul(xa, state.param(base + ".W3")));
    z = z.defined() ? diffcore::add(z, term) : term;
  }
  return z;
}

LineGraphContext make_line_context(const flowgraph::LineGraph& g) {
  const std::size_t n = g.node_count();
  LineGraphContext ctx;
  ctx.node_count = n;
  ctx.node_features = Tensor::from_data({n, g.feature_dim}, g.features);

  SparseMatrix adj;
  adj.rows = n;
  adj.cols_count = n;
  adj.offsets = g.offsets;
  adj.cols = g.neighbors;
  adj.vals.assign(g.neighbors.size(), 1.0);
  ctx.forward_p = TransitionMatrix::from(SparseMatrix::row_normalized(adj));
  ctx.backward_p =
      TransitionMatrix::from(SparseMatrix::row_normalized(adj.transposed()));

  // Same-source flows form each node's time series.
  std::unordered_map<std::size_t, std::size_t> group_of_endpoint;
  std::vector<std::vector<std::uint32_t>> members;
  for (std::size_t v = 0; v < n; ++v) {
    auto [it, fresh] =
        group_of_endpoint.try_emplace(g.src_endpoint[v], members.size());
    if (fresh) members.emplace_back();
    members[it->second].push_back(static_cast<std::uint32_t>(v));
  }
  ctx.group_offsets.assign(1, 0);
  ctx.group_order.reserve(n);
  ctx.order_position.assign(n, 0);
  for (std::vector<std::uint32_t>& group : members) {
    std::sort(group.begin(), group.end(),
              [&](std::uint32_t a, std::uint32_t b) {
                if (g.timestamps[a] != g.timestamps[b]) {
                  return g.timestamps[a] < g.timestamps[b];
                }
                return a < b;
              });
    for (std::uint32_t v : group) {
      ctx.order_position[v] = ctx.group_order.size();
      ctx.group_order.push_back(v);
    }
    ctx.group_offsets.push_back(ctx.group_order.size());
  }
  return ctx;
}

Tensor build_sequences(const LineGraphContext& ctx,
                       const std::vector<std::uint32_t>& nodes,
                       std::size_t window) {
  if (window == 0) throw ConfigError("build_sequences: window must be >= 1");
  // Each group is a contiguous run of group_order; a node's sequence is
  // the window ending at its own position, clipped at the group start.
  std::vector<std::size_t> group_start(ctx.node_count);
  for (std::size_t gi = 0; gi + 1 < ctx.group_offsets.size(); ++gi) {
    for (std::size_t p = ctx.group_offsets[gi]; p < ctx.group_offsets[gi + 1];
         ++p) {
      group_start[ctx.group_order[p]] = ctx.group_offsets[gi];
    }
  }
  std::vector<std::int64_t> idx(nodes.size() * window, -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::uint32_t v = nodes[i];
    if (v >= ctx.node_count) {
      throw UsageError("build_sequences: node id out of range");
    }
    std::size_t pos = ctx.order_position[v];
    std::size_t start = group_start[v];
    for (std::size_t s = 0; s < window; ++s) {
      // Slot window-1 holds the node itself; earlier slots reach back.
      std::size_t back = window - 1 - s;
      if (pos >= start + back) {
        idx[i * window + s] =
            static_cast<std::int64_t>(ctx.group_order[pos - back]);
      }
    }
  }
  Tensor flat = diffcore::gather_rows(ctx.node_features, idx);
  return diffcore::reshape(
      flat, {nodes.size(), window, ctx.node_features.dim(1)});
}

BranchOutputs gtcn_branches(const LineGraphContext& ctx,
                            const std::vector<std::uint32_t>& batch_nodes,
                            const NodeBlock& block, const ModelState& state,
                            bool train, std::uint64_t dropout_key) {
  require_arch(state, Arch::kGtcnG, "gtcn_forward");
  const Hyper& hyp = state.hyper;
  if (ctx.node_count != hyp.num_nodes) {
    throw DimensionError("gtcn_forward: graph has " +
                         std::to_string(ctx.node_count) +
                         " nodes but the model was sized for " +
                         std::to_string(hyp.num_nodes));
  }
  if (ctx.node_count > hyp.adaptive_budget) {
    throw ResourceError("gtcn_forward: " + std::to_string(ctx.node_count) +
                        " nodes exceed the dense adaptive-adjacency budget " +
                        std::to_string(hyp.adaptive_budget));
  }
  std::vector<std::int64_t> batch_idx = as_indices(batch_nodes);

  BranchOutputs out;
  Tensor seq = build_sequences(ctx, batch_nodes, hyp.window);
  Tensor t1 = gated_tcn(seq, state.param("tcn.l1.filter"),
                        state.param("tcn.l1.fbias"), state.param("tcn.l1.gate"),
                        state.param("tcn.l1.gbias"), 1);
  Tensor t2 = gated_tcn(t1, state.param("tcn.l2.filter"),
                        state.param("tcn.l2.fbias"), state.param("tcn.l2.gate"),
                        state.param("tcn.l2.gbias"), 2);
  out.temporal = diffcore::last_timestep(t2);

  Tensor a_adp =
      adaptive_adjacency(state.param("adp.E1"), state.param("adp.E2"));
  Tensor z = diffusion_gconv(ctx.node_features, ctx.forward_p, ctx.backward_p,
                             a_adp, state);
  out.spatial = diffcore::gather_rows(z, batch_idx);

  Tensor att = attention_stack(block, ctx.node_features, state, "att",
                               /*residual_concat=*/true, train, dropout_key);
  out.attention = diffcore::gather_rows(
      att,
      positions_in(block.layers.back().nodes, batch_nodes, "gtcn_forward"));

  out.residual =
      diffcore::matmul(diffcore::gather_rows(ctx.node_features, batch_idx),
                       state.param("res.W"));
  return out;
}

Tensor fuse_branches(const BranchOutputs& b, const ModelState& state) {
  for (const Tensor* t : {&b.temporal, &b.spatial, &b.attention, &b.residual}) {
    if (!t->defined()) throw UsageError("fuse_branches: undefined branch");
  }
  if (b.temporal.dim(0) != b.spatial.dim(0) ||
      b.temporal.dim(0) != b.attention.dim(0) ||
      b.temporal.dim(0) != b.residual.dim(0)) {
    throw DimensionError("fuse_branches: branch row counts differ");
  }
  Tensor cat =
      diffcore::concat_cols({b.temporal, b.spatial, b.attention, b.residual});
  Tensor fused = diffcore::relu(diffcore::add_row_bias(
      diffcore::matmul(cat, state.param("fuse.W1")), state.param("fuse.b1")));
  return classifier_head(fused, state);
}

Tensor gtcn_forward(const LineGraphContext& ctx,
                    const std::vector<std::uint32_t>& batch_nodes,
                    const NodeBlock& block, const ModelState& state,
                    bool train, std::uint64_t dropout_key) {
  return fuse_branches(
      gtcn_branches(ctx, batch_nodes, block, state, train, dropout_key),
      state);
}

}  // namespace flowgnn::models
