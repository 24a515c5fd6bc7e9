#pragma once

#include <cstdint>
#include <vector>

#include "flowgnn/diffcore/ops.hpp"
#include "flowgnn/diffcore/sparse.hpp"
#include "flowgnn/diffcore/tensor.hpp"
#include "flowgnn/flowgraph/graph.hpp"
#include "flowgnn/models/model.hpp"
#include "flowgnn/sampler/sampler.hpp"

namespace flowgnn::models {

using diffcore::Tensor;

// ---- edge-aggregation baseline ----

/// Column mean of the neighbor state rows; no rows -> one zero row of
/// the requested width.
Tensor mean_aggregate(const Tensor& neighbors, std::size_t width);

/// ReLU(W . [h_prev || h_agg]) applied row-wise; h_prev and h_agg carry
/// one row per node.
Tensor sage_update(const Tensor& h_prev, const Tensor& h_agg,
                   const Tensor& w);

/// Endpoint concat, optionally extended with the raw edge features.
Tensor sage_edge_embed(const Tensor& h_u, const Tensor& h_v,
                       const Tensor& e_uv, bool residual);

/// Minibatch forward over a sampled edge block: all-ones node states,
/// `sage_layers` mean-aggregate/update rounds over the block layers, then
/// per-edge [h_u || h_v || e_uv] through the linear classifier head.
/// Logits come back in batch_edges order. edge_features is the full
/// [edges x feature_dim] matrix indexed by edge id.
Tensor egraphsage_forward(const sampler::SampledBlock& block,
                          const std::vector<std::uint32_t>& batch_edges,
                          const sampler::SampleGraph& graph,
                          const Tensor& edge_features,
                          const ModelState& state);

// ---- attention ----

/// Coefficients of one neighborhood: softmax over
/// LeakyReLU(a^T [W h_u || W h_v], slope 0.2), one row per neighbor.
/// Reference form used by the vectorized layers; empty neighborhoods are
/// a usage error (callers substitute a self-edge first).
Tensor attention_coeffs(const Tensor& h_v, const Tensor& neighbors,
                        const Tensor& w, const Tensor& a);

/// Multi-head attention over a sampled node block: `layers` rounds of
/// per-head softmax aggregation (concat heads, tanh per head), reading
/// parameters `<prefix>.l<k>.h<m>.{W,a}`. With residual_concat each
/// layer's output rows gain W'e_v columns (e_v = the node's original
/// feature row at every depth). Returns one row per final-layer node;
/// dropout on the coefficients in train mode draws from streams keyed by
/// (dropout_key, layer, head).
Tensor attention_stack(const sampler::NodeBlock& block,
                       const Tensor& node_features, const ModelState& state,
                       const char* prefix, bool residual_concat, bool train,
                       std::uint64_t dropout_key);

/// Attention-only baseline: attention_stack without the residual concat,
/// then the linear classifier head. Logits in batch_nodes order.
Tensor gat_forward(const sampler::NodeBlock& block,
                   const std::vector<std::uint32_t>& batch_nodes,
                   const Tensor& node_features, const ModelState& state,
                   bool train, std::uint64_t dropout_key);

// ---- gated temporal convolution ----

/// tanh(causal_conv(x; filter) + fbias) ⊙ sigmoid(causal_conv(x; gate)
/// + gbias). x: [N x S x D_in], kernels: [w x D_in x D_out].
Tensor gated_tcn(const Tensor& x, const Tensor& filter, const Tensor& fbias,
                 const Tensor& gate, const Tensor& gbias,
                 std::size_t dilation);

// ---- graph diffusion ----

/// Row-stochastic softmax(relu(E1 . E2^T)); dense n x n output, refused
/// beyond a hard node ceiling.
Tensor adaptive_adjacency(const Tensor& e1, const Tensor& e2);

/// Z = sum_{k=0..K} (P_f^k X W_k1 + P_b^k X W_k2 + A_adp^k X W_k3) with
/// powers applied by repeated propagation.
Tensor diffusion_gconv(const Tensor& x, const diffcore::TransitionMatrix& p_f,
                       const diffcore::TransitionMatrix& p_b,
                       const Tensor& a_adp, const ModelState& state);

// ---- line-graph context and the fused model ----

/// Per-graph constants shared by every GTCN-G batch: node features, the
/// forward/backward transition matrices, and per-source-endpoint flow
/// orderings for the temporal windows.
struct LineGraphContext {
  std::size_t node_count = 0;
  Tensor node_features;  // [n x f], grad-free
  diffcore::TransitionMatrix forward_p;
  diffcore::TransitionMatrix backward_p;
  // Nodes grouped by source endpoint, each group sorted by
  // (timestamp, node id); order_position[v] indexes into group_order.
  std::vector<std::size_t> group_offsets;
  std::vector<std::uint32_t> group_order;
  std::vector<std::size_t> order_position;
};

LineGraphContext make_line_context(const flowgraph::LineGraph& g);

/// [batch x window x f] sequences: each node's window most recent
/// same-source flows up to and including itself, left zero-padded.
Tensor build_sequences(const LineGraphContext& ctx,
                       const std::vector<std::uint32_t>& nodes,
                       std::size_t window);

/// The four branch outputs, one row per batch node.
struct BranchOutputs {
  Tensor temporal;
  Tensor spatial;
  Tensor attention;
  Tensor residual;
};

BranchOutputs gtcn_branches(const LineGraphContext& ctx,
                            const std::vector<std::uint32_t>& batch_nodes,
                            const sampler::NodeBlock& block,
                            const ModelState& state, bool train,
                            std::uint64_t dropout_key);

/// Concat of the four branches -> linear + ReLU to hidden width ->
/// linear classifier head.
Tensor fuse_branches(const BranchOutputs& b, const ModelState& state);

/// Full fused forward; logits in batch_nodes order.
Tensor gtcn_forward(const LineGraphContext& ctx,
                    const std::vector<std::uint32_t>& batch_nodes,
                    const sampler::NodeBlock& block, const ModelState& state,
                    bool train, std::uint64_t dropout_key);

}  // namespace flowgnn::models
