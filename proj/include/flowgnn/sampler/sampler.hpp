#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "flowgnn/flowgraph/graph.hpp"
#include "flowgnn/rng.hpp"

namespace flowgnn::sampler {

// Immutable adjacency view the sampler walks. Bipartite graphs put
// sources at ids [0, |S|) and destinations at [|S|, |S|+|D|); line graphs
// keep their own node ids. Neighbor lists are sorted and deduplicated.
struct SampleGraph {
  std::size_t nodes = 0;
  std::vector<std::size_t> offsets;      // nodes + 1
  std::vector<std::uint32_t> neighbors;  // sorted within each row
  // Endpoints per edge id; edge ids are flow indices for bipartite input.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edge_endpoints;

  std::size_t degree(std::uint32_t v) const {
    return offsets[v + 1] - offsets[v];
  }

  static SampleGraph from_bipartite(const flowgraph::BipartiteGraph& g);
  static SampleGraph from_line_graph(const flowgraph::LineGraph& g);
};

struct SampleConfig {
  std::size_t hops = 2;
  std::vector<std::size_t> sizes = {8, 8};  // sizes[k-1] used at hop k
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on hop/size mismatch or zero size
};

// Layered frontier produced by the backward minibatch expansion. Index k
// runs 0..hops; layers[hops] is the input batch, layers[0] the widest.
// Each node of layers[k] (k >= 1) owns a slice of sampled neighbors —
// the aggregation set feeding that node's layer-k update.
struct SampledBlock {
  struct Layer {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // B^k
    std::vector<std::uint32_t> nodes;  // V(B^k): endpoints, sorted unique
    std::vector<std::size_t> nbr_offsets;  // nodes.size()+1 when sampled
    std::vector<std::uint32_t> nbr;
  };
  std::vector<Layer> layers;
};

// Node-frontier variant for architectures that aggregate per node rather
// than per edge. layers[hops] holds the batch nodes.
struct NodeBlock {
  struct Layer {
    std::vector<std::uint32_t> nodes;  // sorted unique
    std::vector<std::size_t> nbr_offsets;
    std::vector<std::uint32_t> nbr;
  };
  std::vector<Layer> layers;
};

// Uniform neighbor subset: everything when degree <= size, otherwise
// exactly `size` distinct neighbors without replacement. Sorted output.
// An isolated node yields an empty set.
std::vector<std::uint32_t> sample_neighbors(const SampleGraph& g,
                                            std::uint32_t node,
                                            std::size_t size, rng::Pcg& gen);

// Backward layer-by-layer expansion: B^K is the batch; each iteration
// unions in (u, v) pairs for sampled u around every node of the current
// frontier snapshot. Draws are keyed by (seed, epoch, batch_index, hop,
// node), so results are independent of traversal or thread order.
SampledBlock khop_sample(const SampleGraph& g,
                         const std::vector<std::uint32_t>& batch_edges,
                         const SampleConfig& cfg, std::uint64_t epoch,
                         std::uint64_t batch_index);

NodeBlock khop_node_sample(const SampleGraph& g,
                           const std::vector<std::uint32_t>& batch_nodes,
                           const SampleConfig& cfg, std::uint64_t epoch,
                           std::uint64_t batch_index);

struct BatchCost {
  std::uint64_t max_nodes = 0;
  std::uint64_t max_edges = 0;
};

// Worst-case frontier bound: n_K = 2|B|, e_K = |B|, then per hop
// n_{k-1} = n_k (1 + s_k), e_{k-1} = e_k + n_k s_k. Saturates at the
// 64-bit ceiling instead of overflowing.
BatchCost estimate_batch_cost(std::size_t batch_edges,
                              const SampleConfig& cfg);

}  // namespace flowgnn::sampler
