#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace flowgnn::flowgraph {

struct FlowKey {
  std::string src;  // source endpoint, e.g. "ip:port"
  std::string dst;
};

struct BipartiteNode {
  std::string key;
  bool is_virtual = false;
};

struct BipartiteEdge {
  std::size_t s = 0;  // current endpoints (padding may re-home these)
  std::size_t d = 0;
  std::size_t orig_s = 0;  // endpoints the flow actually used
  std::size_t orig_d = 0;
  std::size_t flow = 0;  // row in the flow table
};

struct BipartiteGraph {
  std::vector<BipartiteNode> src_nodes;
  std::vector<BipartiteNode> dst_nodes;
  std::vector<BipartiteEdge> edges;

  std::vector<std::uint64_t> src_degrees() const;
  std::vector<std::uint64_t> dst_degrees() const;
  void validate() const;  // edge index bounds; throws UsageError
};

// One node per unique endpoint key on each side, one edge per flow in
// input order. Flows must be non-empty.
BipartiteGraph build_bipartite(const std::vector<FlowKey>& flows);

// Equalizes side sizes by appending virtual nodes to the smaller side,
// then re-homes every smaller-side edge endpoint to a uniform draw over
// {its original node} + {all virtual nodes}. |E| and flow indices are
// unchanged; orig_s/orig_d keep the flow's real endpoints.
BipartiteGraph pad_virtual(BipartiteGraph g, std::uint64_t seed);

// Per-flow attributes carried onto line-graph nodes. May be empty when
// only topology is needed.
struct FlowPayload {
  std::vector<double> features;  // row-major, rows() x feature_dim
  std::size_t feature_dim = 0;
  std::vector<int> labels;
  std::vector<int> binary_labels;
  std::vector<double> timestamps;

  std::size_t rows() const {
    return feature_dim == 0 ? 0 : features.size() / feature_dim;
  }
};

// Flows become nodes; nodes are adjacent iff their flows share at least
// one (post-padding) endpoint. Adjacency is symmetric, self-loop-free,
// deduplicated, and sorted within each row.
struct LineGraph {
  std::size_t feature_dim = 0;
  std::vector<std::size_t> offsets;      // CSR, node_count()+1 entries
  std::vector<std::uint32_t> neighbors;  // sorted within each row
  std::vector<double> features;          // node_count() x feature_dim
  std::vector<int> labels;
  std::vector<int> binary_labels;
  std::vector<double> timestamps;
  std::vector<std::size_t> flow_index;
  // Real (pre-padding) endpoints, for grouping flows into per-source
  // time series.
  std::vector<std::size_t> src_endpoint;
  std::vector<std::size_t> dst_endpoint;

  std::size_t node_count() const {
    return offsets.empty() ? 0 : offsets.size() - 1;
  }
  std::size_t edge_count() const { return neighbors.size() / 2; }
};

inline constexpr std::uint64_t kLineGraphEdgeBudget = 1ull << 26;

// Closed-form line-graph edge count: sum over endpoints of d(d-1)/2.
// Exact when no two flows share both endpoints; with parallel flows it
// over-counts their pair once per shared endpoint, so it upper-bounds the
// deduplicated adjacency and stays the right budgeting value.
std::uint64_t line_graph_edge_count(const BipartiteGraph& g);
std::uint64_t line_graph_edge_count_from_degrees(
    const std::vector<std::uint64_t>& degrees);

// Refuses (ResourceError, naming the worst endpoints) when the predicted
// edge count exceeds max_edges.
LineGraph to_line_graph(const BipartiteGraph& g,
                        const FlowPayload& payload = {},
                        std::uint64_t max_edges = kLineGraphEdgeBudget);

// Debug export: "<nodes> <edges>" header then one "u v" line per edge,
// u < v, ascending.
void write_edge_list(const LineGraph& g, std::ostream& out);

}  // namespace flowgnn::flowgraph
