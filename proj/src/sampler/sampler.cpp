#include "flowgnn/sampler/sampler.hpp"

#include <algorithm>
#include <limits>

#include "flowgnn/errors.hpp"

namespace flowgnn::sampler {

namespace {

std::vector<std::uint32_t> endpoints_of(
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  std::vector<std::uint32_t> nodes;
  nodes.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    nodes.push_back(u);
    nodes.push_back(v);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

void sort_unique(std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

std::uint64_t hop_key(const SampleConfig& cfg, std::uint64_t epoch,
                      std::uint64_t batch_index, std::uint64_t hop,
                      std::uint64_t node, const char* tag) {
  std::uint64_t k = rng::derive(cfg.seed, tag);
  k = rng::combine(k, epoch);
  k = rng::combine(k, batch_index);
  k = rng::combine(k, hop);
  return rng::combine(k, node);
}

}  // namespace

SampleGraph SampleGraph::from_bipartite(const flowgraph::BipartiteGraph& g) {
  g.validate();
  SampleGraph sg;
  const std::size_t ns = g.src_nodes.size();
  sg.nodes = ns + g.dst_nodes.size();
  if (sg.nodes > std::numeric_limits<std::uint32_t>::max())
    throw ResourceError("too many endpoints for 32-bit node ids");

  std::vector<std::vector<std::uint32_t>> adj(sg.nodes);
  sg.edge_endpoints.reserve(g.edges.size());
  for (const flowgraph::BipartiteEdge& e : g.edges) {
    const auto u = static_cast<std::uint32_t>(e.s);
    const auto v = static_cast<std::uint32_t>(ns + e.d);
    adj[u].push_back(v);
    adj[v].push_back(u);
    sg.edge_endpoints.push_back({u, v});
  }
  sg.offsets.assign(1, 0);
  for (std::vector<std::uint32_t>& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    sg.neighbors.insert(sg.neighbors.end(), row.begin(), row.end());
    sg.offsets.push_back(sg.neighbors.size());
  }
  return sg;
}

SampleGraph SampleGraph::from_line_graph(const flowgraph::LineGraph& g) {
  SampleGraph sg;
  sg.nodes = g.node_count();
  sg.offsets = g.offsets;
  sg.neighbors = g.neighbors;
  for (std::size_t v = 0; v < sg.nodes; ++v)
    for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e)
      if (g.neighbors[e] > v)
        sg.edge_endpoints.push_back(
            {static_cast<std::uint32_t>(v), g.neighbors[e]});
  return sg;
}

void SampleConfig::validate() const {
  if (sizes.size() != hops)
    throw ConfigError("sample sizes list must have one entry per hop (" +
                      std::to_string(hops) + " hops, " +
                      std::to_string(sizes.size()) + " sizes)");
  for (std::size_t s : sizes)
    if (s == 0) throw ConfigError("per-hop sample size must be >= 1");
}

std::vector<std::uint32_t> sample_neighbors(const SampleGraph& g,
                                            std::uint32_t node,
                                            std::size_t size, rng::Pcg& gen) {
  if (size == 0) throw UsageError("sample size must be >= 1");
  const std::size_t deg = g.degree(node);
  const std::uint32_t* row = g.neighbors.data() + g.offsets[node];
  if (deg <= size) return {row, row + deg};

  // Floyd's distinct-subset draw: j runs over the top `size` slots; each
  // draw lands uniformly and collisions promote the slot itself.
  std::vector<std::uint32_t> picked;
  picked.reserve(size);
  for (std::size_t j = deg - size; j < deg; ++j) {
    const auto t =
        static_cast<std::uint32_t>(gen.next_below(static_cast<std::uint64_t>(j) + 1));
    const std::uint32_t candidate = row[t];
    if (std::find(picked.begin(), picked.end(), candidate) != picked.end())
      picked.push_back(row[j]);
    else
      picked.push_back(candidate);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

SampledBlock khop_sample(const SampleGraph& g,
                         const std::vector<std::uint32_t>& batch_edges,
                         const SampleConfig& cfg, std::uint64_t epoch,
                         std::uint64_t batch_index) {
  cfg.validate();
  if (batch_edges.empty()) throw UsageError("empty minibatch");

  SampledBlock block;
  block.layers.resize(cfg.hops + 1);
  SampledBlock::Layer& top = block.layers[cfg.hops];
  top.edges.reserve(batch_edges.size());
  for (std::uint32_t e : batch_edges) {
    if (e >= g.edge_endpoints.size())
      throw UsageError("batch references edge " + std::to_string(e) +
                       " outside the graph");
    auto [u, v] = g.edge_endpoints[e];
    top.edges.push_back(std::minmax(u, v));
  }
  sort_unique(top.edges);
  top.nodes = endpoints_of(top.edges);

  for (std::size_t k = cfg.hops; k >= 1; --k) {
    SampledBlock::Layer& cur = block.layers[k];
    auto next_edges = cur.edges;  // frontier snapshot: V(B^k) is fixed here
    cur.nbr_offsets.assign(1, 0);
    for (std::uint32_t v : cur.nodes) {
      rng::Pcg gen(hop_key(cfg, epoch, batch_index, k, v, "khop_edges"));
      std::vector<std::uint32_t> nbrs =
          sample_neighbors(g, v, cfg.sizes[k - 1], gen);
      for (std::uint32_t u : nbrs) next_edges.push_back(std::minmax(u, v));
      cur.nbr.insert(cur.nbr.end(), nbrs.begin(), nbrs.end());
      cur.nbr_offsets.push_back(cur.nbr.size());
    }
    sort_unique(next_edges);
    block.layers[k - 1].edges = std::move(next_edges);
    block.layers[k - 1].nodes = endpoints_of(block.layers[k - 1].edges);
  }
  return block;
}

NodeBlock khop_node_sample(const SampleGraph& g,
                           const std::vector<std::uint32_t>& batch_nodes,
                           const SampleConfig& cfg, std::uint64_t epoch,
                           std::uint64_t batch_index) {
  cfg.validate();
  if (batch_nodes.empty()) throw UsageError("empty minibatch");

  NodeBlock block;
  block.layers.resize(cfg.hops + 1);
  NodeBlock::Layer& top = block.layers[cfg.hops];
  top.nodes = batch_nodes;
  std::sort(top.nodes.begin(), top.nodes.end());
  top.nodes.erase(std::unique(top.nodes.begin(), top.nodes.end()),
                  top.nodes.end());
  for (std::uint32_t v : top.nodes)
    if (v >= g.nodes)
      throw UsageError("batch references node " + std::to_string(v) +
                       " outside the graph");

  for (std::size_t k = cfg.hops; k >= 1; --k) {
    NodeBlock::Layer& cur = block.layers[k];
    std::vector<std::uint32_t> next_nodes = cur.nodes;
    cur.nbr_offsets.assign(1, 0);
    for (std::uint32_t v : cur.nodes) {
      rng::Pcg gen(hop_key(cfg, epoch, batch_index, k, v, "khop_nodes"));
      std::vector<std::uint32_t> nbrs =
          sample_neighbors(g, v, cfg.sizes[k - 1], gen);
      next_nodes.insert(next_nodes.end(), nbrs.begin(), nbrs.end());
      cur.nbr.insert(cur.nbr.end(), nbrs.begin(), nbrs.end());
      cur.nbr_offsets.push_back(cur.nbr.size());
    }
    std::sort(next_nodes.begin(), next_nodes.end());
    next_nodes.erase(std::unique(next_nodes.begin(), next_nodes.end()),
                     next_nodes.end());
    block.layers[k - 1].nodes = std::move(next_nodes);
  }
  return block;
}

BatchCost estimate_batch_cost(std::size_t batch_edges,
                              const SampleConfig& cfg) {
  cfg.validate();
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  unsigned __int128 nodes = static_cast<unsigned __int128>(batch_edges) * 2;
  unsigned __int128 edges = batch_edges;
  for (std::size_t k = cfg.hops; k >= 1; --k) {
    edges += nodes * cfg.sizes[k - 1];
    nodes *= 1 + cfg.sizes[k - 1];
    if (nodes > kMax) nodes = kMax;
    if (edges > kMax) edges = kMax;
  }
  return {static_cast<std::uint64_t>(nodes), static_cast<std::uint64_t>(edges)};
}

}  // namespace flowgnn::sampler
