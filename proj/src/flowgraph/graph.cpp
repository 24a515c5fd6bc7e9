#include "flowgnn/flowgraph/graph.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "flowgnn/errors.hpp"
#include "flowgnn/rng.hpp"

namespace flowgnn::flowgraph {

std::vector<std::uint64_t> BipartiteGraph::src_degrees() const {
  std::vector<std::uint64_t> deg(src_nodes.size(), 0);
  for (const BipartiteEdge& e : edges) ++deg[e.s];
  return deg;
}

std::vector<std::uint64_t> BipartiteGraph::dst_degrees() const {
  std::vector<std::uint64_t> deg(dst_nodes.size(), 0);
  for (const BipartiteEdge& e : edges) ++deg[e.d];
  return deg;
}

void BipartiteGraph::validate() const {
  for (const BipartiteEdge& e : edges)
    if (e.s >= src_nodes.size() || e.d >= dst_nodes.size() ||
        e.orig_s >= src_nodes.size() || e.orig_d >= dst_nodes.size())
      throw UsageError("bipartite edge references a missing node");
}

BipartiteGraph build_bipartite(const std::vector<FlowKey>& flows) {
  if (flows.empty()) throw DataError("cannot build a graph from zero flows");
  BipartiteGraph g;
  std::unordered_map<std::string, std::size_t> src_ids, dst_ids;
  g.edges.reserve(flows.size());
  for (std::size_t f = 0; f < flows.size(); ++f) {
    auto [si, s_new] = src_ids.try_emplace(flows[f].src, g.src_nodes.size());
    if (s_new) g.src_nodes.push_back({flows[f].src, false});
    auto [di, d_new] = dst_ids.try_emplace(flows[f].dst, g.dst_nodes.size());
    if (d_new) g.dst_nodes.push_back({flows[f].dst, false});
    g.edges.push_back({si->second, di->second, si->second, di->second, f});
  }
  return g;
}

BipartiteGraph pad_virtual(BipartiteGraph g, std::uint64_t seed) {
  const bool pad_src = g.src_nodes.size() < g.dst_nodes.size();
  const bool pad_dst = g.dst_nodes.size() < g.src_nodes.size();
  if (!pad_src && !pad_dst) return g;

  std::vector<BipartiteNode>& side = pad_src ? g.src_nodes : g.dst_nodes;
  const std::size_t target =
      pad_src ? g.dst_nodes.size() : g.src_nodes.size();
  const std::size_t first_virtual = side.size();
  const std::size_t v_count = target - side.size();
  for (std::size_t i = 0; i < v_count; ++i)
    side.push_back({(pad_src ? std::string("virtual:src:")
                             : std::string("virtual:dst:")) +
                        std::to_string(i),
                    true});

  // Edge order is the draw order, so a seed fixes the result exactly.
  rng::Pcg gen(rng::derive(seed, "pad_virtual"));
  for (BipartiteEdge& e : g.edges) {
    const std::uint64_t pick = gen.next_below(v_count + 1);
    if (pick == 0) continue;  // stays on its real endpoint
    const std::size_t v = first_virtual + static_cast<std::size_t>(pick - 1);
    (pad_src ? e.s : e.d) = v;
  }
  return g;
}

std::uint64_t line_graph_edge_count_from_degrees(
    const std::vector<std::uint64_t>& degrees) {
  unsigned __int128 total = 0;
  for (std::uint64_t d : degrees) {
    const unsigned __int128 dd = d;
    total += dd * (dd - (d > 0 ? 1 : 0)) / 2;
    if (total > std::numeric_limits<std::uint64_t>::max())
      throw ResourceError(
          "line-graph edge count exceeds 64 bits; refusing to materialize");
  }
  return static_cast<std::uint64_t>(total);
}

std::uint64_t line_graph_edge_count(const BipartiteGraph& g) {
  std::vector<std::uint64_t> deg = g.src_degrees();
  const std::vector<std::uint64_t> dd = g.dst_degrees();
  deg.insert(deg.end(), dd.begin(), dd.end());
  return line_graph_edge_count_from_degrees(deg);
}

namespace {

void refuse_over_budget(const BipartiteGraph& g, std::uint64_t predicted,
                        std::uint64_t max_edges) {
  struct Hot {
    std::uint64_t degree;
    const std::string* key;
  };
  std::vector<Hot> hot;
  const std::vector<std::uint64_t> sd = g.src_degrees();
  for (std::size_t i = 0; i < sd.size(); ++i)
    hot.push_back({sd[i], &g.src_nodes[i].key});
  const std::vector<std::uint64_t> dd = g.dst_degrees();
  for (std::size_t i = 0; i < dd.size(); ++i)
    hot.push_back({dd[i], &g.dst_nodes[i].key});
  std::partial_sort(hot.begin(), hot.begin() + std::min<std::size_t>(3, hot.size()),
                    hot.end(),
                    [](const Hot& a, const Hot& b) { return a.degree > b.degree; });
  std::ostringstream os;
  os << "predicted line-graph edge count " << predicted << " exceeds budget "
     << max_edges << "; hottest endpoints:";
  for (std::size_t i = 0; i < hot.size() && i < 3; ++i)
    os << ' ' << *hot[i].key << " (degree " << hot[i].degree << ')';
  throw ResourceError(os.str());
}

}  // namespace

LineGraph to_line_graph(const BipartiteGraph& g, const FlowPayload& payload,
                        std::uint64_t max_edges) {
  g.validate();
  const std::size_t n = g.edges.size();
  if (n > std::numeric_limits<std::uint32_t>::max())
    throw ResourceError("too many flows for 32-bit node indices");
  const std::uint64_t predicted = line_graph_edge_count(g);
  if (predicted > max_edges) refuse_over_budget(g, predicted, max_edges);

  std::vector<std::vector<std::uint32_t>> by_src(g.src_nodes.size());
  std::vector<std::vector<std::uint32_t>> by_dst(g.dst_nodes.size());
  for (std::size_t i = 0; i < n; ++i) {
    by_src[g.edges[i].s].push_back(static_cast<std::uint32_t>(i));
    by_dst[g.edges[i].d].push_back(static_cast<std::uint32_t>(i));
  }

  std::vector<std::vector<std::uint32_t>> adj(n);
  auto connect = [&](const std::vector<std::uint32_t>& incident) {
    for (std::size_t i = 0; i < incident.size(); ++i)
      for (std::size_t j = i + 1; j < incident.size(); ++j) {
        adj[incident[i]].push_back(incident[j]);
        adj[incident[j]].push_back(incident[i]);
      }
  };
  for (const auto& inc : by_src) connect(inc);
  for (const auto& inc : by_dst) connect(inc);

  LineGraph lg;
  lg.offsets.assign(1, 0);
  for (std::vector<std::uint32_t>& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    lg.neighbors.insert(lg.neighbors.end(), row.begin(), row.end());
    lg.offsets.push_back(lg.neighbors.size());
    row.clear();
    row.shrink_to_fit();
  }

  lg.flow_index.reserve(n);
  lg.src_endpoint.reserve(n);
  lg.dst_endpoint.reserve(n);
  for (const BipartiteEdge& e : g.edges) {
    lg.flow_index.push_back(e.flow);
    lg.src_endpoint.push_back(e.orig_s);
    lg.dst_endpoint.push_back(e.orig_d);
  }

  if (payload.rows() > 0) {
    lg.feature_dim = payload.feature_dim;
    lg.features.resize(n * payload.feature_dim);
    lg.labels.resize(n, -1);
    lg.binary_labels.resize(n, -1);
    lg.timestamps.resize(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t f = g.edges[i].flow;
      if (f >= payload.rows())
        throw DataError("flow index " + std::to_string(f) +
                        " outside the payload table");
      std::memcpy(lg.features.data() + i * payload.feature_dim,
                  payload.features.data() + f * payload.feature_dim,
                  payload.feature_dim * sizeof(double));
      if (f < payload.labels.size()) lg.labels[i] = payload.labels[f];
      if (f < payload.binary_labels.size())
        lg.binary_labels[i] = payload.binary_labels[f];
      if (f < payload.timestamps.size())
        lg.timestamps[i] = payload.timestamps[f];
    }
  }
  return lg;
}

void write_edge_list(const LineGraph& g, std::ostream& out) {
  out << g.node_count() << ' ' << g.edge_count() << '\n';
  for (std::size_t v = 0; v < g.node_count(); ++v)
    for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e)
      if (g.neighbors[e] > v) out << v << ' ' << g.neighbors[e] << '\n';
}

}  // namespace flowgnn::flowgraph
