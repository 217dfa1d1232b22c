#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "walkability/distance.hpp"
#include "walkability/errors.hpp"
#include "walkability/geo.hpp"
#include "walkability/ingest.hpp"

namespace walkability::graph {

/// Edge weight: visitors scaled by linear proximity decay,
/// n_v * (1 - d / d_max).
inline double edge_weight(std::uint64_t n_v, double d, double d_max) {
  if (!(d_max > 0)) throw DomainError("d_max must be positive");
  if (!(d >= 0) || d > d_max) throw DomainError("distance outside [0, d_max]");
  return static_cast<double>(n_v) * (1.0 - d / d_max);
}

enum class NodeClass { poi, cell };

inline const char* to_string(NodeClass c) { return c == NodeClass::poi ? "poi" : "cell"; }

struct NodeInfo {
  NodeClass kind = NodeClass::poi;
  std::string id;
  geo::Wgs84Point location;
  // POI attributes
  std::string category;
  std::string district;
  bool official_attraction = false;
  // Cell attribute
  std::uint64_t n_v = 0;

  bool operator==(const NodeInfo&) const = default;
};

/// POI and cell nodes joined by weighted edges. POI nodes occupy indices
/// [0, poi_count()), cells follow. Immutable after construction.
class BipartiteGraph {
 public:
  struct Edge {
    std::uint32_t poi = 0;   // node index
    std::uint32_t cell = 0;  // node index
    double weight = 0.0;

    bool operator==(const Edge&) const = default;
  };
  struct Arc {
    std::uint32_t to;
    double weight;
  };

  BipartiteGraph() = default;

  /// Edge endpoints index into pois and cells respectively (local indices).
  BipartiteGraph(std::vector<NodeInfo> pois, std::vector<NodeInfo> cells, std::vector<Edge> local_edges)
      : poi_count_(static_cast<std::uint32_t>(pois.size())) {
    nodes_ = std::move(pois);
    for (auto& n : nodes_) n.kind = NodeClass::poi;
    for (auto& c : cells) {
      c.kind = NodeClass::cell;
      nodes_.push_back(std::move(c));
    }
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
      auto& lookup = i < poi_count_ ? poi_index_ : cell_index_;
      if (!lookup.emplace(nodes_[i].id, i).second) {
        throw DuplicateIdError("duplicate graph node '" + nodes_[i].id + "'", nodes_[i].id);
      }
    }
    std::unordered_set<std::uint64_t> seen;
    edges_.reserve(local_edges.size());
    for (const auto& e : local_edges) {
      if (e.poi >= poi_count_ || e.cell >= cell_count()) throw ConsistencyError("edge endpoint out of range");
      if (!std::isfinite(e.weight) || e.weight < 0) throw DomainError("edge weight must be finite and >= 0");
      if (!seen.insert((static_cast<std::uint64_t>(e.poi) << 32) | e.cell).second) {
        throw ConsistencyError("duplicate edge " + nodes_[e.poi].id + "-" + nodes_[poi_count_ + e.cell].id);
      }
      edges_.push_back({e.poi, poi_count_ + e.cell, e.weight});
    }
    offsets_.assign(nodes_.size() + 1, 0);
    for (const auto& e : edges_) {
      ++offsets_[e.poi + 1];
      ++offsets_[e.cell + 1];
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    arcs_.resize(edges_.size() * 2);
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges_) {
      arcs_[fill[e.poi]++] = {e.cell, e.weight};
      arcs_[fill[e.cell]++] = {e.poi, e.weight};
    }
  }

  std::uint32_t poi_count() const { return poi_count_; }
  std::uint32_t cell_count() const { return static_cast<std::uint32_t>(nodes_.size()) - poi_count_; }
  std::uint32_t node_count() const { return static_cast<std::uint32_t>(nodes_.size()); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }

  bool is_poi(std::uint32_t v) const { return v < poi_count_; }
  const NodeInfo& node(std::uint32_t v) const { return nodes_[v]; }
  const std::vector<NodeInfo>& nodes() const { return nodes_; }
  /// Edges with global node indices.
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const Arc> neighbors(std::uint32_t v) const {
    return {arcs_.data() + offsets_[v], arcs_.data() + offsets_[v + 1]};
  }
  std::size_t degree(std::uint32_t v) const { return offsets_[v + 1] - offsets_[v]; }
  double weighted_degree(std::uint32_t v) const {
    double s = 0;
    for (const auto& a : neighbors(v)) s += a.weight;
    return s;
  }
  double total_weight() const {
    double s = 0;
    for (const auto& e : edges_) s += e.weight;
    return s;
  }

  std::optional<std::uint32_t> find_poi(const std::string& id) const {
    auto it = poi_index_.find(id);
    if (it == poi_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::uint32_t> find_cell(const std::string& id) const {
    auto it = cell_index_.find(id);
    if (it == cell_index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::uint32_t poi_count_ = 0;
  std::vector<NodeInfo> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::uint32_t> offsets_;
  std::vector<Arc> arcs_;
  std::unordered_map<std::string, std::uint32_t> poi_index_, cell_index_;
};

inline NodeInfo poi_node(const ingest::Poi& p) {
  NodeInfo n;
  n.kind = NodeClass::poi;
  n.id = p.poi_id;
  n.location = p.location;
  n.category = p.category;
  n.district = p.district;
  n.official_attraction = p.official_attraction;
  return n;
}

inline NodeInfo cell_node(const ingest::CellAccumulation& c) {
  NodeInfo n;
  n.kind = NodeClass::cell;
  n.id = c.cell_id;
  n.location = c.location;
  n.n_v = c.n_v;
  return n;
}

/// One edge per distance record, weighted by edge_weight(n_v, walking_m, d_max).
/// Only POIs and cells that appear in some record become nodes; both are
/// ordered by id. POI attributes come from `pois` when listed there.
inline BipartiteGraph build_graph(std::span<const distance::DistanceRecord> records,
                                  std::span<const ingest::CellAccumulation> cells,
                                  std::span<const ingest::Poi> pois, double d_max = distance::kDefaultMaxWalkM) {
  std::unordered_map<std::string_view, const ingest::CellAccumulation*> cell_by_id;
  for (const auto& c : cells) cell_by_id.emplace(c.cell_id, &c);
  std::unordered_map<std::string_view, const ingest::Poi*> poi_by_id;
  for (const auto& p : pois) poi_by_id.emplace(p.poi_id, &p);

  std::map<std::string, std::uint32_t> poi_ids, cell_ids;
  for (const auto& r : records) {
    if (!cell_by_id.count(r.cell_id)) throw ConsistencyError("distance record references unknown cell '" + r.cell_id + "'");
    poi_ids.emplace(r.poi_id, 0);
    cell_ids.emplace(r.cell_id, 0);
  }
  std::vector<NodeInfo> poi_nodes, cell_nodes;
  for (auto& [id, idx] : poi_ids) {
    idx = static_cast<std::uint32_t>(poi_nodes.size());
    if (auto it = poi_by_id.find(id); it != poi_by_id.end()) {
      poi_nodes.push_back(poi_node(*it->second));
    } else {
      NodeInfo n;
      n.id = id;
      poi_nodes.push_back(std::move(n));
    }
  }
  for (auto& [id, idx] : cell_ids) {
    idx = static_cast<std::uint32_t>(cell_nodes.size());
    cell_nodes.push_back(cell_node(*cell_by_id.at(id)));
  }
  std::vector<BipartiteGraph::Edge> edges;
  edges.reserve(records.size());
  for (const auto& r : records) {
    const auto n_v = cell_by_id.at(r.cell_id)->n_v;
    edges.push_back({poi_ids.at(r.poi_id), cell_ids.at(r.cell_id), edge_weight(n_v, r.walking_m, d_max)});
  }
  return BipartiteGraph(std::move(poi_nodes), std::move(cell_nodes), std::move(edges));
}

struct GraphStats {
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  double average_degree = 0.0;
  double average_weighted_degree = 0.0;
};

inline GraphStats graph_stats(const BipartiteGraph& g) {
  if (g.empty()) throw EmptyGraphError("graph has no nodes");
  GraphStats s;
  s.node_count = g.node_count();
  s.edge_count = g.edge_count();
  double weighted = 0;
  for (std::uint32_t v = 0; v < g.node_count(); ++v) weighted += g.weighted_degree(v);
  s.average_degree = 2.0 * static_cast<double>(s.edge_count) / static_cast<double>(s.node_count);
  s.average_weighted_degree = weighted / static_cast<double>(s.node_count);
  return s;
}

struct SharedCells {
  std::string poi_a;
  std::string poi_b;
  std::size_t shared = 0;

  bool operator==(const SharedCells&) const = default;
};

/// Number of cells each unordered POI pair is jointly linked to. Pairs that share
/// nothing are omitted; output is ordered by POI node index.
inline std::vector<SharedCells> poi_poi_shared_cells(const BipartiteGraph& g) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> counts;
  std::vector<std::uint32_t> members;
  for (std::uint32_t c = g.poi_count(); c < g.node_count(); ++c) {
    members.clear();
    for (const auto& a : g.neighbors(c)) members.push_back(a.to);
    std::sort(members.begin(), members.end());
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) ++counts[{members[i], members[j]}];
    }
  }
  std::vector<SharedCells> out;
  out.reserve(counts.size());
  for (const auto& [k, n] : counts) out.push_back({g.node(k.first).id, g.node(k.second).id, n});
  return out;
}

/// Cell POI-link count normalized by the largest count over all cells.
inline std::map<std::string, double> cell_poi_density(const BipartiteGraph& g) {
  std::map<std::string, double> out;
  std::size_t max_links = 0;
  for (std::uint32_t c = g.poi_count(); c < g.node_count(); ++c) max_links = std::max(max_links, g.degree(c));
  for (std::uint32_t c = g.poi_count(); c < g.node_count(); ++c) {
    out[g.node(c).id] = max_links == 0 ? 0.0 : static_cast<double>(g.degree(c)) / static_cast<double>(max_links);
  }
  return out;
}

}  // namespace walkability::graph
