#pragma once

#include <algorithm>
#include <bit>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "walkability/csv.hpp"
#include "walkability/errors.hpp"
#include "walkability/geo.hpp"
#include "walkability/ingest.hpp"

namespace walkability::distance {

using geo::Wgs84Point;

inline constexpr double kDefaultMaxWalkM = 1000.0;
/// Slack allowed when checking walking >= straight-line.
inline constexpr double kMetricSlackM = 1.0;

struct CandidatePair {
  std::string poi_id;
  std::string cell_id;
  double straight_m = 0.0;
  Wgs84Point poi_location;
  Wgs84Point cell_location;
};

struct DistanceRecord {
  std::string poi_id;
  std::string cell_id;
  double straight_m = 0.0;
  double walking_m = 0.0;

  bool operator==(const DistanceRecord&) const = default;
};

/// Every POI-cell pair within d_max great-circle meters, sorted by
/// (poi_id, cell_id).
inline std::vector<CandidatePair> prefilter_pairs(std::span<const ingest::Poi> pois,
                                                  std::span<const ingest::CellAccumulation> cells,
                                                  double d_max = kDefaultMaxWalkM) {
  if (!(d_max > 0)) throw DomainError("d_max must be positive");
  std::vector<Wgs84Point> points;
  points.reserve(cells.size());
  for (const auto& c : cells) points.push_back(c.location);
  const geo::GridIndex index(points, d_max);

  std::vector<CandidatePair> out;
  for (const auto& p : pois) {
    for (auto ci : index.query(p.location, d_max)) {
      const auto& c = cells[ci];
      const double d = geo::haversine_m(p.location, c.location);
      if (d <= d_max) out.push_back({p.poi_id, c.cell_id, d, p.location, c.location});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.poi_id, a.cell_id) < std::tie(b.poi_id, b.cell_id);
  });
  return out;
}

struct WalkOutcome {
  enum class Status { ok, unreachable, failed };
  Status status = Status::ok;
  double meters = 0.0;
  std::string detail;

  static WalkOutcome found(double m) { return {Status::ok, m, {}}; }
  static WalkOutcome unreachable(std::string why = {}) { return {Status::unreachable, 0.0, std::move(why)}; }
  static WalkOutcome failed(std::string why) { return {Status::failed, 0.0, std::move(why)}; }
};

/// Source of walking distances. Implementations must be safe to call from
/// several threads at once.
class WalkProvider {
 public:
  virtual ~WalkProvider() = default;
  /// Stable identifier; part of the cache key.
  virtual std::string id() const = 0;
  virtual WalkOutcome walk(const CandidatePair& pair) = 0;
};

inline WalkOutcome walking_distance(WalkProvider& provider, const CandidatePair& pair) {
  return provider.walk(pair);
}

/// straight_m scaled by a constant detour factor.
class FallbackProvider final : public WalkProvider {
 public:
  explicit FallbackProvider(double detour_factor = 1.3) : factor_(detour_factor) {
    if (!(detour_factor >= 1.0)) throw DomainError("detour factor must be >= 1");
  }
  std::string id() const override { return "fallback:" + csv::exact(factor_); }
  WalkOutcome walk(const CandidatePair& pair) override { return WalkOutcome::found(pair.straight_m * factor_); }

 private:
  double factor_;
};

/// Undirected pedestrian network, immutable once built.
class RoadGraph {
 public:
  struct Edge {
    std::uint32_t a = 0, b = 0;
    double length_m = 0.0;
  };

  RoadGraph() = default;

  RoadGraph(std::vector<std::string> ids, std::vector<Wgs84Point> points, std::vector<Edge> edges)
      : ids_(std::move(ids)), points_(std::move(points)), edges_(std::move(edges)) {
    if (ids_.size() != points_.size()) throw ConsistencyError("road graph: id/point count mismatch");
    offsets_.assign(points_.size() + 1, 0);
    for (const auto& e : edges_) {
      if (e.a >= points_.size() || e.b >= points_.size()) throw ConsistencyError("road graph: edge endpoint out of range");
      if (!(e.length_m > 0) || !std::isfinite(e.length_m)) throw FormatError("road graph: edge length must be positive");
      if (e.length_m < geo::haversine_m(points_[e.a], points_[e.b]) - kMetricSlackM) {
        throw FormatError("road graph: edge " + ids_[e.a] + "-" + ids_[e.b] + " shorter than its endpoints' distance");
      }
      ++offsets_[e.a + 1];
      ++offsets_[e.b + 1];
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    adj_.resize(edges_.size() * 2);
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges_) {
      adj_[fill[e.a]++] = {e.b, e.length_m};
      adj_[fill[e.b]++] = {e.a, e.length_m};
    }
  }

  std::size_t node_count() const { return points_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Wgs84Point>& points() const { return points_; }
  const std::vector<Edge>& edges() const { return edges_; }

  struct Arc {
    std::uint32_t to;
    double length_m;
  };
  std::span<const Arc> neighbors(std::uint32_t v) const {
    return {adj_.data() + offsets_[v], adj_.data() + offsets_[v + 1]};
  }

  /// Single-source shortest path lengths; unreachable nodes are +inf.
  std::vector<double> shortest_paths_from(std::uint32_t source) const {
    std::vector<double> dist(node_count(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::uint32_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[source] = 0.0;
    pq.emplace(0.0, source);
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (const auto& arc : neighbors(u)) {
        const double nd = d + arc.length_m;
        if (nd < dist[arc.to]) {
          dist[arc.to] = nd;
          pq.emplace(nd, arc.to);
        }
      }
    }
    return dist;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<Wgs84Point> points_;
  std::vector<Edge> edges_;
  std::vector<std::uint32_t> offsets_;
  std::vector<Arc> adj_;
};

/// Reads a node file (id, lat, lon) and an edge file (id_a, id_b, length_m).
/// Missing or empty lengths default to the haversine distance of the endpoints.
inline RoadGraph read_road_graph(std::istream& nodes, std::istream& edges) {
  csv::Reader nr(nodes);
  csv::Row row;
  if (!nr.next(row)) throw FormatError("road node file: missing header");
  csv::Header nh(row);
  const auto n_id = nh.require("id", "road node file"), n_lat = nh.require("lat", "road node file"),
             n_lon = nh.require("lon", "road node file");
  std::vector<std::string> ids;
  std::vector<Wgs84Point> points;
  std::unordered_map<std::string, std::uint32_t> index;
  while (nr.next(row)) {
    const auto where = "road node file line " + std::to_string(nr.record_line());
    if (row.size() < 3) throw FormatError(where + ": too few fields");
    auto lat = csv::to_double(row[n_lat]), lon = csv::to_double(row[n_lon]);
    if (!lat || !lon || !geo::is_valid({*lat, *lon})) throw FormatError(where + ": bad coordinate");
    std::string id(csv::trim(row[n_id]));
    if (!index.emplace(id, static_cast<std::uint32_t>(ids.size())).second) {
      throw DuplicateIdError("duplicate road node '" + id + "'", id);
    }
    ids.push_back(std::move(id));
    points.push_back({*lat, *lon});
  }

  csv::Reader er(edges);
  if (!er.next(row)) throw FormatError("road edge file: missing header");
  csv::Header eh(row);
  const auto e_a = eh.require("id_a", "road edge file"), e_b = eh.require("id_b", "road edge file");
  const auto e_len = eh.find("length_m");
  std::vector<RoadGraph::Edge> list;
  while (er.next(row)) {
    const auto where = "road edge file line " + std::to_string(er.record_line());
    if (row.size() < 2) throw FormatError(where + ": too few fields");
    auto a = index.find(std::string(csv::trim(row[e_a])));
    auto b = index.find(std::string(csv::trim(row[e_b])));
    if (a == index.end() || b == index.end()) throw ConsistencyError(where + ": unknown node id");
    double length = geo::haversine_m(points[a->second], points[b->second]);
    if (e_len && *e_len < row.size() && !csv::trim(row[*e_len]).empty()) {
      auto l = csv::to_double(row[*e_len]);
      if (!l) throw FormatError(where + ": bad length_m");
      length = *l;
    }
    list.push_back({a->second, b->second, length});
  }
  return RoadGraph(std::move(ids), std::move(points), std::move(list));
}

inline void write_road_graph(std::ostream& nodes, std::ostream& edges, const RoadGraph& g) {
  csv::write_row(nodes, {"id", "lat", "lon"});
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    csv::write_row(nodes, {g.ids()[i], csv::exact(g.points()[i].lat), csv::exact(g.points()[i].lon)});
  }
  csv::write_row(edges, {"id_a", "id_b", "length_m"});
  for (const auto& e : g.edges()) csv::write_row(edges, {g.ids()[e.a], g.ids()[e.b], csv::exact(e.length_m)});
}

/// Shortest path on a road graph between the road nodes nearest to each
/// endpoint, plus straight access legs from the endpoints to those nodes.
class RoadGraphProvider final : public WalkProvider {
 public:
  explicit RoadGraphProvider(std::shared_ptr<const RoadGraph> graph, double snap_radius_m = 500.0)
      : graph_(std::move(graph)), snap_radius_m_(snap_radius_m), index_(graph_->points(), snap_radius_m) {}

  std::string id() const override { return "roadgraph"; }

  WalkOutcome walk(const CandidatePair& pair) override {
    auto poi_node = nearest_node(pair.poi_location);
    auto cell_node = nearest_node(pair.cell_location);
    if (!poi_node || !cell_node) return WalkOutcome::unreachable("no road node within snap radius");
    const auto tree = tree_from(poi_node->first);
    const double path = (*tree)[cell_node->first];
    if (!std::isfinite(path)) return WalkOutcome::unreachable("endpoints on disconnected road components");
    return WalkOutcome::found(poi_node->second + path + cell_node->second);
  }

  /// Nearest road node and its straight-line distance, if within the snap radius.
  /// Answers are memoized per coordinate since each cell is snapped once per nearby POI.
  std::optional<std::pair<std::uint32_t, double>> nearest_node(const Wgs84Point& p) {
    const SnapKey key{std::bit_cast<std::uint64_t>(p.lat), std::bit_cast<std::uint64_t>(p.lon)};
    {
      std::shared_lock lock(snap_mutex_);
      if (auto it = snaps_.find(key); it != snaps_.end()) return it->second;
    }
    auto best = scan_nearest(p);
    std::unique_lock lock(snap_mutex_);
    snaps_.try_emplace(key, best);
    return best;
  }

 private:
  struct SnapKey {
    std::uint64_t lat, lon;
    bool operator==(const SnapKey&) const = default;
  };
  struct SnapKeyHash {
    std::size_t operator()(const SnapKey& k) const noexcept {
      return std::hash<std::uint64_t>{}(k.lat * 0x9E3779B97F4A7C15ULL ^ k.lon);
    }
  };

  std::optional<std::pair<std::uint32_t, double>> scan_nearest(const Wgs84Point& p) const {
    std::optional<std::pair<std::uint32_t, double>> best;
    for (auto i : index_.query(p, snap_radius_m_)) {
      const double d = geo::haversine_m(p, graph_->points()[i]);
      if (d > snap_radius_m_) continue;
      if (!best || d < best->second || (d == best->second && i < best->first)) best = std::make_pair(i, d);
    }
    return best;
  }

  std::shared_ptr<const std::vector<double>> tree_from(std::uint32_t source) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = trees_.find(source); it != trees_.end()) return it->second;
    }
    auto tree = std::make_shared<const std::vector<double>>(graph_->shortest_paths_from(source));
    std::unique_lock lock(mutex_);
    return trees_.try_emplace(source, std::move(tree)).first->second;
  }

  std::shared_ptr<const RoadGraph> graph_;
  double snap_radius_m_;
  geo::GridIndex index_;
  std::shared_mutex mutex_;
  std::unordered_map<std::uint32_t, std::shared_ptr<const std::vector<double>>> trees_;
  std::shared_mutex snap_mutex_;
  std::unordered_map<SnapKey, std::optional<std::pair<std::uint32_t, double>>, SnapKeyHash> snaps_;
};

/// Persistent walking-distance cache: one line per resolution
/// (poi_id, cell_id, provider_id, walking_m | UNREACHABLE). Stored values are
/// raw provider answers, before any budget filtering.
class DistanceCache {
 public:
  /// In-memory only.
  DistanceCache() = default;

  /// Loads an existing file (if any) and appends new resolutions to it.
  explicit DistanceCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (in) {
      csv::Reader reader(in);
      csv::Row row;
      bool first = true;
      while (reader.next(row)) {
        if (first && !row.empty() && csv::lower(row[0]) == "poi_id") {
          first = false;
          continue;
        }
        first = false;
        if (row.size() < 4) continue;  // torn trailing line from an interrupted run
        std::optional<double> value;
        if (row[3] != "UNREACHABLE") {
          auto v = csv::to_double(row[3]);
          if (!v) continue;
          value = *v;
        }
        entries_[key(row[0], row[1], row[2])] = value;
      }
    }
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path_, ec) || std::filesystem::file_size(path_, ec) == 0;
    out_.open(path_, std::ios::app);
    if (!out_) throw Error("cannot open distance cache '" + path_ + "'");
    if (fresh) out_ << "poi_id,cell_id,provider_id,walking_m\n";
  }

  /// nullopt: not cached. Inner nullopt: cached as unreachable.
  std::optional<std::optional<double>> lookup(const std::string& poi, const std::string& cell,
                                              const std::string& provider) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key(poi, cell, provider));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& poi, const std::string& cell, const std::string& provider,
             std::optional<double> walking_m) {
    std::unique_lock lock(mutex_);
    entries_[key(poi, cell, provider)] = walking_m;
    if (out_.is_open()) {
      csv::write_row(out_, {poi, cell, provider, walking_m ? csv::exact(*walking_m) : "UNREACHABLE"});
    }
  }

  void flush() {
    std::unique_lock lock(mutex_);
    if (out_.is_open()) out_.flush();
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  static std::string key(const std::string& poi, const std::string& cell, const std::string& provider) {
    return poi + '\x1f' + cell + '\x1f' + provider;
  }

  std::string path_;
  std::ofstream out_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::optional<double>> entries_;
};

struct UnresolvedPair {
  std::string poi_id;
  std::string cell_id;
  std::string reason;
};

struct ResolveResult {
  std::vector<DistanceRecord> records;  // retained, in input pair order
  std::vector<UnresolvedPair> unresolved;
  std::size_t over_budget = 0;
  std::size_t unreachable = 0;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
};

/// Resolves walking distances for every pair, from the cache when possible,
/// and keeps records with walking_m <= d_max. Provider failures are reported
/// and not cached, so a later run retries them.
inline ResolveResult resolve_distances(std::span<const CandidatePair> pairs, WalkProvider& provider,
                                       DistanceCache& cache, double d_max = kDefaultMaxWalkM,
                                       unsigned jobs = 1) {
  if (!(d_max > 0)) throw DomainError("d_max must be positive");
  const auto pid = provider.id();
  std::vector<WalkOutcome> outcomes(pairs.size());
  std::vector<char> from_cache(pairs.size(), 0);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) {
      const auto& p = pairs[i];
      if (auto hit = cache.lookup(p.poi_id, p.cell_id, pid)) {
        from_cache[i] = 1;
        outcomes[i] = *hit ? WalkOutcome::found(**hit) : WalkOutcome::unreachable();
        continue;
      }
      outcomes[i] = walking_distance(provider, p);
      if (outcomes[i].status == WalkOutcome::Status::ok) {
        cache.store(p.poi_id, p.cell_id, pid, outcomes[i].meters);
      } else if (outcomes[i].status == WalkOutcome::Status::unreachable) {
        cache.store(p.poi_id, p.cell_id, pid, std::nullopt);
      }
    }
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  cache.flush();

  ResolveResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& o = outcomes[i];
    if (from_cache[i]) ++out.cache_hits;
    else ++out.provider_calls;
    switch (o.status) {
      case WalkOutcome::Status::failed:
        out.unresolved.push_back({p.poi_id, p.cell_id, o.detail});
        break;
      case WalkOutcome::Status::unreachable:
        ++out.unreachable;
        break;
      case WalkOutcome::Status::ok:
        if (o.meters <= d_max) out.records.push_back({p.poi_id, p.cell_id, p.straight_m, o.meters});
        else ++out.over_budget;
        break;
    }
  }
  return out;
}

inline void write_distances(std::ostream& out, std::span<const DistanceRecord> records) {
  csv::write_row(out, {"poi_id", "cell_id", "straight_m", "walking_m"});
  for (const auto& r : records) {
    csv::write_row(out, {r.poi_id, r.cell_id, csv::exact(r.straight_m), csv::exact(r.walking_m)});
  }
}

inline std::vector<DistanceRecord> read_distances(std::istream& in) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("distance file: missing header");
  csv::Header h(row);
  const auto c_p = h.require("poi_id", "distance file"), c_c = h.require("cell_id", "distance file"),
             c_s = h.require("straight_m", "distance file"), c_w = h.require("walking_m", "distance file");
  std::vector<DistanceRecord> out;
  while (reader.next(row)) {
    auto s = csv::to_double(row.size() > c_s ? row[c_s] : ""), w = csv::to_double(row.size() > c_w ? row[c_w] : "");
    if (!s || !w) throw FormatError("distance file line " + std::to_string(reader.record_line()));
    out.push_back({row[c_p], row[c_c], *s, *w});
  }
  return out;
}

}  // namespace walkability::distance
