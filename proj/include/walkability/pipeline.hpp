#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "walkability/analysis.hpp"
#include "walkability/community.hpp"
#include "walkability/csv.hpp"
#include "walkability/distance.hpp"
#include "walkability/errors.hpp"
#include "walkability/graph.hpp"
#include "walkability/graph_io.hpp"
#include "walkability/ingest.hpp"
#include "walkability/routing_api.hpp"
#include "walkability/timestamp.hpp"

#ifndef WALKABILITY_VERSION
#define WALKABILITY_VERSION "0.0.0"
#endif

namespace walkability::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolName = "walkability";
inline constexpr const char* kToolVersion = WALKABILITY_VERSION;

/// Missing or unreadable input file.
class InputError : public Error {
 public:
  explicit InputError(const fs::path& path, const std::string& what = "cannot read input")
      : Error(what + ": " + path.string()), path_(path) {}
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------
// Manifest

enum class ProviderKind { roadgraph, fallback, api };

inline std::string to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::roadgraph: return "roadgraph";
    case ProviderKind::fallback: return "fallback";
    case ProviderKind::api: return "api";
  }
  return "?";
}

inline ProviderKind parse_provider(std::string_view s) {
  const auto l = csv::lower(csv::trim(s));
  if (l == "roadgraph" || l == "road-graph") return ProviderKind::roadgraph;
  if (l == "fallback") return ProviderKind::fallback;
  if (l == "api") return ProviderKind::api;
  throw FormatError("unknown provider '" + std::string(s) + "'");
}

/// Every parameter of a run. Defaults are the documented ones; all of them
/// are echoed into provenance.json.
struct RunManifest {
  fs::path visitors;
  fs::path pois;
  fs::path road_nodes;
  fs::path road_edges;
  ingest::CoordinateMode coordinate_mode = ingest::CoordinateMode::wgs84;
  /// "START..END"; empty means every snapshot.
  std::string window;
  double d_max = distance::kDefaultMaxWalkM;

  ProviderKind provider = ProviderKind::roadgraph;
  double fallback_factor = 1.3;
  double snap_radius_m = 500.0;
  /// Credentials come from the environment only.
  std::string api_endpoint;
  double api_requests_per_second = 10.0;

  /// At most one of these is set; with neither, gamma is 1.
  std::optional<double> gamma;
  std::optional<double> gephi_resolution;
  std::uint64_t seed = 0;
  std::size_t min_nodes = community::kDefaultMinNodes;
  double min_share = community::kDefaultMinShare;

  fs::path out_dir = "walkability_out";
  /// Empty means <out_dir>/distance_cache.csv.
  fs::path cache;
  double max_bad_row_ratio = 0.01;
  /// Worker cap for the distance stage; 0 means one per hardware thread.
  unsigned jobs = 1;

  std::size_t top_k = 30;
  std::size_t top_categories = 5;
  double attraction_threshold = 0.5;
  /// Temporal slices; empty means every day present in the window.
  std::vector<std::string> slices;
  /// "A:B" slice pairs; empty means consecutive slices.
  std::vector<std::string> compare_slices;
  double centrality_tol = 1e-8;
  int centrality_max_iter = 5000;

  double resolution() const {
    if (gamma) return *gamma;
    if (gephi_resolution) return community::gamma_from_gephi_resolution(*gephi_resolution);
    return 1.0;
  }

  fs::path cache_path() const { return cache.empty() ? out_dir / "distance_cache.csv" : cache; }

  unsigned worker_count() const {
    return jobs ? jobs : std::max(1u, std::thread::hardware_concurrency());
  }

  TimeWindow time_window() const { return window.empty() ? TimeWindow::everything() : parse_window(window); }

  void validate() const {
    if (gamma && gephi_resolution) throw DomainError("set either gamma or gephi_resolution, not both");
    if (gamma && !(*gamma > 0)) throw DomainError("gamma must be positive");
    if (gephi_resolution && !(*gephi_resolution > 0)) throw DomainError("gephi_resolution must be positive");
    if (!(d_max > 0)) throw DomainError("d_max must be positive");
    if (!(min_share >= 0 && min_share <= 1)) throw DomainError("min_share must lie in [0, 1]");
    if (!(max_bad_row_ratio >= 0 && max_bad_row_ratio <= 1)) throw DomainError("max_bad_row_ratio must lie in [0, 1]");
    if (!(centrality_tol > 0) || centrality_max_iter < 1) throw DomainError("bad centrality settings");
    if (top_k < 1 || top_categories < 1) throw DomainError("top_k and top_categories must be positive");
    if (out_dir.empty()) throw DomainError("out_dir must be set");
    (void)time_window();
  }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(',', pos);
    const auto item = csv::trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (!item.empty()) out.emplace_back(item);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ",") + i;
  return out;
}

inline double to_real(std::string_view key, std::string_view v) {
  auto d = csv::to_double(v);
  if (!d) throw FormatError("manifest key '" + std::string(key) + "': not a number: '" + std::string(v) + "'");
  return *d;
}

template <class Int>
Int to_integer(std::string_view key, std::string_view v) {
  auto i = csv::to_int<Int>(csv::trim(v));
  if (!i) throw FormatError("manifest key '" + std::string(key) + "': not an integer: '" + std::string(v) + "'");
  return *i;
}

inline fs::path resolve(std::string_view v, const fs::path& base) {
  if (v.empty()) return {};
  fs::path p{std::string(v)};
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

inline std::string opt_real(const std::optional<double>& v) { return v ? csv::exact(*v) : std::string(); }

}  // namespace detail

/// Manifest keys in canonical order.
inline const std::vector<std::string>& manifest_keys() {
  static const std::vector<std::string> keys{
      "visitors",         "pois",           "road_nodes",        "road_edges",
      "coordinate_mode",  "window",         "d_max",             "provider",
      "fallback_factor",  "snap_radius_m",  "api_endpoint",      "api_requests_per_second",
      "gamma",            "gephi_resolution", "seed",            "min_nodes",
      "min_share",        "out_dir",        "cache",             "max_bad_row_ratio",
      "jobs",             "top_k",          "top_categories",    "attraction_threshold",
      "slices",           "compare_slices", "centrality_tol",    "centrality_max_iter"};
  return keys;
}

/// Sets one manifest field from its text form. Relative paths resolve
/// against `base`. Setting gamma clears gephi_resolution and vice versa, so
/// a later layer (command-line flags) overrides an earlier one (the file).
inline void set_field(RunManifest& m, std::string_view key, std::string_view raw, const fs::path& base) {
  const auto v = csv::trim(raw);
  const std::string k(key);
  if (k == "visitors") m.visitors = detail::resolve(v, base);
  else if (k == "pois") m.pois = detail::resolve(v, base);
  else if (k == "road_nodes") m.road_nodes = detail::resolve(v, base);
  else if (k == "road_edges") m.road_edges = detail::resolve(v, base);
  else if (k == "coordinate_mode") m.coordinate_mode = ingest::parse_coordinate_mode(v);
  else if (k == "window") m.window = std::string(v);
  else if (k == "d_max") m.d_max = detail::to_real(k, v);
  else if (k == "provider") m.provider = parse_provider(v);
  else if (k == "fallback_factor") m.fallback_factor = detail::to_real(k, v);
  else if (k == "snap_radius_m") m.snap_radius_m = detail::to_real(k, v);
  else if (k == "api_endpoint") m.api_endpoint = std::string(v);
  else if (k == "api_requests_per_second") m.api_requests_per_second = detail::to_real(k, v);
  else if (k == "gamma") {
    m.gamma = v.empty() ? std::nullopt : std::optional(detail::to_real(k, v));
    if (m.gamma) m.gephi_resolution.reset();
  } else if (k == "gephi_resolution") {
    m.gephi_resolution = v.empty() ? std::nullopt : std::optional(detail::to_real(k, v));
    if (m.gephi_resolution) m.gamma.reset();
  }
  else if (k == "seed") m.seed = detail::to_integer<std::uint64_t>(k, v);
  else if (k == "min_nodes") m.min_nodes = detail::to_integer<std::size_t>(k, v);
  else if (k == "min_share") m.min_share = detail::to_real(k, v);
  else if (k == "out_dir") m.out_dir = detail::resolve(v, base);
  else if (k == "cache") m.cache = detail::resolve(v, base);
  else if (k == "max_bad_row_ratio") m.max_bad_row_ratio = detail::to_real(k, v);
  else if (k == "jobs") m.jobs = detail::to_integer<unsigned>(k, v);
  else if (k == "top_k") m.top_k = detail::to_integer<std::size_t>(k, v);
  else if (k == "top_categories") m.top_categories = detail::to_integer<std::size_t>(k, v);
  else if (k == "attraction_threshold") m.attraction_threshold = detail::to_real(k, v);
  else if (k == "slices") m.slices = detail::split_list(v);
  else if (k == "compare_slices") m.compare_slices = detail::split_list(v);
  else if (k == "centrality_tol") m.centrality_tol = detail::to_real(k, v);
  else if (k == "centrality_max_iter") m.centrality_max_iter = detail::to_integer<int>(k, v);
  else throw FormatError("unknown manifest key '" + k + "'");
}

/// Canonical text of every field, keyed like the manifest file.
inline std::map<std::string, std::string> manifest_fields(const RunManifest& m) {
  return {{"visitors", m.visitors.string()},
          {"pois", m.pois.string()},
          {"road_nodes", m.road_nodes.string()},
          {"road_edges", m.road_edges.string()},
          {"coordinate_mode", ingest::to_string(m.coordinate_mode)},
          {"window", m.window},
          {"d_max", csv::exact(m.d_max)},
          {"provider", to_string(m.provider)},
          {"fallback_factor", csv::exact(m.fallback_factor)},
          {"snap_radius_m", csv::exact(m.snap_radius_m)},
          {"api_endpoint", m.api_endpoint},
          {"api_requests_per_second", csv::exact(m.api_requests_per_second)},
          {"gamma", detail::opt_real(m.gamma)},
          {"gephi_resolution", detail::opt_real(m.gephi_resolution)},
          {"seed", std::to_string(m.seed)},
          {"min_nodes", std::to_string(m.min_nodes)},
          {"min_share", csv::exact(m.min_share)},
          {"out_dir", m.out_dir.string()},
          {"cache", m.cache.string()},
          {"max_bad_row_ratio", csv::exact(m.max_bad_row_ratio)},
          {"jobs", std::to_string(m.jobs)},
          {"top_k", std::to_string(m.top_k)},
          {"top_categories", std::to_string(m.top_categories)},
          {"attraction_threshold", csv::exact(m.attraction_threshold)},
          {"slices", detail::join_list(m.slices)},
          {"compare_slices", detail::join_list(m.compare_slices)},
          {"centrality_tol", csv::exact(m.centrality_tol)},
          {"centrality_max_iter", std::to_string(m.centrality_max_iter)}};
}

/// Applies "key = value" lines on top of `m`. Blank lines and lines starting
/// with '#' are skipped.
inline void apply_manifest(RunManifest& m, std::istream& in, const fs::path& base) {
  std::string line;
  std::size_t n = 0;
  std::set<std::string> seen, given;
  while (std::getline(in, line)) {
    ++n;
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw FormatError(fmt::format("manifest line {}: expected key = value", n));
    const std::string key(csv::trim(t.substr(0, eq)));
    if (!seen.insert(key).second) throw FormatError(fmt::format("manifest line {}: duplicate key '{}'", n, key));
    const auto value = t.substr(eq + 1);
    set_field(m, key, value, base);
    if (!csv::trim(value).empty()) given.insert(key);
  }
  if (given.count("gamma") && given.count("gephi_resolution")) {
    throw DomainError("manifest sets both gamma and gephi_resolution");
  }
}

inline RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path, "cannot read manifest");
  RunManifest m;
  apply_manifest(m, in, fs::absolute(path).parent_path());
  return m;
}

inline void write_manifest(std::ostream& out, const RunManifest& m) {
  const auto fields = manifest_fields(m);
  for (const auto& k : manifest_keys()) out << k << " = " << fields.at(k) << '\n';
}

// ---------------------------------------------------------------------------
// Output layout

struct Layout {
  fs::path root;

  fs::path stages() const { return root / "stages"; }
  fs::path reports() const { return root / "reports"; }
  fs::path exports() const { return root / "export"; }

  fs::path cells() const { return stages() / "cells.csv"; }
  fs::path verified_pois() const { return stages() / "verified_pois.csv"; }
  fs::path dropped_pois() const { return stages() / "dropped_pois.csv"; }
  fs::path poi_visitors() const { return stages() / "poi_visitors.csv"; }
  fs::path candidate_pairs() const { return stages() / "candidate_pairs.csv"; }
  fs::path bad_rows() const { return stages() / "bad_rows.csv"; }
  fs::path distances() const { return stages() / "distances.csv"; }
  fs::path unresolved() const { return stages() / "unresolved.csv"; }
  fs::path graph_nodes() const { return stages() / "graph_nodes.csv"; }
  fs::path graph_edges() const { return stages() / "graph_edges.csv"; }
  fs::path partition() const { return root / "partition.csv"; }
  fs::path provenance() const { return root / "provenance.json"; }
  fs::path summary() const { return root / "run_summary.txt"; }

  fs::path record(const std::string& stage) const { return stages() / (stage + ".json"); }
  fs::path done(const std::string& stage) const { return stages() / (stage + ".done"); }
  fs::path partial(const std::string& stage) const { return stages() / (stage + ".partial"); }
};

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"ingest", "distances", "build", "detect", "report", "export"};
  return names;
}

namespace detail {

inline std::ifstream open_in(const fs::path& p) {
  if (p.empty()) throw InputError(p, "input path not set");
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError(p);
  return in;
}

inline void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  body(out);
  out.flush();
  if (!out) throw Error("write failed: " + p.string());
}

inline void write_candidate_pairs(std::ostream& out, std::span<const distance::CandidatePair> pairs) {
  csv::write_row(out, {"poi_id", "cell_id", "straight_m", "poi_lat", "poi_lon", "cell_lat", "cell_lon"});
  for (const auto& p : pairs) {
    csv::write_row(out, {p.poi_id, p.cell_id, csv::exact(p.straight_m), csv::exact(p.poi_location.lat),
                         csv::exact(p.poi_location.lon), csv::exact(p.cell_location.lat),
                         csv::exact(p.cell_location.lon)});
  }
}

inline std::vector<distance::CandidatePair> read_candidate_pairs(std::istream& in) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("candidate pair file: missing header");
  const csv::Header h(row);
  const char* what = "candidate pair file";
  const std::size_t cols[] = {h.require("poi_id", what),  h.require("cell_id", what),  h.require("straight_m", what),
                              h.require("poi_lat", what), h.require("poi_lon", what),  h.require("cell_lat", what),
                              h.require("cell_lon", what)};
  std::vector<distance::CandidatePair> out;
  while (reader.next(row)) {
    double v[5];
    for (int i = 0; i < 5; ++i) {
      auto d = row.size() > cols[i + 2] ? csv::to_double(row[cols[i + 2]]) : std::nullopt;
      if (!d) throw FormatError(fmt::format("{} line {}", what, reader.record_line()));
      v[i] = *d;
    }
    out.push_back({row[cols[0]], row[cols[1]], v[0], {v[1], v[2]}, {v[3], v[4]}});
  }
  return out;
}

inline void write_poi_visitors(std::ostream& out, const std::map<std::string, std::uint64_t>& visitors) {
  csv::write_row(out, {"poi_id", "visitors"});
  for (const auto& [id, n] : visitors) csv::write_row(out, {id, std::to_string(n)});
}

inline std::map<std::string, std::uint64_t> read_poi_visitors(std::istream& in) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("POI visitor file: missing header");
  std::map<std::string, std::uint64_t> out;
  while (reader.next(row)) {
    auto n = row.size() == 2 ? csv::to_int<std::uint64_t>(row[1]) : std::nullopt;
    if (!n) throw FormatError(fmt::format("POI visitor file line {}", reader.record_line()));
    out[row[0]] = *n;
  }
  return out;
}

inline std::vector<ingest::Poi> read_pois(const fs::path& p) {
  auto in = open_in(p);
  return ingest::parse_poi_file(in);
}

inline graph::BipartiteGraph read_graph(const Layout& l) {
  auto nodes = open_in(l.graph_nodes());
  auto edges = open_in(l.graph_edges());
  return graph::read_edge_list(nodes, edges);
}

inline ingest::VisitorParseResult read_visitors(const RunManifest& m) {
  auto in = open_in(m.visitors);
  return ingest::parse_visitor_file(in, {m.coordinate_mode, m.max_bad_row_ratio});
}

/// Stable across runs and platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string input_signature(const fs::path& p) {
  std::error_code ec;
  if (p.empty() || !fs::exists(p, ec)) return "-";
  const auto size = fs::file_size(p, ec);
  const auto time = fs::last_write_time(p, ec).time_since_epoch().count();
  return fmt::format("{}:{}", size, time);
}

/// Fingerprint of everything that can change a stage's outputs.
inline std::string fingerprint(const RunManifest& m) {
  auto fields = manifest_fields(m);
  fields.erase("jobs");
  fields.erase("out_dir");
  std::string text;
  for (const auto& [k, v] : fields) text += k + "=" + v + "\n";
  for (const auto* p : {&m.visitors, &m.pois, &m.road_nodes, &m.road_edges}) text += input_signature(*p) + "\n";
  return fmt::format("{:016x}", fnv1a(text));
}

inline std::string pct2(double share) { return csv::fixed2(100.0 * share); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

struct StageRecord {
  std::string stage;
  double seconds = 0.0;
  json counts = json::object();
  std::vector<std::string> warnings;

  json to_json() const { return {{"stage", stage}, {"seconds", seconds}, {"counts", counts}, {"warnings", warnings}}; }
};

using StageBody = std::function<void(const RunManifest&, const Layout&, StageRecord&)>;

namespace stages {

inline void ingest(const RunManifest& m, const Layout& l, StageRecord& rec) {
  const auto parsed = detail::read_visitors(m);
  const auto pois = detail::read_pois(m.pois);
  const auto window = m.time_window();
  const auto acc = ingest::accumulate_cells(parsed.snapshots, window);

  std::uint64_t in_window = 0, snapshots_in_window = 0, accumulated = 0;
  for (const auto& s : parsed.snapshots) {
    if (window.contains(s.time)) {
      in_window += s.visitors;
      ++snapshots_in_window;
    }
  }
  for (const auto& c : acc.cells) accumulated += c.n_v;
  if (in_window != accumulated) {
    throw ConsistencyError(fmt::format("visitor totals differ: {} in snapshots, {} accumulated", in_window, accumulated));
  }
  if (acc.cells.empty()) throw DomainError("no visitor snapshots fall inside the window");

  // Verification links each POI to the cells within straight-line reach;
  // walking distances are never shorter, so no reachable cell is missed.
  const auto pairs = distance::prefilter_pairs(pois, acc.cells, m.d_max);
  std::vector<ingest::PoiCellLink> links;
  links.reserve(pairs.size());
  for (const auto& p : pairs) links.push_back({p.poi_id, p.cell_id});
  const auto verified = ingest::verify_pois(pois, links, acc.cells);
  std::set<std::string_view> kept;
  for (const auto& p : verified.kept) kept.insert(p.poi_id);
  std::vector<distance::CandidatePair> kept_pairs;
  for (const auto& p : pairs)
    if (kept.count(p.poi_id)) kept_pairs.push_back(p);
  std::map<std::string, std::uint64_t> kept_visitors;
  for (const auto& p : verified.kept) kept_visitors[p.poi_id] = verified.per_poi_visitors.at(p.poi_id);

  detail::write_file(l.cells(), [&](auto& o) { ingest::write_cells(o, acc.cells); });
  detail::write_file(l.verified_pois(), [&](auto& o) { ingest::write_pois(o, verified.kept); });
  detail::write_file(l.dropped_pois(), [&](auto& o) { ingest::write_pois(o, verified.dropped); });
  detail::write_file(l.poi_visitors(), [&](auto& o) { detail::write_poi_visitors(o, kept_visitors); });
  detail::write_file(l.candidate_pairs(), [&](auto& o) { detail::write_candidate_pairs(o, kept_pairs); });
  detail::write_file(l.bad_rows(), [&](auto& o) {
    csv::write_row(o, {"line", "reason"});
    for (const auto& b : parsed.bad_rows) csv::write_row(o, {std::to_string(b.line), b.reason});
  });

  rec.counts = {{"visitor_rows", parsed.data_rows},
                {"bad_rows", parsed.bad_rows.size()},
                {"snapshots", parsed.snapshots.size()},
                {"snapshots_in_window", snapshots_in_window},
                {"visitors_in_window", in_window},
                {"cells", acc.cells.size()},
                {"pois", pois.size()},
                {"verified_pois", verified.kept.size()},
                {"dropped_pois", verified.dropped.size()},
                {"candidate_pairs", kept_pairs.size()}};
  rec.warnings.insert(rec.warnings.end(), parsed.warnings.begin(), parsed.warnings.end());
  rec.warnings.insert(rec.warnings.end(), acc.warnings.begin(), acc.warnings.end());
}

inline std::unique_ptr<distance::WalkProvider> make_provider(const RunManifest& m) {
  switch (m.provider) {
    case ProviderKind::fallback:
      return std::make_unique<distance::FallbackProvider>(m.fallback_factor);
    case ProviderKind::api: {
      distance::RoutingApiConfig cfg;
      cfg.endpoint = m.api_endpoint;
      cfg.requests_per_second = m.api_requests_per_second;
      return std::make_unique<distance::RoutingApiProvider>(std::move(cfg));
    }
    case ProviderKind::roadgraph:
      break;
  }
  auto nodes = detail::open_in(m.road_nodes);
  auto edges = detail::open_in(m.road_edges);
  auto roads = std::make_shared<const distance::RoadGraph>(distance::read_road_graph(nodes, edges));
  return std::make_unique<distance::RoadGraphProvider>(std::move(roads), m.snap_radius_m);
}

inline void distances(const RunManifest& m, const Layout& l, StageRecord& rec) {
  auto in = detail::open_in(l.candidate_pairs());
  const auto pairs = detail::read_candidate_pairs(in);
  auto provider = make_provider(m);
  fs::create_directories(m.cache_path().parent_path());
  distance::DistanceCache cache(m.cache_path().string());
  const auto r = distance::resolve_distances(pairs, *provider, cache, m.d_max, m.worker_count());
  detail::write_file(l.distances(), [&](auto& o) { distance::write_distances(o, r.records); });
  detail::write_file(l.unresolved(), [&](auto& o) {
    csv::write_row(o, {"poi_id", "cell_id", "reason"});
    for (const auto& u : r.unresolved) csv::write_row(o, {u.poi_id, u.cell_id, u.reason});
  });
  rec.counts = {{"pairs", pairs.size()},          {"provider", provider->id()},
                {"provider_calls", r.provider_calls}, {"cache_hits", r.cache_hits},
                {"records", r.records.size()},    {"over_budget", r.over_budget},
                {"unreachable", r.unreachable},   {"unresolved", r.unresolved.size()}};
  if (!r.unresolved.empty()) {
    rec.warnings.push_back(fmt::format("{} pairs unresolved (provider failures); a rerun retries them",
                                       r.unresolved.size()));
  }
}

inline void build(const RunManifest& m, const Layout& l, StageRecord& rec) {
  auto cin = detail::open_in(l.cells());
  const auto cells = ingest::read_cells(cin);
  const auto pois = detail::read_pois(l.verified_pois());
  auto din = detail::open_in(l.distances());
  const auto records = distance::read_distances(din);
  const auto g = graph::build_graph(records, cells, pois, m.d_max);
  if (g.empty()) throw EmptyGraphError("no POI-cell pair lies within walking range");

  double degrees = 0, weights = 0;
  for (std::uint32_t v = 0; v < g.node_count(); ++v) degrees += g.weighted_degree(v);
  for (const auto& e : g.edges()) weights += e.weight;
  if (std::abs(degrees - 2 * weights) > 1e-9 * std::max(1.0, 2 * weights)) {
    throw ConsistencyError(fmt::format("handshake identity fails: {} vs {}", degrees, 2 * weights));
  }
  detail::write_file(l.graph_nodes(), [&](auto& o) { graph::write_node_table(o, g); });
  detail::write_file(l.graph_edges(), [&](auto& o) { graph::write_edge_list(o, g); });
  rec.counts = {{"nodes", g.node_count()},
                {"poi_nodes", g.poi_count()},
                {"cell_nodes", g.node_count() - g.poi_count()},
                {"edges", g.edge_count()},
                {"total_weight", weights}};
}

inline void write_network_report(std::ostream& o, const graph::BipartiteGraph& g, const community::LouvainResult& r,
                                 const community::LeadingFilter& f, double gamma) {
  const auto s = graph::graph_stats(g);
  csv::write_row(o, {"nodes", "poi_nodes", "cell_nodes", "edges", "average_degree", "average_weighted_degree",
                     "modularity", "resolution_gamma", "seed", "communities", "leading_communities"});
  csv::write_row(o, {std::to_string(s.node_count), std::to_string(g.poi_count()),
                     std::to_string(g.node_count() - g.poi_count()), std::to_string(s.edge_count),
                     csv::fixed2(s.average_degree), csv::fixed2(s.average_weighted_degree),
                     fmt::format("{:.4f}", r.modularity), csv::exact(gamma), std::to_string(r.partition.seed),
                     std::to_string(r.partition.community_count()), std::to_string(f.leading.size())});
}

/// Leading communities in label order, then one row folding every residual
/// community together.
inline void write_community_report(std::ostream& o, std::span<const community::CommunityStats> stats) {
  csv::write_row(o, {"community", "nodes", "share_percent", "edges", "internal_modularity", "average_weighted_degree",
                     "pois"});
  std::size_t nodes = 0, edges = 0, pois = 0;
  double share = 0, wd = 0;
  for (const auto& s : stats) {
    if (s.leading) {
      csv::write_row(o, {std::to_string(s.label), std::to_string(s.node_count), detail::pct2(s.share_of_network),
                         std::to_string(s.edge_count), fmt::format("{:.4f}", s.internal_modularity),
                         csv::fixed2(s.average_weighted_degree), std::to_string(s.poi_count)});
    } else {
      nodes += s.node_count;
      edges += s.edge_count;
      pois += s.poi_count;
      share += s.share_of_network;
      wd += s.average_weighted_degree * static_cast<double>(s.node_count);
    }
  }
  csv::write_row(o, {"Not Community", std::to_string(nodes), detail::pct2(share), std::to_string(edges), "",
                     csv::fixed2(nodes ? wd / static_cast<double>(nodes) : 0.0), std::to_string(pois)});
}

inline void detect(const RunManifest& m, const Layout& l, StageRecord& rec) {
  const auto g = detail::read_graph(l);
  const double gamma = m.resolution();
  const auto r = community::louvain(g, gamma, m.seed);
  const auto f = community::filter_leading(r.partition, m.min_nodes, m.min_share);
  const auto stats = community::community_stats(g, r.partition, f);
  detail::write_file(l.partition(), [&](auto& o) { community::write_partition(o, g, r.partition, f); });
  detail::write_file(l.reports() / "network.csv", [&](auto& o) { write_network_report(o, g, r, f, gamma); });
  detail::write_file(l.reports() / "communities.csv", [&](auto& o) { write_community_report(o, stats); });
  rec.counts = {{"gamma", gamma},
                {"modularity", r.modularity},
                {"passes", r.level_modularity.size()},
                {"communities", r.partition.community_count()},
                {"leading_communities", f.leading.size()},
                {"residual_nodes", f.residual.size()}};
  if (f.leading.empty()) rec.warnings.push_back("no community passes the leading filter");
}

/// Everything the report and export stages derive from stage outputs.
struct Analysis {
  graph::BipartiteGraph graph;
  community::ImportedPartition partition;
  analysis::CentralityResult centrality;
  std::vector<analysis::PoiScore> scores;
  std::size_t dropped_pois = 0;
};

inline Analysis load_analysis(const RunManifest& m, const Layout& l) {
  Analysis a;
  a.graph = detail::read_graph(l);
  {
    auto in = detail::open_in(l.partition());
    a.partition = community::read_partition(in, a.graph);
  }
  a.partition.partition.seed = m.seed;
  a.partition.partition.resolution = m.resolution();
  a.centrality = analysis::eigenvector_centrality(a.graph, m.centrality_tol, m.centrality_max_iter);
  const auto verified = detail::read_pois(l.verified_pois());
  auto vin = detail::open_in(l.poi_visitors());
  const auto visitors = detail::read_poi_visitors(vin);
  a.scores = analysis::poi_scores(a.graph, verified, a.partition.partition, a.partition.filter, a.centrality.values,
                                  visitors);
  a.dropped_pois = detail::read_pois(l.dropped_pois()).size();
  return a;
}

inline std::vector<analysis::Slice> report_slices(const RunManifest& m,
                                                  std::span<const ingest::VisitorSnapshot> snapshots) {
  std::vector<analysis::Slice> out;
  if (!m.slices.empty()) {
    for (const auto& s : m.slices) out.push_back(analysis::parse_slice(s));
    return out;
  }
  const auto window = m.time_window();
  std::set<std::chrono::sys_days> days;
  for (const auto& s : snapshots)
    if (window.contains(s.time)) days.insert(s.time.day);
  for (auto d : days) {
    const analysis::Slice slice{d, std::nullopt};
    // partial days at the window edges are left out
    if (window.contains({d, 0}) && window.contains({d, 23})) out.push_back(slice);
  }
  return out;
}

inline void report(const RunManifest& m, const Layout& l, StageRecord& rec) {
  const auto a = load_analysis(m, l);
  const auto& scores = a.scores;
  const auto accounting = analysis::account_pois(scores);
  const auto dir = l.reports();

  detail::write_file(dir / "poi_scores.csv", [&](auto& o) { analysis::write_poi_scores(o, scores); });
  detail::write_file(dir / "poi_accounting.csv", [&](auto& o) {
    csv::write_row(o, {"bucket", "pois"});
    csv::write_row(o, {"leading", std::to_string(accounting.leading)});
    csv::write_row(o, {"residual", std::to_string(accounting.residual)});
    csv::write_row(o, {"no_edge", std::to_string(accounting.no_edge)});
    csv::write_row(o, {"dropped_unverified", std::to_string(a.dropped_pois)});
    csv::write_row(o, {"total", std::to_string(accounting.total + a.dropped_pois)});
  });
  for (auto [name, grouping] : {std::pair{"category_global.csv", analysis::Grouping::global},
                                {"category_communities.csv", analysis::Grouping::community},
                                {"category_excluded.csv", analysis::Grouping::excluded}}) {
    const auto groups = analysis::category_distribution(scores, grouping);
    detail::write_file(dir / name, [&](auto& o) { analysis::write_category_distribution(o, groups); });
  }
  {
    const auto profiles = analysis::community_poi_profiles(scores);
    std::set<std::string> district_set;
    for (const auto& s : scores) district_set.insert(s.district);
    const std::vector<std::string> districts(district_set.begin(), district_set.end());
    detail::write_file(dir / "community_profiles.csv",
                       [&](auto& o) { analysis::write_community_poi_profiles(o, profiles, districts); });
  }
  {
    std::vector<analysis::TopPoiReport> tops;
    for (std::size_t i = 0; i < a.partition.filter.leading.size(); ++i) {
      tops.push_back(analysis::top_poi_report(scores, static_cast<int>(i + 1), m.top_k, m.top_categories));
    }
    detail::write_file(dir / "top_pois.csv", [&](auto& o) { analysis::write_top_poi_reports(o, tops); });
  }
  const auto coverage = analysis::official_attraction_coverage(scores, m.attraction_threshold);
  detail::write_file(dir / "official_attractions.csv",
                     [&](auto& o) { analysis::write_attraction_coverage(o, coverage); });
  const auto exclusion = analysis::excluded_poi_by_district(scores);
  detail::write_file(dir / "excluded_by_district.csv",
                     [&](auto& o) { analysis::write_district_exclusion(o, exclusion); });

  const auto parsed = detail::read_visitors(m);
  const auto slices = report_slices(m, parsed.snapshots);
  const auto temporal = analysis::temporal_slices(parsed.snapshots, m.time_window(), slices);
  detail::write_file(dir / "temporal_slices.csv", [&](auto& o) { analysis::write_temporal_slices(o, temporal); });
  std::vector<analysis::SliceRatio> ratios;
  auto find = [&](const std::string& text) -> const analysis::TemporalSliceStats& {
    const auto label = analysis::parse_slice(text).label();
    for (const auto& t : temporal)
      if (t.label == label) return t;
    throw DomainError("compared slice " + text + " is not among the report slices");
  };
  if (m.compare_slices.empty()) {
    for (std::size_t i = 1; i < temporal.size(); ++i) ratios.push_back(analysis::slice_compare(temporal[i - 1], temporal[i]));
  } else {
    for (const auto& pair : m.compare_slices) {
      const auto colon = pair.find(':');
      if (colon == std::string::npos) throw FormatError("compare_slices entry '" + pair + "' is not A:B");
      ratios.push_back(analysis::slice_compare(find(pair.substr(0, colon)), find(pair.substr(colon + 1))));
    }
  }
  detail::write_file(dir / "slice_compare.csv", [&](auto& o) { analysis::write_slice_ratios(o, ratios); });

  rec.counts = {{"scored_pois", scores.size()},
                {"leading_pois", accounting.leading},
                {"residual_pois", accounting.residual},
                {"no_edge_pois", accounting.no_edge},
                {"dropped_pois", a.dropped_pois},
                {"official_attractions", coverage.total},
                {"centrality_iterations", a.centrality.iterations},
                {"centrality_converged", a.centrality.converged},
                {"slices", temporal.size()}};
  rec.warnings.insert(rec.warnings.end(), a.centrality.warnings.begin(), a.centrality.warnings.end());
}

inline void export_files(const RunManifest& m, const Layout& l, StageRecord& rec) {
  const auto a = load_analysis(m, l);
  const auto labels = community::report_labels(a.partition.partition, a.partition.filter);
  std::vector<int> per_node(a.graph.node_count());
  for (std::uint32_t v = 0; v < a.graph.node_count(); ++v) per_node[v] = labels[a.partition.partition.assignment[v]];
  const auto dir = l.exports();
  detail::write_file(dir / "graph.gexf",
                     [&](auto& o) { graph::write_gexf(o, a.graph, std::span<const int>(per_node)); });
  detail::write_file(dir / "pois.geojson", [&](auto& o) { o << analysis::poi_geojson(a.scores).dump(1) << '\n'; });
  detail::write_file(dir / "cells.geojson", [&](auto& o) {
    o << analysis::cell_geojson(a.graph, a.partition.partition, a.partition.filter).dump(1) << '\n';
  });
  rec.counts = {{"nodes", a.graph.node_count()}, {"edges", a.graph.edge_count()}, {"poi_features", a.scores.size()}};
}

}  // namespace stages

inline StageBody stage_body(const std::string& name) {
  if (name == "ingest") return stages::ingest;
  if (name == "distances") return stages::distances;
  if (name == "build") return stages::build;
  if (name == "detect") return stages::detect;
  if (name == "report") return stages::report;
  if (name == "export") return stages::export_files;
  throw DomainError("unknown stage '" + name + "'");
}

// ---------------------------------------------------------------------------
// Provenance

inline json provenance_json(const RunManifest& m, const Layout& l) {
  json stages_done = json::array();
  for (const auto& s : stage_names()) {
    std::ifstream in(l.record(s));
    if (in) stages_done.push_back(json::parse(in));
  }
  const auto fields = manifest_fields(m);
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"manifest", json(fields)},
          {"seed", m.seed},
          {"resolution_gamma", m.resolution()},
          {"stages", std::move(stages_done)}};
}

inline std::string summary_text(const json& provenance) {
  std::ostringstream o;
  o << kToolName << ' ' << kToolVersion << " run summary\n";
  o << "seed " << provenance["seed"].get<std::uint64_t>() << ", gamma "
    << csv::exact(provenance["resolution_gamma"].get<double>()) << "\n";
  for (const auto& s : provenance["stages"]) {
    o << "\n[" << s["stage"].get<std::string>() << "]\n";
    for (const auto& [k, v] : s["counts"].items()) o << "  " << k << ": " << v.dump() << "\n";
    for (const auto& w : s["warnings"]) o << "  warning: " << w.get<std::string>() << "\n";
  }
  return o.str();
}

inline void write_provenance(const RunManifest& m, const Layout& l) {
  const auto p = provenance_json(m, l);
  detail::write_file(l.provenance(), [&](auto& o) { o << p.dump(2) << '\n'; });
  detail::write_file(l.summary(), [&](auto& o) { o << summary_text(p); });
}

/// Rebuilds the manifest a run recorded. Paths in provenance are absolute.
inline RunManifest manifest_from_provenance(const fs::path& path) {
  auto in = detail::open_in(path);
  const auto p = json::parse(in);
  if (!p.contains("manifest") || !p["manifest"].is_object()) {
    throw FormatError("provenance file has no manifest: " + path.string());
  }
  RunManifest m;
  for (const auto& [k, v] : p["manifest"].items()) {
    set_field(m, k, v.get<std::string>(), fs::absolute(path).parent_path());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  /// Skip stages whose completion stamp matches the current manifest.
  bool resume = false;
};

/// Runs one stage: a .partial marker exists while it runs and stays behind
/// (with the error) if it fails; success leaves a .done stamp.
inline StageRecord run_stage(const RunManifest& m, const std::string& name) {
  m.validate();
  const auto body = stage_body(name);
  const Layout l{m.out_dir};
  fs::create_directories(l.stages());
  fs::remove(l.done(name));
  detail::write_file(l.partial(name), [](auto&) {});
  StageRecord rec{name};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(m, l, rec);
  } catch (const std::exception& e) {
    std::ofstream(l.partial(name), std::ios::app) << e.what() << '\n';
    throw StageError(name, e.what());
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_file(l.record(name), [&](auto& o) { o << rec.to_json().dump(2) << '\n'; });
  detail::write_file(l.done(name), [&](auto& o) { o << detail::fingerprint(m) << '\n'; });
  fs::remove(l.partial(name));
  write_provenance(m, l);
  return rec;
}

inline bool stage_current(const RunManifest& m, const std::string& name) {
  std::ifstream in(Layout{m.out_dir}.done(name));
  std::string stamp;
  return in && std::getline(in, stamp) && stamp == detail::fingerprint(m);
}

struct RunResult {
  std::vector<StageRecord> ran;
  std::vector<std::string> skipped;
  json provenance;
};

inline RunResult run_pipeline(const RunManifest& m, const RunOptions& opt = {}) {
  m.validate();
  RunResult out;
  bool upstream_ran = false;
  for (const auto& name : stage_names()) {
    if (opt.resume && !upstream_ran && stage_current(m, name)) {
      out.skipped.push_back(name);
      continue;
    }
    out.ran.push_back(run_stage(m, name));
    upstream_ran = true;
  }
  const Layout l{m.out_dir};
  write_provenance(m, l);
  out.provenance = provenance_json(m, l);
  return out;
}

inline std::string window_dir_name(const std::string& window) {
  std::string s = "window_" + window;
  std::replace(s.begin(), s.end(), '.', '_');
  return s;
}

/// Runs the pipeline once per window (into <out_dir>/<window_...>) and writes
/// a joint report: per-window visitor statistics, their ratio (second over
/// first) and the per-window network summary.
inline void run_compare(const RunManifest& base, const std::string& window_a, const std::string& window_b,
                        const RunOptions& opt = {}) {
  base.validate();
  std::vector<analysis::TemporalSliceStats> stats;
  json networks = json::array();
  const auto parsed = detail::read_visitors(base);
  for (const auto& w : {window_a, window_b}) {
    RunManifest m = base;
    m.window = w;
    m.out_dir = base.out_dir / window_dir_name(w);
    if (base.cache.empty()) m.cache = base.cache_path();
    run_pipeline(m, opt);
    stats.push_back(analysis::window_stats(parsed.snapshots, m.time_window(), w));
  }
  const Layout l{base.out_dir};
  detail::write_file(l.root / "compare" / "window_stats.csv",
                     [&](auto& o) { analysis::write_temporal_slices(o, stats); });
  const std::vector<analysis::SliceRatio> ratio{analysis::slice_compare(stats[0], stats[1])};
  detail::write_file(l.root / "compare" / "window_ratio.csv", [&](auto& o) { analysis::write_slice_ratios(o, ratio); });
  detail::write_file(l.root / "compare" / "window_networks.csv", [&](auto& o) {
    bool header = true;
    for (const auto& w : {window_a, window_b}) {
      auto in = detail::open_in(Layout{base.out_dir / window_dir_name(w)}.reports() / "network.csv");
      csv::Reader reader(in);
      csv::Row row;
      while (reader.next(row)) {
        const bool is_header = reader.record_line() == 1;
        if (is_header && !header) continue;
        row.insert(row.begin(), is_header ? std::string("window") : w);
        csv::write_row(o, row);
      }
      header = false;
    }
  });
}

/// Report files compared by the determinism contract, relative to out_dir.
inline std::vector<fs::path> deterministic_outputs(const RunManifest& m) {
  const Layout l{m.out_dir};
  std::vector<fs::path> out{l.partition().lexically_relative(l.root)};
  for (const auto& dir : {l.reports(), l.exports()}) {
    if (!fs::exists(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().lexically_relative(l.root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace walkability::pipeline
