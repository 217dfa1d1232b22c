// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Every tolerance and runtime limit is fixed below.

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "support/oracles.hpp"
#include "walkability/analysis.hpp"
#include "walkability/community.hpp"
#include "walkability/distance.hpp"
#include "walkability/graph.hpp"
#include "walkability/pipeline.hpp"
#include "walkability/synth.hpp"

namespace fs = std::filesystem;
using namespace walkability;

namespace {

// Pinned tolerances.
constexpr double kModularityTol = 1e-12;
constexpr double kLouvainRatio = 0.95;
constexpr double kReportedQTol = 1e-9;
constexpr double kMinAri = 0.9;
constexpr int kAriSeeds = 10;
constexpr int kAriSeedsRequired = 9;
constexpr double kPathRelTol = 1e-6;
constexpr double kCentralityTol = 1e-6;
constexpr double kHandshakeRelTol = 1e-9;

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (failures.size() < 5) failures.push_back(what);
    }
  }
};

using Check = std::function<Outcome()>;

struct Criterion {
  int number;
  std::string name;
  double limit_s;
  Check run;
};

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("walkability_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

Outcome edge_weight_exactness() {
  Outcome o;
  const double w = graph::edge_weight(10, 200, 1000);
  o.check(w == 8.0, fmt::format("edge_weight(10, 200, 1000) = {} (want exactly 8)", w));
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::uint64_t> nv(0, 1'000'000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kSamples = 10'000;
  for (int i = 0; i < kSamples; ++i) {
    const double d_max = 1.0 + 4999.0 * unit(rng);
    const auto n = nv(rng);
    const double d = d_max * unit(rng);
    const double x = graph::edge_weight(n, d, d_max);
    o.check(x >= 0 && x <= static_cast<double>(n), fmt::format("bounds: W({}, {}, {}) = {}", n, d, d_max, x));
    if (n >= 1 && d < d_max) {
      // farther is strictly lighter, more visitors strictly heavier
      const double d2 = d + (d_max - d) * (0.001 + 0.999 * unit(rng));
      o.check(graph::edge_weight(n, d2, d_max) < x, fmt::format("monotone in d at n_v={} d={} d2={}", n, d, d2));
      o.check(graph::edge_weight(n + 1, d, d_max) > x, fmt::format("monotone in n_v at n_v={} d={}", n, d));
    }
  }
  o.detail = fmt::format("W(10,200,1000) = {}; {} random inputs within bounds and strictly monotone", w, kSamples);
  return o;
}

Outcome modularity_oracle() {
  Outcome o;
  std::mt19937_64 rng(202);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 8)(rng);
    auto edges = oracle::random_graph(rng, n, 0.6);
    if (edges.empty()) edges.push_back({0, 1, 1.0});
    std::vector<community::WeightedGraph::EdgeSpec> edge_list;
    for (const auto& e : edges) edge_list.push_back({static_cast<std::uint32_t>(e.a), static_cast<std::uint32_t>(e.b), e.w});
    const community::WeightedGraph g(static_cast<std::uint32_t>(n), edge_list);
    const auto A = oracle::adjacency(n, edges);
    std::vector<int> c(n);
    std::uniform_int_distribution<int> label(0, n - 1);
    for (auto& x : c) x = label(rng);
    const auto dense = community::renumber(c);
    const double got = community::modularity(g, dense, 1.0);
    const double want = oracle::modularity_double_sum(A, dense, 1.0);
    worst = std::max(worst, std::abs(got - want));
    o.check(std::abs(got - want) <= kModularityTol, fmt::format("graph {}: {} vs oracle {}", t, got, want));
    const std::vector<int> one(n, 0);
    const double q1 = community::modularity(g, one, 1.0);
    o.check(std::abs(q1) <= kModularityTol, fmt::format("graph {}: one-community Q = {}", t, q1));
  }
  o.detail = fmt::format("50 graphs (n <= 8), max |Q - oracle| = {:.2e} <= {:.0e}; one-community Q = 0", worst,
                         kModularityTol);
  return o;
}

Outcome louvain_quality() {
  Outcome o;
  std::mt19937_64 rng(303);
  double worst_ratio = std::numeric_limits<double>::infinity();
  double worst_gap = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = std::uniform_int_distribution<int>(4, 10)(rng);
    auto edges = oracle::random_graph(rng, n, 0.45);
    if (edges.empty()) edges.push_back({0, 1, 1.0});
    std::vector<community::WeightedGraph::EdgeSpec> edge_list;
    for (const auto& e : edges) edge_list.push_back({static_cast<std::uint32_t>(e.a), static_cast<std::uint32_t>(e.b), e.w});
    const community::WeightedGraph g(static_cast<std::uint32_t>(n), edge_list);
    const double best = oracle::exhaustive_max_modularity(oracle::adjacency(n, edges));
    const auto r = community::louvain(g, 1.0, static_cast<std::uint64_t>(t));
    const double recomputed = community::modularity(g, r.partition.assignment, 1.0);
    const double gap = std::abs(recomputed - r.modularity) / std::max(1e-300, std::abs(recomputed));
    worst_gap = std::max(worst_gap, std::abs(recomputed) > 0 ? gap : std::abs(r.modularity));
    o.check(std::abs(recomputed - r.modularity) <= kReportedQTol * std::max(1.0, std::abs(recomputed)),
            fmt::format("graph {}: reported {} vs recomputed {}", t, r.modularity, recomputed));
    // Some random graphs have no partition better than a single community.
    o.check(r.modularity >= -kReportedQTol, fmt::format("graph {}: negative Q {}", t, r.modularity));
    if (best > kReportedQTol) {
      worst_ratio = std::min(worst_ratio, r.modularity / best);
      o.check(r.modularity >= kLouvainRatio * best,
              fmt::format("graph {} (n={}): Q = {:.6f} < {} x max {:.6f}", t, n, r.modularity, kLouvainRatio, best));
    }
  }
  o.detail = fmt::format("20 graphs (n <= 10), min Q / exhaustive max = {:.4f} >= {}; reported-vs-recomputed gap "
                         "{:.1e} <= {:.0e}",
                         worst_ratio, kLouvainRatio, worst_gap, kReportedQTol);
  return o;
}

// Runs the whole pipeline on a generated city and scores the partition
// against the planted districts.
struct PlantedRun {
  double ari = 0;
  std::size_t leading = 0;
  std::size_t districts = 0;
  bool leading_match = false;
  double min_purity = 0;
};

PlantedRun planted_run(const synth::CityPlan& plan, const std::string& tag, std::size_t min_nodes) {
  const auto dir = scratch("planted_" + tag);
  const auto city = synth::generate_city(plan);
  const auto files = synth::write_city(city, dir / "city");
  pipeline::RunManifest m;
  m.visitors = files.visitors;
  m.pois = files.pois;
  m.road_nodes = files.road_nodes;
  m.road_edges = files.road_edges;
  m.out_dir = dir / "run";
  m.gephi_resolution = 1.0;  // gamma = 1 through the shim
  m.seed = plan.seed;
  m.jobs = workers();
  m.min_nodes = min_nodes;
  pipeline::run_stage(m, "ingest");
  pipeline::run_stage(m, "distances");
  pipeline::run_stage(m, "build");
  pipeline::run_stage(m, "detect");

  std::map<std::string, std::string> truth;
  for (const auto& t : city.truth) truth[t.kind + ":" + t.id] = t.district;
  std::map<std::string, int> district_ids;
  std::vector<int> want, got;
  std::map<int, std::map<std::string, std::size_t>> leading_members;
  std::ifstream in(pipeline::Layout{m.out_dir}.partition());
  csv::Reader reader(in);
  csv::Row row;
  reader.next(row);
  while (reader.next(row)) {
    const auto& d = truth.at(row[1] + ":" + row[0]);
    want.push_back(district_ids.try_emplace(d, static_cast<int>(district_ids.size())).first->second);
    got.push_back(std::stoi(row[2]));
    if (row[3] == "true") ++leading_members[got.back()][d];
  }
  PlantedRun r;
  r.ari = oracle::adjusted_rand_index(want, got);
  r.leading = leading_members.size();
  r.districts = plan.districts.size();
  std::set<std::string> matched;
  r.min_purity = 1.0;
  for (const auto& [label, by_district] : leading_members) {
    std::size_t total = 0, top = 0;
    std::string top_district;
    for (const auto& [d, n] : by_district) {
      total += n;
      if (n > top) {
        top = n;
        top_district = d;
      }
    }
    matched.insert(top_district);
    r.min_purity = std::min(r.min_purity, static_cast<double>(top) / static_cast<double>(total));
  }
  r.leading_match = r.leading == r.districts && matched.size() == r.districts;
  fs::remove_all(dir);
  return r;
}

Outcome planted_recovery() {
  Outcome o;
  int good = 0;
  std::string aris;
  for (int seed = 1; seed <= kAriSeeds; ++seed) {
    const auto r = planted_run(synth::make_plan(4, 50, 100, 80, 0.1, static_cast<std::uint64_t>(seed)),
                               std::to_string(seed), community::kDefaultMinNodes);
    if (r.ari >= kMinAri) ++good;
    aris += fmt::format("{}{:.3f}", aris.empty() ? "" : " ", r.ari);
  }
  o.check(good >= kAriSeedsRequired, fmt::format("only {} of {} seeds reach ARI {}", good, kAriSeeds, kMinAri));
  const auto d = planted_run(synth::default_plan(1), "default", community::kDefaultMinNodes);
  o.check(d.leading_match, fmt::format("default plan: {} leading communities for {} districts", d.leading, d.districts));
  o.detail = fmt::format("ARI >= {} on {}/{} seeds [{}]; default plan: {} leading communities = {} districts "
                         "(min purity {:.3f})",
                         kMinAri, good, kAriSeeds, aris, d.leading, d.districts, d.min_purity);
  return o;
}

Outcome prefilter_soundness() {
  Outcome o;
  auto plan = synth::make_plan(4, 50, 100, 200, 0.1, 505);
  const auto city = synth::generate_city(plan);
  const auto cells = ingest::accumulate_cells(city.snapshots, TimeWindow::everything()).cells;
  o.check(city.pois.size() == 200, "expected 200 POIs");
  o.check(cells.size() == 5000, fmt::format("expected 5000 cells, got {}", cells.size()));

  const auto pairs = distance::prefilter_pairs(city.pois, cells, 1000.0);
  std::set<std::pair<std::string, std::string>> fast, brute;
  for (const auto& p : pairs) fast.emplace(p.poi_id, p.cell_id);
  std::vector<distance::CandidatePair> everything;
  everything.reserve(city.pois.size() * cells.size());
  for (const auto& p : city.pois) {
    for (const auto& c : cells) {
      const double d = geo::haversine_m(p.location, c.location);
      if (d <= 1000.0) brute.emplace(p.poi_id, c.cell_id);
      everything.push_back({p.poi_id, c.cell_id, d, p.location, c.location});
    }
  }
  o.check(fast == brute, fmt::format("prefilter {} pairs vs brute force {}", fast.size(), brute.size()));

  const auto roads = std::make_shared<const distance::RoadGraph>(city.roads);
  distance::RoadGraphProvider provider(roads);
  distance::DistanceCache c1, c2;
  const auto with = distance::resolve_distances(pairs, provider, c1, 1000.0, workers());
  const auto without = distance::resolve_distances(everything, provider, c2, 1000.0, workers());
  std::set<std::pair<std::string, std::string>> kept, oracle_kept;
  for (const auto& r : with.records) kept.emplace(r.poi_id, r.cell_id);
  for (const auto& r : without.records) oracle_kept.emplace(r.poi_id, r.cell_id);
  std::size_t missing = 0;
  for (const auto& k : oracle_kept) missing += kept.count(k) == 0;
  o.check(missing == 0, fmt::format("{} walkable pairs missing after prefiltering", missing));
  o.check(kept == oracle_kept, "prefiltered run keeps pairs the oracle run rejects");
  o.detail = fmt::format("200 POIs x {} cells: {} pairs equal brute force; {} walkable pairs, {} missing vs "
                         "{}-pair no-prefilter run",
                         cells.size(), fast.size(), oracle_kept.size(), missing, everything.size());
  return o;
}

class CountingProvider final : public distance::WalkProvider {
 public:
  explicit CountingProvider(distance::WalkProvider& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }
  distance::WalkOutcome walk(const distance::CandidatePair& p) override {
    ++calls;
    return inner_.walk(p);
  }
  std::atomic<std::size_t> calls{0};

 private:
  distance::WalkProvider& inner_;
};

Outcome distance_oracle() {
  Outcome o;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> off(0.0, 0.02), stretch(1.0, 1.5);
  constexpr int n = 20;
  std::vector<std::string> ids;
  std::vector<geo::Wgs84Point> points;
  for (int i = 0; i < n; ++i) {
    ids.push_back("r" + std::to_string(i));
    points.push_back({36.35 + off(rng), 127.38 + off(rng)});
  }
  std::vector<distance::RoadGraph::Edge> edges;
  std::vector<oracle::Edge> plain;
  auto link = [&](int a, int b) {
    const double len = geo::haversine_m(points[a], points[b]) * stretch(rng);
    edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), len});
    plain.push_back({a, b, len});
  };
  for (int i = 1; i < n; ++i) link(i, std::uniform_int_distribution<int>(0, i - 1)(rng));
  std::bernoulli_distribution extra(0.15);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (extra(rng)) link(i, j);
  const auto fw = oracle::floyd_warshall(n, plain);
  const auto roads = std::make_shared<const distance::RoadGraph>(ids, points, edges);
  distance::RoadGraphProvider provider(roads);

  std::vector<distance::CandidatePair> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) pairs.push_back({ids[i], ids[j], geo::haversine_m(points[i], points[j]), points[i], points[j]});
  double worst = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const int i = static_cast<int>(k) / (n - 1);
    const int j = static_cast<int>(std::find(ids.begin(), ids.end(), pairs[k].cell_id) - ids.begin());
    const auto r = provider.walk(pairs[k]);
    o.check(r.status == distance::WalkOutcome::Status::ok, "unreachable pair " + pairs[k].poi_id + "-" + pairs[k].cell_id);
    const double rel = std::abs(r.meters - fw[i][j]) / fw[i][j];
    worst = std::max(worst, rel);
    o.check(rel <= kPathRelTol, fmt::format("{}-{}: {} vs Floyd-Warshall {}", ids[i], ids[j], r.meters, fw[i][j]));
  }

  const auto dir = scratch("distance_cache");
  const auto cache_file = (dir / "cache.csv").string();
  std::size_t first_calls = 0, second_calls = 0, second_hits = 0;
  {
    CountingProvider counting(provider);
    distance::DistanceCache cache(cache_file);
    distance::resolve_distances(pairs, counting, cache, 1e9, 4);
    first_calls = counting.calls;
  }
  {
    CountingProvider counting(provider);
    distance::DistanceCache cache(cache_file);
    const auto r = distance::resolve_distances(pairs, counting, cache, 1e9, 4);
    second_calls = counting.calls;
    second_hits = r.cache_hits;
    o.check(r.provider_calls == 0, "resolver reports provider calls on the cached rerun");
  }
  o.check(first_calls == pairs.size(), fmt::format("first run made {} calls for {} pairs", first_calls, pairs.size()));
  o.check(second_calls == 0, fmt::format("cached rerun made {} provider calls", second_calls));
  fs::remove_all(dir);
  o.detail = fmt::format("{} node pairs, max relative error {:.1e} <= {:.0e}; cached rerun: {} provider calls, {} hits",
                         pairs.size(), worst, kPathRelTol, second_calls, second_hits);
  return o;
}

Outcome centrality_oracle() {
  Outcome o;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> w(0.5, 50.0);
  std::bernoulli_distribution keep(0.35);
  double worst = 0;
  constexpr int kGraphs = 10;
  for (int t = 0; t < kGraphs; ++t) {
    constexpr int pois = 8, cells = 12;
    std::vector<graph::NodeInfo> p, c;
    for (int i = 0; i < pois; ++i) p.push_back({graph::NodeClass::poi, "p" + std::to_string(i)});
    for (int i = 0; i < cells; ++i) c.push_back({graph::NodeClass::cell, "c" + std::to_string(i)});
    std::vector<graph::BipartiteGraph::Edge> edges;
    std::set<std::pair<int, int>> used;
    for (int j = 0; j < cells; ++j) {
      // every cell touches POI j % 8 and POI (j + 1) % 8: connected
      for (int a : {j % pois, (j + 1) % pois})
        if (used.emplace(a, j).second) edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(j), w(rng)});
    }
    for (int a = 0; a < pois; ++a)
      for (int j = 0; j < cells; ++j)
        if (keep(rng) && used.emplace(a, j).second)
          edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(j), w(rng)});
    const graph::BipartiteGraph g(p, c, edges);
    const int n = static_cast<int>(g.node_count());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : g.edges()) A(e.poi, e.cell) = A(e.cell, e.poi) = e.weight;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
    Eigen::VectorXd want = solver.eigenvectors().col(n - 1).cwiseAbs();
    want /= want.maxCoeff();

    const auto r = analysis::eigenvector_centrality(g, 1e-12, 100000);
    o.check(r.converged, fmt::format("graph {}: power iteration did not converge", t));
    int ones = 0, oracle_ties = 0;
    for (int v = 0; v < n; ++v) {
      const double diff = std::abs(r.values[v] - want(v));
      worst = std::max(worst, diff);
      o.check(diff <= kCentralityTol, fmt::format("graph {} node {}: {} vs {}", t, v, r.values[v], want(v)));
      ones += r.values[v] == 1.0;
      oracle_ties += want(v) >= 1.0 - 1e-9;
    }
    o.check(ones == 1 || (ones == oracle_ties && ones > 1),
            fmt::format("graph {}: {} nodes at 1.0 (oracle ties {})", t, ones, oracle_ties));
  }
  o.detail = fmt::format("{} random 20-node graphs, max |c - oracle| = {:.1e} <= {:.0e}; exactly one node at 1.0",
                         kGraphs, worst, kCentralityTol);
  return o;
}

std::vector<ingest::VisitorSnapshot> slice_fixture(std::chrono::sys_days day, std::size_t cells, std::uint64_t sum,
                                                   std::uint64_t max) {
  std::vector<ingest::VisitorSnapshot> out;
  out.push_back({"X000000", Timestamp{day, 12}, max, {36.35, 127.38}});
  const std::size_t rest = cells - 1;
  const std::uint64_t remaining = sum - max;
  const std::uint64_t base = remaining / rest, extra = remaining % rest;
  for (std::size_t i = 0; i < rest; ++i) {
    out.push_back({fmt::format("X{:06}", i + 1), Timestamp{day, 12}, base + (i < extra ? 1 : 0), {36.35, 127.38}});
  }
  return out;
}

Outcome temporal_arithmetic() {
  Outcome o;
  const auto a_day = parse_date("20211103"), b_day = parse_date("20211106");
  auto snaps = slice_fixture(a_day, 91'404, 7'631'404, 6'154);
  const auto b = slice_fixture(b_day, 95'000, 8'746'376, 10'610);
  snaps.insert(snaps.end(), b.begin(), b.end());
  const std::vector<analysis::Slice> slices{{a_day, std::nullopt}, {b_day, std::nullopt}};
  const auto stats = analysis::temporal_slices(snaps, TimeWindow::everything(), slices);
  std::ostringstream table, ratios;
  analysis::write_temporal_slices(table, stats);
  const std::vector<analysis::SliceRatio> r{analysis::slice_compare(stats[0], stats[1])};
  analysis::write_slice_ratios(ratios, r);
  o.check(stats[0].cell_count == 91'404 && stats[0].visitor_sum == 7'631'404, "fixture totals");
  o.check(table.str().find("20211103-all,91404,7631404,83.49,6154") != std::string::npos,
          "slice row does not show mean 83.49:\n" + table.str());
  const std::string want_ratio = "20211103-all,20211106-all,1.15,";
  const auto line = ratios.str().substr(ratios.str().find('\n') + 1);
  o.check(line.rfind(want_ratio, 0) == 0, "sum ratio is not 1.15: " + line);
  std::vector<std::string> fields;
  std::stringstream ls(line);
  for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
  o.check(fields.size() == 6 && fields[4] == "1.72", "max ratio is not 1.72: " + line);
  o.detail = fmt::format("mean {} over {} cells; sum ratio {}, max ratio {}", csv::fixed2(stats[0].visitor_mean),
                         stats[0].cell_count, fields.size() > 2 ? fields[2] : "?", fields.size() > 4 ? fields[4] : "?");
  return o;
}

// Shared by criteria 9 and 10.
pipeline::RunManifest determinism_manifest(const fs::path& dir) {
  auto plan = synth::make_plan(4, 50, 100, 80, 0.1, 909);
  plan.isolated_pois = 3;
  const auto files = synth::write_city(synth::generate_city(plan), dir / "city");
  pipeline::RunManifest m;
  m.visitors = files.visitors;
  m.pois = files.pois;
  m.road_nodes = files.road_nodes;
  m.road_edges = files.road_edges;
  m.out_dir = dir / "run";
  m.seed = 909;
  m.jobs = workers();
  m.min_nodes = 500;
  return m;
}

Outcome pipeline_determinism() {
  Outcome o;
  const auto dir = scratch("determinism");
  const auto m = determinism_manifest(dir);
  pipeline::run_pipeline(m);
  std::map<fs::path, std::string> first;
  for (const auto& f : pipeline::deterministic_outputs(m)) first[f] = slurp(m.out_dir / f);
  fs::remove_all(m.out_dir);
  pipeline::run_pipeline(m);
  const auto files = pipeline::deterministic_outputs(m);
  o.check(files.size() == first.size(), "different set of output files");
  std::size_t same = 0, bytes = 0;
  for (const auto& f : files) {
    const auto now = slurp(m.out_dir / f);
    const bool eq = first.count(f) && first.at(f) == now;
    same += eq;
    bytes += now.size();
    o.check(eq, f.string() + " differs between runs");
  }
  o.detail = fmt::format("{}/{} report, partition and export files byte-identical ({} bytes)", same, files.size(), bytes);
  return o;
}

Outcome conservation() {
  Outcome o;
  const auto dir = scratch("conservation");
  const auto m = determinism_manifest(dir);
  pipeline::run_pipeline(m);
  const pipeline::Layout l{m.out_dir};

  // Snapshot to accumulation.
  std::ifstream vin(m.visitors);
  std::uint64_t raw = 0;
  for (const auto& s : ingest::parse_visitor_file(vin).snapshots) raw += s.visitors;
  std::ifstream cin(l.cells());
  std::uint64_t accumulated = 0;
  for (const auto& c : ingest::read_cells(cin)) accumulated += c.n_v;
  o.check(raw == accumulated, fmt::format("visitors: {} in snapshots vs {} accumulated", raw, accumulated));

  // Handshake identity on the built graph.
  std::ifstream nodes(l.graph_nodes()), edges(l.graph_edges());
  const auto g = graph::read_edge_list(nodes, edges);
  double degrees = 0, weights = 0;
  for (std::uint32_t v = 0; v < g.node_count(); ++v) degrees += g.weighted_degree(v);
  for (const auto& e : g.edges()) weights += e.weight;
  const double rel = std::abs(degrees - 2 * weights) / (2 * weights);
  o.check(rel <= kHandshakeRelTol, fmt::format("handshake relative gap {:.2e}", rel));

  // Every ingested POI in exactly one bucket.
  std::ifstream pin(m.pois);
  const auto pois = ingest::parse_poi_file(pin);
  std::map<std::string, int> seen;
  std::map<std::string, std::size_t> per_bucket;
  {
    std::ifstream in(l.reports() / "poi_scores.csv");
    csv::Reader r(in);
    csv::Row row;
    r.next(row);
    const csv::Header h(row);
    const auto c_id = h.require("poi_id", "scores"), c_status = h.require("status", "scores");
    while (r.next(row)) {
      ++seen[row[c_id]];
      ++per_bucket[row[c_status]];
    }
  }
  {
    std::ifstream in(l.dropped_pois());
    for (const auto& p : ingest::parse_poi_file(in)) {
      ++seen[p.poi_id];
      ++per_bucket["dropped_unverified"];
    }
  }
  std::size_t exactly_once = 0;
  for (const auto& p : pois) exactly_once += seen[p.poi_id] == 1;
  o.check(exactly_once == pois.size(), fmt::format("{} of {} POIs in exactly one bucket", exactly_once, pois.size()));
  o.check(seen.size() == pois.size(), "reports mention POIs that were never ingested");
  std::map<std::string, std::size_t> reported;
  {
    std::ifstream in(l.reports() / "poi_accounting.csv");
    csv::Reader r(in);
    csv::Row row;
    r.next(row);
    while (r.next(row)) reported[row[0]] = std::stoul(row[1]);
  }
  for (const auto& [bucket, n] : per_bucket) {
    o.check(reported[bucket] == n, fmt::format("bucket {}: accounting says {}, files say {}", bucket, reported[bucket], n));
  }
  o.check(reported["total"] == pois.size(), "accounting total differs from ingested POI count");
  std::string buckets;
  for (const auto& [b, n] : per_bucket) buckets += fmt::format("{}{}={}", buckets.empty() ? "" : ", ", b, n);
  o.detail = fmt::format("visitors {} = {}; handshake gap {:.1e} <= {:.0e}; {} POIs: {}", raw, accumulated, rel,
                         kHandshakeRelTol, pois.size(), buckets);
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "edge weight exactness", 1.0, edge_weight_exactness},
      {2, "modularity oracle", 10.0, modularity_oracle},
      {3, "Louvain quality", 120.0, louvain_quality},
      {4, "planted-partition recovery", 300.0, planted_recovery},
      {5, "prefilter soundness", 60.0, prefilter_soundness},
      {6, "distance oracle and cache", 0.0, distance_oracle},
      {7, "centrality oracle", 0.0, centrality_oracle},
      {8, "temporal arithmetic", 0.0, temporal_arithmetic},
      {9, "pipeline determinism", 0.0, pipeline_determinism},
      {10, "conservation suite", 0.0, conservation},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      o.pass = false;
      o.failures.push_back(fmt::format("runtime {:.2f} s exceeds {} s", secs, c.limit_s));
    }
    const auto limit = c.limit_s > 0 ? fmt::format(" < {} s", c.limit_s) : std::string();
    std::cout << fmt::format("criterion {:>2}: {} {} ({:.2f} s{}) {}\n", c.number, o.pass ? "PASS" : "FAIL", c.name,
                             secs, limit, o.detail);
    for (const auto& f : o.failures) std::cout << "              - " << f << '\n';
    std::cout.flush();
    failed += !o.pass;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
