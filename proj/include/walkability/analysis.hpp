#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "walkability/community.hpp"
#include "walkability/csv.hpp"
#include "walkability/errors.hpp"
#include "walkability/graph.hpp"
#include "walkability/ingest.hpp"
#include "walkability/timestamp.hpp"

namespace walkability::analysis {

// ---------------------------------------------------------------------------
// Eigenvector centrality

struct CentralityResult {
  /// Indexed by graph node; the global maximum is exactly 1.
  std::vector<double> values;
  bool converged = true;
  /// Largest final max-norm step over all components.
  double residual = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Connected components; returns a component id per node, numbered in
/// order of their smallest node.
inline std::vector<int> connected_components(const graph::BipartiteGraph& g) {
  std::vector<int> comp(g.node_count(), -1);
  int next = 0;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s = 0; s < g.node_count(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& a : g.neighbors(v)) {
        if (comp[a.to] < 0) {
          comp[a.to] = next;
          stack.push_back(a.to);
        }
      }
    }
    ++next;
  }
  return comp;
}

/// Power iteration on the weighted adjacency, one connected component at a
/// time. The graph is bipartite, so A = [0 B; B^T 0] has a spectrum
/// symmetric about 0 and plain iteration on A oscillates. Instead the POI
/// half iterates on B B^T (dominant eigenvalue lambda^2, convergence rate
/// (lambda_2 / lambda_1)^2 per step) and the cell half is recovered as
/// B^T u / lambda, which is exactly the dominant eigenvector of A.
///
/// Each component vector is max-normalized and then scaled by
/// lambda_c / lambda_max, so the component with the dominant eigenvalue holds
/// the global 1.0 and weaker components sit proportionally lower.
inline CentralityResult eigenvector_centrality(const graph::BipartiteGraph& g, double tol = 1e-8,
                                               int max_iter = 5000) {
  if (g.empty()) throw EmptyGraphError("eigenvector centrality of an empty graph");
  if (!(tol > 0) || max_iter < 1) throw DomainError("tolerance and iteration cap must be positive");
  CentralityResult out;
  out.values.assign(g.node_count(), 0.0);
  const auto comp = connected_components(g);
  const int k = *std::max_element(comp.begin(), comp.end()) + 1;
  std::vector<std::vector<std::uint32_t>> pois(k), cells(k);
  for (std::uint32_t v = 0; v < g.node_count(); ++v) (g.is_poi(v) ? pois : cells)[comp[v]].push_back(v);

  std::vector<double> lambda(k, 0.0);
  std::vector<double> x(g.node_count(), 0.0);
  auto spread = [&](std::span<const std::uint32_t> nodes) {
    for (auto v : nodes) {
      double s = 0;
      for (const auto& a : g.neighbors(v)) s += a.weight * x[a.to];
      x[v] = s;
    }
  };
  std::vector<double> previous;
  for (int c = 0; c < k; ++c) {
    if (pois[c].empty() || cells[c].empty()) continue;  // isolated node
    for (auto v : pois[c]) x[v] = 1.0;
    double step = 0, lambda_sq = 0;
    int iter = 0;
    bool done = false;
    for (; iter < max_iter && !done; ++iter) {
      previous.clear();
      for (auto v : pois[c]) previous.push_back(x[v]);
      spread(cells[c]);
      spread(pois[c]);
      double num = 0, den = 0, peak = 0;
      for (std::size_t i = 0; i < pois[c].size(); ++i) {
        const auto v = pois[c][i];
        num += previous[i] * x[v];
        den += previous[i] * previous[i];
        peak = std::max(peak, x[v]);
      }
      lambda_sq = num / den;
      if (peak <= 0) break;  // all-zero weights
      step = 0;
      for (std::size_t i = 0; i < pois[c].size(); ++i) {
        const auto v = pois[c][i];
        x[v] /= peak;
        step = std::max(step, std::abs(x[v] - previous[i]));
      }
      done = step < tol;
    }
    lambda[c] = std::sqrt(std::max(0.0, lambda_sq));
    spread(cells[c]);
    double peak = 0;
    for (auto v : cells[c]) {
      x[v] = lambda[c] > 0 ? x[v] / lambda[c] : 0.0;
      peak = std::max(peak, x[v]);
    }
    for (auto v : pois[c]) peak = std::max(peak, x[v]);
    if (peak > 0) {
      for (auto* side : {&pois[c], &cells[c]})
        for (auto v : *side) x[v] /= peak;
    }
    out.iterations = std::max(out.iterations, iter);
    out.residual = std::max(out.residual, step);
    if (!done && lambda[c] > 0) {
      out.converged = false;
      out.warnings.push_back(fmt::format("centrality did not converge on component of {} nodes after {} iterations "
                                         "(residual {:.3g})",
                                         pois[c].size() + cells[c].size(), iter, step));
    }
  }
  const int top = static_cast<int>(std::max_element(lambda.begin(), lambda.end()) - lambda.begin());
  const double lambda_max = lambda[top];
  if (!(lambda_max > 0)) {
    out.warnings.push_back("graph has no positive edge weight; centrality set to 1 everywhere");
    std::fill(out.values.begin(), out.values.end(), 1.0);
    return out;
  }
  for (int c = 0; c < k; ++c) {
    const double scale = c == top ? 1.0 : lambda[c] / lambda_max;
    for (auto* side : {&pois[c], &cells[c]})
      for (auto v : *side) out.values[v] = x[v] * scale;
  }
  return out;
}

// ---------------------------------------------------------------------------
// POI scores and accounting

enum class PoiStatus { leading, residual, no_edge };

inline std::string_view to_string(PoiStatus s) {
  switch (s) {
    case PoiStatus::leading: return "leading";
    case PoiStatus::residual: return "residual";
    case PoiStatus::no_edge: return "no_edge";
  }
  return "?";
}

struct PoiScore {
  std::string poi_id;
  std::string title;
  /// Report label of the POI's community; empty when the POI has no edge.
  std::optional<int> community;
  PoiStatus status = PoiStatus::no_edge;
  double weighted_degree = 0.0;
  double eigenvector_centrality = 0.0;
  std::string category;
  std::string district;
  bool official_attraction = false;
  geo::Wgs84Point location;
  /// Visitors on the POI's verification links (cells within straight reach).
  std::uint64_t visitors = 0;

  bool excluded() const { return status != PoiStatus::leading; }
};

/// One score per verified POI, sorted by poi_id. POIs absent from the graph
/// get status no_edge and zero scores.
inline std::vector<PoiScore> poi_scores(const graph::BipartiteGraph& g, std::span<const ingest::Poi> verified,
                                        const community::Partition& p, const community::LeadingFilter& f,
                                        std::span<const double> centrality,
                                        const std::map<std::string, std::uint64_t>& visitors = {}) {
  if (p.assignment.size() != g.node_count() || centrality.size() != g.node_count()) {
    throw ConsistencyError("partition or centrality does not cover the graph");
  }
  const auto labels = community::report_labels(p, f);
  std::vector<char> is_leading(p.community_count(), 0);
  for (int c : f.leading) is_leading[c] = 1;

  std::vector<PoiScore> out;
  out.reserve(verified.size());
  std::unordered_map<std::string_view, int> seen;
  for (const auto& poi : verified) {
    if (!seen.emplace(poi.poi_id, 0).second) throw DuplicateIdError("duplicate POI '" + poi.poi_id + "'", poi.poi_id);
    PoiScore s;
    s.poi_id = poi.poi_id;
    s.title = poi.title;
    s.category = poi.category;
    s.district = poi.district;
    s.official_attraction = poi.official_attraction;
    s.location = poi.location;
    if (auto it = visitors.find(poi.poi_id); it != visitors.end()) s.visitors = it->second;
    if (auto v = g.find_poi(poi.poi_id)) {
      const int c = p.assignment[*v];
      s.community = labels[c];
      s.status = is_leading[c] ? PoiStatus::leading : PoiStatus::residual;
      s.weighted_degree = g.weighted_degree(*v);
      s.eigenvector_centrality = centrality[*v];
    }
    out.push_back(std::move(s));
  }
  for (std::uint32_t v = 0; v < g.poi_count(); ++v) {
    if (!seen.count(g.node(v).id)) {
      throw ConsistencyError("graph POI '" + g.node(v).id + "' is not among the verified POIs");
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.poi_id < b.poi_id; });
  return out;
}

struct PoiAccounting {
  std::size_t leading = 0;
  std::size_t residual = 0;
  std::size_t no_edge = 0;
  std::size_t total = 0;
};

/// Counts every POI into exactly one bucket and checks the buckets add up.
inline PoiAccounting account_pois(std::span<const PoiScore> scores) {
  PoiAccounting a;
  for (const auto& s : scores) {
    switch (s.status) {
      case PoiStatus::leading: ++a.leading; break;
      case PoiStatus::residual: ++a.residual; break;
      case PoiStatus::no_edge: ++a.no_edge; break;
    }
    if ((s.status == PoiStatus::no_edge) == s.community.has_value()) {
      throw ConsistencyError("POI '" + s.poi_id + "' has inconsistent community status");
    }
  }
  a.total = scores.size();
  if (a.leading + a.residual + a.no_edge != a.total) throw ConsistencyError("POI accounting does not add up");
  return a;
}

inline void write_poi_scores(std::ostream& out, std::span<const PoiScore> scores) {
  csv::write_row(out, {"poi_id", "title", "category", "district", "official_attraction", "status", "community",
                       "visitors", "weighted_degree", "eigenvector_centrality"});
  for (const auto& s : scores) {
    csv::write_row(out, {s.poi_id, s.title, s.category, s.district, s.official_attraction ? "1" : "0",
                         std::string(to_string(s.status)), s.community ? std::to_string(*s.community) : "",
                         std::to_string(s.visitors), csv::exact(s.weighted_degree), csv::exact(s.eigenvector_centrality)});
  }
}

// ---------------------------------------------------------------------------
// Top POIs per community

enum class Ranking { weighted_degree, centrality };

inline std::string_view to_string(Ranking r) {
  return r == Ranking::weighted_degree ? "weighted_degree" : "eigenvector_centrality";
}

struct TopCategory {
  std::string category;
  /// How many of the top-k POIs fall in this category.
  std::size_t frequency = 0;
  std::string poi_id;  // best member
  double value = 0.0;
};

struct TopPoiReport {
  int community = 0;
  std::size_t poi_count = 0;
  std::vector<TopCategory> by_weighted_degree;
  std::vector<TopCategory> by_centrality;
};

namespace detail {

inline std::vector<TopCategory> top_categories(std::vector<const PoiScore*> members, Ranking r, std::size_t k,
                                               std::size_t top_n) {
  auto value = [r](const PoiScore* s) {
    return r == Ranking::weighted_degree ? s->weighted_degree : s->eigenvector_centrality;
  };
  std::sort(members.begin(), members.end(), [&](const PoiScore* a, const PoiScore* b) {
    if (value(a) != value(b)) return value(a) > value(b);
    return a->poi_id < b->poi_id;
  });
  if (members.size() > k) members.resize(k);
  // Members are in rank order, so the first hit per category is its best.
  std::map<std::string, TopCategory> by_cat;
  for (const auto* s : members) {
    auto [it, fresh] = by_cat.try_emplace(s->category);
    if (fresh) {
      it->second.category = s->category;
      it->second.poi_id = s->poi_id;
      it->second.value = value(s);
    }
    ++it->second.frequency;
  }
  std::vector<TopCategory> out;
  for (auto& [_, t] : by_cat) out.push_back(std::move(t));
  std::sort(out.begin(), out.end(), [](const TopCategory& a, const TopCategory& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.value != b.value) return a.value > b.value;
    return a.category < b.category;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

}  // namespace detail

/// Ranks the community's POIs by each metric, keeps the top k (all when
/// fewer), and reports the best POI of the top_categories most frequent
/// categories. Frequency ties go to the higher best-member value, then to
/// the category name.
inline TopPoiReport top_poi_report(std::span<const PoiScore> scores, int community, std::size_t k = 30,
                                   std::size_t top_categories = 5) {
  std::vector<const PoiScore*> members;
  for (const auto& s : scores)
    if (s.community == community) members.push_back(&s);
  TopPoiReport r;
  r.community = community;
  r.poi_count = members.size();
  r.by_weighted_degree = detail::top_categories(members, Ranking::weighted_degree, k, top_categories);
  r.by_centrality = detail::top_categories(members, Ranking::centrality, k, top_categories);
  return r;
}

inline void write_top_poi_reports(std::ostream& out, std::span<const TopPoiReport> reports) {
  csv::write_row(out, {"community", "ranking", "rank", "category", "frequency", "poi_id", "value"});
  for (const auto& r : reports) {
    for (auto ranking : {Ranking::weighted_degree, Ranking::centrality}) {
      const auto& rows = ranking == Ranking::weighted_degree ? r.by_weighted_degree : r.by_centrality;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i];
        csv::write_row(out, {std::to_string(r.community), std::string(to_string(ranking)), std::to_string(i + 1),
                             t.category, std::to_string(t.frequency), t.poi_id,
                             ranking == Ranking::weighted_degree ? csv::fixed2(t.value)
                                                                 : fmt::format("{:.5f}", t.value)});
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Category distributions

enum class Grouping { community, global, excluded };

struct CategoryShare {
  std::string category;
  std::size_t count = 0;
  double percent = 0.0;
};

struct CategoryGroup {
  std::string group;
  std::size_t total = 0;
  std::vector<CategoryShare> shares;  // descending count, then name
};

inline CategoryGroup category_shares(std::string group, std::span<const PoiScore* const> members) {
  std::map<std::string, std::size_t> counts;
  for (const auto* s : members) ++counts[s->category];
  CategoryGroup g{std::move(group), members.size(), {}};
  for (const auto& [cat, n] : counts) {
    g.shares.push_back({cat, n, 100.0 * static_cast<double>(n) / static_cast<double>(members.size())});
  }
  std::stable_sort(g.shares.begin(), g.shares.end(),
                   [](const CategoryShare& a, const CategoryShare& b) { return a.count > b.count; });
  return g;
}

/// Category counts and percentages. `community` yields one group per
/// leading community (by label), `global` one group of all POIs, and
/// `excluded` one group of POIs outside the leading communities, edgeless
/// ones included.
inline std::vector<CategoryGroup> category_distribution(std::span<const PoiScore> scores, Grouping grouping) {
  std::vector<CategoryGroup> out;
  if (grouping == Grouping::community) {
    std::map<int, std::vector<const PoiScore*>> by;
    for (const auto& s : scores)
      if (s.status == PoiStatus::leading) by[*s.community].push_back(&s);
    for (const auto& [label, members] : by) out.push_back(category_shares(std::to_string(label), members));
    return out;
  }
  std::vector<const PoiScore*> members;
  for (const auto& s : scores)
    if (grouping == Grouping::global || s.excluded()) members.push_back(&s);
  if (!members.empty()) out.push_back(category_shares(grouping == Grouping::global ? "all" : "excluded", members));
  return out;
}

inline void write_category_distribution(std::ostream& out, std::span<const CategoryGroup> groups) {
  csv::write_row(out, {"group", "category", "count", "percent"});
  for (const auto& g : groups)
    for (const auto& s : g.shares) csv::write_row(out, {g.group, s.category, std::to_string(s.count), csv::fixed2(s.percent)});
}

// ---------------------------------------------------------------------------
// Official attractions

struct AttractionRow {
  std::string poi_id;
  std::string title;
  std::string district;
  std::optional<int> community;
  PoiStatus status = PoiStatus::no_edge;
  /// Rank by weighted degree within the POI's community, 1 = highest.
  std::optional<std::size_t> rank;
  double weighted_degree = 0.0;
  double centrality = 0.0;
  bool low_centrality = false;
};

struct AttractionCoverage {
  std::vector<AttractionRow> rows;
  std::size_t total = 0;
  std::size_t excluded = 0;
  std::size_t low_centrality = 0;
  double threshold = 0.5;
};

/// Ranks break weighted-degree ties by poi_id so every rank is unique.
inline AttractionCoverage official_attraction_coverage(std::span<const PoiScore> scores, double threshold = 0.5) {
  AttractionCoverage cov;
  cov.threshold = threshold;
  for (const auto& s : scores) {
    if (!s.official_attraction) continue;
    AttractionRow row{s.poi_id, s.title, s.district, s.community, s.status, std::nullopt, s.weighted_degree,
                      s.eigenvector_centrality, s.eigenvector_centrality <= threshold};
    if (s.community) {
      std::size_t rank = 1;
      for (const auto& o : scores) {
        if (o.community != s.community || o.poi_id == s.poi_id) continue;
        if (o.weighted_degree > s.weighted_degree || (o.weighted_degree == s.weighted_degree && o.poi_id < s.poi_id))
          ++rank;
      }
      row.rank = rank;
    }
    ++cov.total;
    if (s.excluded()) ++cov.excluded;
    if (row.low_centrality) ++cov.low_centrality;
    cov.rows.push_back(std::move(row));
  }
  return cov;
}

inline void write_attraction_coverage(std::ostream& out, const AttractionCoverage& cov) {
  csv::write_row(out, {"poi_id", "title", "district", "status", "community", "rank_in_community", "weighted_degree",
                       "eigenvector_centrality", "centrality_at_or_below_threshold"});
  for (const auto& r : cov.rows) {
    csv::write_row(out, {r.poi_id, r.title, r.district, std::string(to_string(r.status)),
                         r.community ? std::to_string(*r.community) : "", r.rank ? std::to_string(*r.rank) : "",
                         csv::fixed2(r.weighted_degree), fmt::format("{:.5f}", r.centrality),
                         r.low_centrality ? "1" : "0"});
  }
}

// ---------------------------------------------------------------------------
// Excluded POIs by district

struct DistrictExclusion {
  std::string district;
  std::size_t excluded = 0;
  std::size_t excluded_with_edges = 0;
  std::size_t excluded_without_edges = 0;
  std::size_t total = 0;
  double percent = 0.0;
};

/// Districts sorted by name; districts without POIs never appear.
inline std::vector<DistrictExclusion> excluded_poi_by_district(std::span<const PoiScore> scores) {
  std::map<std::string, DistrictExclusion> by;
  for (const auto& s : scores) {
    auto& d = by[s.district];
    d.district = s.district;
    ++d.total;
    if (s.status == PoiStatus::residual) ++d.excluded_with_edges;
    if (s.status == PoiStatus::no_edge) ++d.excluded_without_edges;
  }
  std::vector<DistrictExclusion> out;
  for (auto& [_, d] : by) {
    d.excluded = d.excluded_with_edges + d.excluded_without_edges;
    d.percent = 100.0 * static_cast<double>(d.excluded) / static_cast<double>(d.total);
    out.push_back(d);
  }
  return out;
}

inline void write_district_exclusion(std::ostream& out, std::span<const DistrictExclusion> rows) {
  csv::write_row(out, {"district", "excluded", "excluded_with_edges", "excluded_without_edges", "total", "percent"});
  for (const auto& d : rows) {
    csv::write_row(out, {d.district, std::to_string(d.excluded), std::to_string(d.excluded_with_edges),
                         std::to_string(d.excluded_without_edges), std::to_string(d.total), csv::fixed2(d.percent)});
  }
}

// ---------------------------------------------------------------------------
// Per-community POI profile (average visitors per POI, POIs by district)

struct CommunityPoiProfile {
  int community = 0;
  std::size_t poi_count = 0;
  double average_visitors = 0.0;
  std::map<std::string, std::size_t> by_district;
};

/// One row per leading community, by label.
inline std::vector<CommunityPoiProfile> community_poi_profiles(std::span<const PoiScore> scores) {
  std::map<int, CommunityPoiProfile> by;
  for (const auto& s : scores) {
    if (s.status != PoiStatus::leading) continue;
    auto& row = by[*s.community];
    row.community = *s.community;
    ++row.poi_count;
    row.average_visitors += static_cast<double>(s.visitors);
    ++row.by_district[s.district];
  }
  std::vector<CommunityPoiProfile> out;
  for (auto& [_, row] : by) {
    row.average_visitors /= static_cast<double>(row.poi_count);
    out.push_back(std::move(row));
  }
  return out;
}

/// Districts form the columns; a district no leading POI belongs to still
/// gets a column when it appears in `districts`.
inline void write_community_poi_profiles(std::ostream& out, std::span<const CommunityPoiProfile> rows,
                                         std::span<const std::string> districts) {
  std::vector<std::string> header{"community", "average_visitors_per_poi", "poi_count"};
  for (const auto& d : districts) header.push_back(d);
  csv::write_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> row{std::to_string(r.community), csv::fixed2(r.average_visitors), std::to_string(r.poi_count)};
    for (const auto& d : districts) {
      auto it = r.by_district.find(d);
      row.push_back(std::to_string(it == r.by_district.end() ? 0 : it->second));
    }
    csv::write_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Temporal slices

/// One calendar day, either a single hour of it or the whole day.
struct Slice {
  std::chrono::sys_days day{};
  std::optional<int> hour;

  std::string label() const { return hour ? format_timestamp({day, *hour}) : format_date(day) + "-all"; }
};

/// "YYYYMMDD-HH" for an hour, "YYYYMMDD" or "YYYYMMDD-all" for the whole day.
inline Slice parse_slice(std::string_view s) {
  if (s.size() == 8) return {parse_date(s), std::nullopt};
  if (s.size() == 12 && s.substr(8) == "-all") return {parse_date(s.substr(0, 8)), std::nullopt};
  const auto t = parse_timestamp(s);
  return {t.day, t.hour};
}

struct TemporalSliceStats {
  std::string label;
  /// Cells with at least one visitor in the slice.
  std::size_t cell_count = 0;
  std::uint64_t visitor_sum = 0;
  double visitor_mean = 0.0;
  std::uint64_t visitor_max = 0;
};

/// Per slice, sums visitors per cell (over the hour, or over the whole day)
/// and reports count, sum, mean and max of those per-cell totals.
inline std::vector<TemporalSliceStats> temporal_slices(std::span<const ingest::VisitorSnapshot> snapshots,
                                                       const TimeWindow& window, std::span<const Slice> slices) {
  for (const auto& s : slices) {
    const Timestamp first{s.day, s.hour.value_or(0)}, last{s.day, s.hour.value_or(23)};
    if (!window.contains(first) || !window.contains(last)) {
      throw DomainError("slice " + s.label() + " lies outside the window " + format_window(window));
    }
  }
  std::vector<TemporalSliceStats> out;
  for (const auto& s : slices) {
    std::unordered_map<std::string_view, std::uint64_t> per_cell;
    for (const auto& v : snapshots) {
      if (v.time.day != s.day || (s.hour && v.time.hour != *s.hour)) continue;
      per_cell[v.cell_id] += v.visitors;
    }
    TemporalSliceStats st;
    st.label = s.label();
    for (const auto& [_, n] : per_cell) {
      if (n == 0) continue;
      ++st.cell_count;
      st.visitor_sum += n;
      st.visitor_max = std::max(st.visitor_max, n);
    }
    st.visitor_mean = st.cell_count ? static_cast<double>(st.visitor_sum) / static_cast<double>(st.cell_count) : 0.0;
    out.push_back(std::move(st));
  }
  return out;
}

/// The same statistics over an arbitrary window: per-cell totals across
/// every hour the window covers.
inline TemporalSliceStats window_stats(std::span<const ingest::VisitorSnapshot> snapshots, const TimeWindow& window,
                                       std::string label) {
  std::unordered_map<std::string_view, std::uint64_t> per_cell;
  for (const auto& v : snapshots) {
    if (window.contains(v.time)) per_cell[v.cell_id] += v.visitors;
  }
  TemporalSliceStats st;
  st.label = std::move(label);
  for (const auto& [_, n] : per_cell) {
    if (n == 0) continue;
    ++st.cell_count;
    st.visitor_sum += n;
    st.visitor_max = std::max(st.visitor_max, n);
  }
  st.visitor_mean = st.cell_count ? static_cast<double>(st.visitor_sum) / static_cast<double>(st.cell_count) : 0.0;
  return st;
}

inline void write_temporal_slices(std::ostream& out, std::span<const TemporalSliceStats> rows) {
  csv::write_row(out, {"slice", "cell_count", "visitor_sum", "visitor_mean", "visitor_max"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.label, std::to_string(r.cell_count), std::to_string(r.visitor_sum),
                         csv::fixed2(r.visitor_mean), std::to_string(r.visitor_max)});
  }
}

struct SliceRatio {
  std::string from, to;
  // b / a; empty when a is zero.
  std::optional<double> visitor_sum, visitor_mean, visitor_max, cell_count;
};

inline SliceRatio slice_compare(const TemporalSliceStats& a, const TemporalSliceStats& b) {
  auto ratio = [](double num, double den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return num / den;
  };
  return {a.label,
          b.label,
          ratio(static_cast<double>(b.visitor_sum), static_cast<double>(a.visitor_sum)),
          ratio(b.visitor_mean, a.visitor_mean),
          ratio(static_cast<double>(b.visitor_max), static_cast<double>(a.visitor_max)),
          ratio(static_cast<double>(b.cell_count), static_cast<double>(a.cell_count))};
}

inline constexpr std::string_view kUndefined = "undefined";

inline void write_slice_ratios(std::ostream& out, std::span<const SliceRatio> rows) {
  auto cell = [](const std::optional<double>& v) { return v ? csv::fixed2(*v) : std::string(kUndefined); };
  csv::write_row(out, {"from", "to", "visitor_sum_ratio", "visitor_mean_ratio", "visitor_max_ratio", "cell_count_ratio"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.from, r.to, cell(r.visitor_sum), cell(r.visitor_mean), cell(r.visitor_max),
                         cell(r.cell_count)});
  }
}

// ---------------------------------------------------------------------------
// GeoJSON

inline nlohmann::json point_feature(const geo::Wgs84Point& p, nlohmann::json properties) {
  return {{"type", "Feature"},
          {"geometry", {{"type", "Point"}, {"coordinates", {p.lon, p.lat}}}},
          {"properties", std::move(properties)}};
}

inline nlohmann::json poi_geojson(std::span<const PoiScore> scores) {
  auto features = nlohmann::json::array();
  for (const auto& s : scores) {
    features.push_back(point_feature(
        s.location, {{"poi_id", s.poi_id},
                     {"title", s.title},
                     {"category", s.category},
                     {"district", s.district},
                     {"official_attraction", s.official_attraction},
                     {"status", std::string(to_string(s.status))},
                     {"community", s.community ? nlohmann::json(*s.community) : nlohmann::json()},
                     {"weighted_degree", s.weighted_degree},
                     {"eigenvector_centrality", s.eigenvector_centrality}}));
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

/// Cells of the graph with n_v and their community label.
inline nlohmann::json cell_geojson(const graph::BipartiteGraph& g, const community::Partition& p,
                                   const community::LeadingFilter& f) {
  const auto labels = community::report_labels(p, f);
  std::vector<char> is_leading(p.community_count(), 0);
  for (int c : f.leading) is_leading[c] = 1;
  auto features = nlohmann::json::array();
  for (std::uint32_t v = g.poi_count(); v < g.node_count(); ++v) {
    const auto& n = g.node(v);
    const int c = p.assignment[v];
    features.push_back(point_feature(n.location, {{"cell_id", n.id},
                                                  {"n_v", n.n_v},
                                                  {"community", labels[c]},
                                                  {"leading", static_cast<bool>(is_leading[c])}}));
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace walkability::analysis
