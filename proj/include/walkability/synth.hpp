#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "walkability/csv.hpp"
#include "walkability/distance.hpp"
#include "walkability/errors.hpp"
#include "walkability/geo.hpp"
#include "walkability/ingest.hpp"
#include "walkability/timestamp.hpp"

namespace walkability::synth {

inline constexpr double kCellPitchM = 50.0;

struct DistrictSpec {
  std::string label;  // "<Name>-Gu", so addresses carry the district token
  geo::Wgs84Point center;
};

/// Regular grid of square cells laid out in UTM-K; origin is the south-west
/// corner of cell (0, 0).
struct CellGridSpec {
  geo::UtmkPoint origin{960000.0, 1815000.0};
  int rows = 100;
  int cols = 100;

  geo::UtmkPoint centroid(int r, int c) const {
    return {origin.x + (c + 0.5) * kCellPitchM, origin.y + (r + 0.5) * kCellPitchM};
  }
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Hourly multipliers of a cell's base intensity, one curve per day type.
struct VisitorProfile {
  std::array<double, 24> weekday{};
  std::array<double, 24> weekend{};
  /// Expected visitors per cell-hour at base intensity 1 and multiplier 1.
  double scale = 12.0;

  static VisitorProfile standard() {
    VisitorProfile p;
    constexpr std::array<double, 24> day{0.15, 0.1, 0.08, 0.08, 0.1, 0.2, 0.4, 0.65, 0.8, 0.85, 0.9, 0.95,
                                         1.0,  1.0, 0.95, 0.9,  0.9, 0.9, 0.85, 0.8, 0.7, 0.55, 0.4, 0.25};
    p.weekday = day;
    for (int h = 0; h < 24; ++h) p.weekend[h] = day[h] * (h >= 10 && h <= 20 ? 1.3 : 1.05);
    return p;
  }
};

struct CityPlan {
  std::uint64_t seed = 1;
  std::vector<DistrictSpec> districts;
  int pois_per_district = 20;
  CellGridSpec grid;
  VisitorProfile profile = VisitorProfile::standard();
  /// Share of all visitor mass placed on cells within d_max of POIs from two
  /// or more districts.
  double cross_district_leakage = 0.1;
  /// POIs are scattered uniformly within this radius of their center.
  double poi_spread_m = 400.0;
  std::vector<std::string> categories{"Restaurant", "Cafe", "Park", "Museum", "Shopping", "Heritage", "Hotel", "Bar"};
  std::vector<double> category_weights{6, 5, 4, 2, 3, 2, 1, 2};
  double official_share = 0.05;
  /// Extra POIs placed far outside the grid; they see no visitors and are
  /// dropped by verification.
  int isolated_pois = 0;
  std::vector<std::chrono::sys_days> dates{parse_date("20211103"), parse_date("20211106")};
  double d_max = distance::kDefaultMaxWalkM;

  void validate() const {
    if (districts.empty()) throw DomainError("city plan needs at least one district");
    if (!(cross_district_leakage >= 0 && cross_district_leakage < 0.5)) {
      throw DomainError("cross-district leakage must lie in [0, 0.5)");
    }
    if (grid.rows < 1 || grid.cols < 1) throw DomainError("cell grid must have at least one row and column");
    if (pois_per_district < 1) throw DomainError("pois_per_district must be positive");
    if (categories.empty() || categories.size() != category_weights.size()) {
      throw DomainError("category vocabulary and weights must be non-empty and equal in length");
    }
    if (dates.empty()) throw DomainError("city plan needs at least one date");
  }
};

inline bool is_weekend(std::chrono::sys_days d) {
  const auto wd = std::chrono::weekday{d}.c_encoding();
  return wd == 0 || wd == 6;
}

inline std::string district_name(std::size_t i) {
  static const char* names[] = {"Dong", "Seo", "Nam", "Buk", "Jung", "Yuseong", "Daedeok", "Sinhwa"};
  if (i < std::size(names)) return std::string(names[i]) + "-Gu";
  return fmt::format("D{}-Gu", i + 1);
}

/// Centers on a lattice of equal blocks, one per district. The block layout
/// leaves no slot empty when possible and keeps blocks close to square.
inline std::vector<DistrictSpec> lattice_districts(const CellGridSpec& grid, int count) {
  if (count < 1) throw DomainError("district count must be positive");
  const double w = grid.cols * kCellPitchM, h = grid.rows * kCellPitchM;
  int cols = 1;
  double best = std::numeric_limits<double>::infinity();
  for (int c = 1; c <= count; ++c) {
    const int r = (count + c - 1) / c;
    const double score = std::abs(std::log((w / c) / (h / r))) + 10.0 * (r * c - count);
    if (score < best - 1e-12) {
      best = score;
      cols = c;
    }
  }
  const int rows = (count + cols - 1) / cols;
  std::vector<DistrictSpec> out;
  for (int i = 0; i < count; ++i) {
    const int r = i / cols, c = i % cols;
    // the last row may hold fewer blocks; spread them evenly
    const int in_row = std::min(cols, count - r * cols);
    const geo::UtmkPoint p{grid.origin.x + (c + 0.5) * w / in_row, grid.origin.y + (r + 0.5) * h / rows};
    out.push_back({district_name(i), geo::utmk_to_wgs84(p)});
  }
  return out;
}

/// A plan with `districts` lattice centers on a rows x cols grid and
/// `total_pois` POIs split evenly. POI spread scales with the block size.
inline CityPlan make_plan(int districts, int rows, int cols, int total_pois, double leakage, std::uint64_t seed) {
  CityPlan plan;
  plan.seed = seed;
  plan.grid.rows = rows;
  plan.grid.cols = cols;
  plan.districts = lattice_districts(plan.grid, districts);
  plan.pois_per_district = std::max(1, total_pois / std::max(1, districts));
  plan.cross_district_leakage = leakage;
  const double block = std::sqrt(rows * cols * kCellPitchM * kCellPitchM / districts);
  plan.poi_spread_m = std::min(400.0, 0.15 * block);
  return plan;
}

/// Four districts on a 110 x 110 grid with 80 POIs. POIs are spread wide
/// enough that every district reaches well over 2,000 cells and neighbouring
/// districts share a band of bridge cells.
inline CityPlan default_plan(std::uint64_t seed = 1) {
  auto plan = make_plan(4, 110, 110, 80, 0.1, seed);
  plan.poi_spread_m = 700.0;
  return plan;
}

struct GroundTruth {
  std::string id;
  std::string kind;  // "poi" or "cell"
  std::string district;
};

struct City {
  std::vector<ingest::VisitorSnapshot> snapshots;
  std::vector<ingest::Poi> pois;
  distance::RoadGraph roads;
  std::vector<GroundTruth> truth;
  std::size_t bridge_cells = 0;
  /// Realized share of visitor mass on bridge cells.
  double realized_leakage = 0.0;
  std::vector<std::string> warnings;
};

inline std::string cell_id(int r, int c) { return fmt::format("C{:04}{:04}", r, c); }

inline City generate_city(const CityPlan& plan) {
  plan.validate();
  std::mt19937_64 rng(plan.seed);
  City city;
  const auto& grid = plan.grid;
  const std::size_t n_districts = plan.districts.size();
  std::vector<geo::UtmkPoint> centers;
  for (const auto& d : plan.districts) centers.push_back(geo::wgs84_to_utmk(d.center));
  auto nearest_district = [&](const geo::UtmkPoint& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_districts; ++i) {
      const double d = std::hypot(p.x - centers[i].x, p.y - centers[i].y);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return std::pair{best, best_d};
  };

  // POIs
  std::discrete_distribution<std::size_t> pick_category(plan.category_weights.begin(), plan.category_weights.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> poi_district;
  int serial = 0;
  for (std::size_t d = 0; d < n_districts; ++d) {
    for (int i = 0; i < plan.pois_per_district; ++i) {
      const double radius = plan.poi_spread_m * std::sqrt(unit(rng));
      const double angle = 2 * std::numbers::pi * unit(rng);
      const geo::UtmkPoint p{centers[d].x + radius * std::cos(angle), centers[d].y + radius * std::sin(angle)};
      ingest::Poi poi;
      poi.poi_id = fmt::format("p{}", ++serial);
      poi.category = plan.categories[pick_category(rng)];
      poi.title = fmt::format("{} {}", poi.category, serial);
      poi.district = plan.districts[d].label;
      poi.address = fmt::format("Synth-si {} {}-gil {}", poi.district, 1 + i % 9, serial);
      poi.location = geo::utmk_to_wgs84(p);
      poi.official_attraction = unit(rng) < plan.official_share;
      city.pois.push_back(std::move(poi));
      poi_district.push_back(d);
    }
  }
  for (int i = 0; i < plan.isolated_pois; ++i) {
    // A column of POIs 5 km west of the grid, 1.5 km apart.
    const geo::UtmkPoint p{grid.origin.x - 5000.0, grid.origin.y + 1500.0 * i};
    const auto d = nearest_district(p).first;
    ingest::Poi poi;
    poi.poi_id = fmt::format("p{}", ++serial);
    poi.category = plan.categories[pick_category(rng)];
    poi.title = fmt::format("{} {}", poi.category, serial);
    poi.district = plan.districts[d].label;
    poi.address = fmt::format("Synth-si {} outer-ro {}", poi.district, serial);
    poi.location = geo::utmk_to_wgs84(p);
    city.pois.push_back(std::move(poi));
    poi_district.push_back(d);
  }
  for (std::size_t i = 0; i < city.pois.size(); ++i) {
    city.truth.push_back({city.pois[i].poi_id, "poi", plan.districts[poi_district[i]].label});
  }

  // Cells: base intensity decays with distance to the owning center; cells
  // within d_max of POIs from several districts are bridges.
  std::vector<geo::Wgs84Point> poi_points;
  for (const auto& p : city.pois) poi_points.push_back(p.location);
  const geo::GridIndex poi_index(poi_points, plan.d_max);
  const double block = std::sqrt(static_cast<double>(grid.size()) * kCellPitchM * kCellPitchM /
                                 static_cast<double>(n_districts));
  struct CellInfo {
    geo::Wgs84Point location;
    std::size_t district;
    double intensity;
    bool bridge;
  };
  std::vector<CellInfo> cells;
  cells.reserve(grid.size());
  double core_mass = 0, bridge_mass = 0;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto u = grid.centroid(r, c);
      const auto loc = geo::utmk_to_wgs84(u);
      const auto [d, dist] = nearest_district(u);
      std::set<std::size_t> reached;
      for (auto i : poi_index.query(loc, plan.d_max)) {
        if (geo::haversine_m(loc, poi_points[i]) <= plan.d_max) reached.insert(poi_district[i]);
      }
      const double base = 0.2 + std::exp(-std::pow(dist / (0.5 * block), 2));
      const bool bridge = reached.size() >= 2;
      (bridge ? bridge_mass : core_mass) += base;
      cells.push_back({loc, d, base, bridge});
      if (bridge) ++city.bridge_cells;
    }
  }
  // Rescale bridge cells so they carry the planned share of the mass.
  double bridge_factor = 0.0;
  if (bridge_mass > 0 && plan.cross_district_leakage > 0) {
    bridge_factor = plan.cross_district_leakage / (1 - plan.cross_district_leakage) * core_mass / bridge_mass;
  } else if (plan.cross_district_leakage > 0) {
    city.warnings.push_back("no cell lies within reach of two districts; leakage cannot be realized");
  }

  // Hourly snapshots, cell-major then time order.
  std::uint64_t total = 0, on_bridges = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int r = static_cast<int>(i) / grid.cols, c = static_cast<int>(i) % grid.cols;
    const auto& cell = cells[i];
    const double intensity = cell.intensity * (cell.bridge ? bridge_factor : 1.0);
    bool seen = false;
    for (const auto day : plan.dates) {
      const auto& curve = is_weekend(day) ? plan.profile.weekend : plan.profile.weekday;
      for (int h = 0; h < 24; ++h) {
        const double mean = intensity * curve[h] * plan.profile.scale;
        if (!(mean > 0)) continue;
        std::poisson_distribution<std::uint64_t> draw(mean);
        const auto n = draw(rng);
        if (n == 0) continue;
        city.snapshots.push_back({cell_id(r, c), Timestamp{day, h}, n, cell.location});
        total += n;
        if (cell.bridge) on_bridges += n;
        seen = true;
      }
    }
    if (seen) city.truth.push_back({cell_id(r, c), "cell", plan.districts[cell.district].label});
  }
  city.realized_leakage = total ? static_cast<double>(on_bridges) / static_cast<double>(total) : 0.0;

  // Road lattice over every cell centroid plus diagonal spokes from each
  // district center out to the grid edge.
  std::vector<std::string> ids;
  std::vector<geo::Wgs84Point> points;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      ids.push_back(fmt::format("n{}_{}", r, c));
      points.push_back(cells[static_cast<std::size_t>(r) * grid.cols + c].location);
    }
  }
  auto node = [&](int r, int c) { return static_cast<std::uint32_t>(r * grid.cols + c); };
  std::vector<distance::RoadGraph::Edge> edges;
  auto link = [&](std::uint32_t a, std::uint32_t b) {
    edges.push_back({a, b, geo::haversine_m(points[a], points[b])});
  };
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (c + 1 < grid.cols) link(node(r, c), node(r, c + 1));
      if (r + 1 < grid.rows) link(node(r, c), node(r + 1, c));
    }
  }
  std::set<std::pair<std::uint32_t, std::uint32_t>> diagonal;
  for (const auto& center : centers) {
    const int r0 = std::clamp(static_cast<int>(std::floor((center.y - grid.origin.y) / kCellPitchM)), 0, grid.rows - 1);
    const int c0 = std::clamp(static_cast<int>(std::floor((center.x - grid.origin.x) / kCellPitchM)), 0, grid.cols - 1);
    for (auto [dr, dc] : {std::pair{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}) {
      for (int r = r0, c = c0; r + dr >= 0 && r + dr < grid.rows && c + dc >= 0 && c + dc < grid.cols; r += dr, c += dc) {
        const auto a = node(r, c), b = node(r + dr, c + dc);
        if (diagonal.insert(std::minmax(a, b)).second) link(a, b);
      }
    }
  }
  city.roads = distance::RoadGraph(std::move(ids), std::move(points), std::move(edges));
  return city;
}

inline void write_ground_truth(std::ostream& out, std::span<const GroundTruth> truth) {
  csv::write_row(out, {"id", "kind", "district"});
  for (const auto& t : truth) csv::write_row(out, {t.id, t.kind, t.district});
}

inline std::vector<GroundTruth> read_ground_truth(std::istream& in) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("ground truth file: missing header");
  const csv::Header h(row);
  const auto c_id = h.require("id", "ground truth file"), c_kind = h.require("kind", "ground truth file"),
             c_d = h.require("district", "ground truth file");
  std::vector<GroundTruth> out;
  while (reader.next(row)) {
    if (row.size() < 3) throw FormatError("ground truth file line " + std::to_string(reader.record_line()));
    out.push_back({row[c_id], row[c_kind], row[c_d]});
  }
  return out;
}

/// Visitor file with UTM-K coordinates: x in the lon column, y in lat.
inline void write_visitors_utmk(std::ostream& out, std::span<const ingest::VisitorSnapshot> snapshots) {
  csv::write_row(out, {"cell_id", "time", "visitors", "lat", "lon"});
  for (const auto& s : snapshots) {
    const auto p = geo::wgs84_to_utmk(s.location);
    csv::write_row(out, {s.cell_id, format_timestamp(s.time), std::to_string(s.visitors), fmt::format("{:.3f}", p.y),
                         fmt::format("{:.3f}", p.x)});
  }
}

struct CityFiles {
  std::filesystem::path visitors, pois, road_nodes, road_edges, ground_truth;
};

inline CityFiles city_files(const std::filesystem::path& dir) {
  return {dir / "visitors.csv", dir / "pois.csv", dir / "road_nodes.csv", dir / "road_edges.csv",
          dir / "ground_truth.csv"};
}

inline CityFiles write_city(const City& city, const std::filesystem::path& dir,
                            ingest::CoordinateMode mode = ingest::CoordinateMode::wgs84) {
  std::filesystem::create_directories(dir);
  const auto files = city_files(dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(files.visitors);
    if (mode == ingest::CoordinateMode::utmk) {
      write_visitors_utmk(f, city.snapshots);
    } else {
      ingest::write_visitors(f, city.snapshots);
    }
  }
  {
    auto f = open(files.pois);
    ingest::write_pois(f, city.pois);
  }
  {
    auto n = open(files.road_nodes);
    auto e = open(files.road_edges);
    distance::write_road_graph(n, e, city.roads);
  }
  {
    auto f = open(files.ground_truth);
    write_ground_truth(f, city.truth);
  }
  return files;
}

}  // namespace walkability::synth
