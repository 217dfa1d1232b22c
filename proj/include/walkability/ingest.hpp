#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "walkability/csv.hpp"
#include "walkability/errors.hpp"
#include "walkability/geo.hpp"
#include "walkability/timestamp.hpp"

namespace walkability::ingest {

using geo::Wgs84Point;

/// One hourly visitor count for one grid cell.
struct VisitorSnapshot {
  std::string cell_id;
  Timestamp time;
  std::uint64_t visitors = 0;
  Wgs84Point location;

  bool operator==(const VisitorSnapshot&) const = default;
};

struct Poi {
  std::string poi_id;
  std::string title;
  std::string address;
  Wgs84Point location;
  std::string category;
  std::string district;
  bool official_attraction = false;

  bool operator==(const Poi&) const = default;
};

/// Visitors accumulated per cell over a window (N_v).
struct CellAccumulation {
  std::string cell_id;
  Wgs84Point location;
  std::uint64_t n_v = 0;

  bool operator==(const CellAccumulation&) const = default;
};

enum class CoordinateMode { wgs84, utmk };

inline CoordinateMode parse_coordinate_mode(std::string_view s) {
  auto l = csv::lower(csv::trim(s));
  if (l == "wgs84") return CoordinateMode::wgs84;
  if (l == "utmk" || l == "utm-k") return CoordinateMode::utmk;
  throw FormatError("unknown coordinate mode '" + std::string(s) + "'");
}

inline const char* to_string(CoordinateMode m) { return m == CoordinateMode::wgs84 ? "wgs84" : "utmk"; }

struct BadRow {
  std::size_t line = 0;
  std::string reason;
};

struct VisitorParseResult {
  std::vector<VisitorSnapshot> snapshots;
  std::vector<BadRow> bad_rows;
  std::size_t data_rows = 0;
  std::vector<std::string> warnings;
};

struct VisitorParseOptions {
  CoordinateMode coordinate_mode = CoordinateMode::wgs84;
  double max_bad_row_ratio = 0.01;
};

/// Parses a visitor feed (columns cell_id, time, visitors, lat, lon; any order,
/// case-insensitive). In UTM-K mode the lon column holds the easting and the
/// lat column the northing. Malformed rows are collected; the parse fails only
/// once their share of data rows exceeds max_bad_row_ratio.
inline VisitorParseResult parse_visitor_file(std::istream& in, const VisitorParseOptions& opt = {}) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("visitor file: missing header");
  const csv::Header header(row);
  const auto c_cell = header.require("cell_id", "visitor file");
  const auto c_time = header.require("time", "visitor file");
  const auto c_vis = header.require("visitors", "visitor file");
  const auto c_lat = header.require("lat", "visitor file");
  const auto c_lon = header.require("lon", "visitor file");
  const auto width = std::max({c_cell, c_time, c_vis, c_lat, c_lon}) + 1;

  VisitorParseResult out;
  std::size_t out_of_extent = 0;
  while (reader.next(row)) {
    if (row.size() == 1 && csv::trim(row[0]).empty()) continue;
    ++out.data_rows;
    auto bad = [&](std::string why) { out.bad_rows.push_back({reader.record_line(), std::move(why)}); };
    if (row.size() < width) {
      bad("too few fields");
      continue;
    }
    auto cell = std::string(csv::trim(row[c_cell]));
    auto time = try_parse_timestamp(csv::trim(row[c_time]));
    auto visitors = csv::to_int<std::uint64_t>(row[c_vis]);
    auto a = csv::to_double(row[c_lat]);
    auto b = csv::to_double(row[c_lon]);
    if (cell.empty()) { bad("empty cell_id"); continue; }
    if (!time) { bad("bad time"); continue; }
    if (!visitors || *visitors < 1) { bad("visitors must be a positive integer"); continue; }
    if (!a || !b) { bad("bad coordinate"); continue; }
    Wgs84Point loc;
    if (opt.coordinate_mode == CoordinateMode::utmk) {
      geo::UtmkPoint p{*b, *a};
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) { bad("bad coordinate"); continue; }
      if (!geo::within_korea_extent(p)) ++out_of_extent;
      loc = geo::utmk_to_wgs84(p);
    } else {
      loc = {*a, *b};
    }
    if (!geo::is_valid(loc)) { bad("coordinate out of range"); continue; }
    out.snapshots.push_back({std::move(cell), *time, *visitors, loc});
  }
  if (out_of_extent > 0) {
    out.warnings.push_back(std::to_string(out_of_extent) + " UTM-K rows outside the expected Korean extent");
  }
  if (out.data_rows > 0 &&
      static_cast<double>(out.bad_rows.size()) > opt.max_bad_row_ratio * static_cast<double>(out.data_rows)) {
    throw DataQualityError("visitor file: " + std::to_string(out.bad_rows.size()) + " of " +
                           std::to_string(out.data_rows) + " rows malformed (first at line " +
                           std::to_string(out.bad_rows.front().line) + ": " + out.bad_rows.front().reason + ")");
  }
  return out;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  auto l = csv::lower(csv::trim(s));
  if (l == "true" || l == "1" || l == "yes") return true;
  if (l == "false" || l == "0" || l == "no" || l.empty()) return false;
  return std::nullopt;
}

/// Picks the "<Name>-Gu" token out of a Korean-style address.
inline std::string district_from_address(std::string_view address) {
  std::size_t pos = 0;
  while (pos < address.size()) {
    auto end = address.find_first_of(" ,", pos);
    if (end == std::string_view::npos) end = address.size();
    auto tok = address.substr(pos, end - pos);
    if (tok.size() > 3 && csv::lower(tok.substr(tok.size() - 3)) == "-gu") return std::string(tok);
    pos = end + 1;
  }
  return "unknown";
}

/// Parses POI records (poi_id, title, address, lat, lon, categories,
/// official_attraction). An optional district column overrides the district
/// otherwise derived from the address.
inline std::vector<Poi> parse_poi_file(std::istream& in) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("poi file: missing header");
  const csv::Header header(row);
  const auto c_id = header.require("poi_id", "poi file");
  const auto c_title = header.require("title", "poi file");
  const auto c_addr = header.require("address", "poi file");
  const auto c_lat = header.require("lat", "poi file");
  const auto c_lon = header.require("lon", "poi file");
  const auto c_cat = header.require("categories", "poi file");
  const auto c_off = header.require("official_attraction", "poi file");
  const auto c_district = header.find("district");
  auto width = std::max({c_id, c_title, c_addr, c_lat, c_lon, c_cat, c_off}) + 1;
  if (c_district) width = std::max(width, *c_district + 1);

  std::vector<Poi> out;
  std::unordered_set<std::string> seen;
  while (reader.next(row)) {
    if (row.size() == 1 && csv::trim(row[0]).empty()) continue;
    const auto where = "poi file line " + std::to_string(reader.record_line());
    if (row.size() < width) throw FormatError(where + ": too few fields");
    Poi p;
    p.poi_id = std::string(csv::trim(row[c_id]));
    if (p.poi_id.empty()) throw FormatError(where + ": empty poi_id");
    if (!seen.insert(p.poi_id).second) throw DuplicateIdError("duplicate poi_id '" + p.poi_id + "'", p.poi_id);
    p.title = std::string(csv::trim(row[c_title]));
    p.address = std::string(csv::trim(row[c_addr]));
    auto lat = csv::to_double(row[c_lat]);
    auto lon = csv::to_double(row[c_lon]);
    if (!lat || !lon || !geo::is_valid({*lat, *lon})) throw FormatError(where + ": bad coordinate");
    p.location = {*lat, *lon};
    p.category = std::string(csv::trim(row[c_cat]));
    if (p.category.empty()) throw FormatError(where + ": empty category");
    auto official = parse_bool(row[c_off]);
    if (!official) throw FormatError(where + ": bad official_attraction '" + row[c_off] + "'");
    p.official_attraction = *official;
    if (c_district && !csv::trim(row[*c_district]).empty()) {
      p.district = std::string(csv::trim(row[*c_district]));
    } else {
      p.district = district_from_address(p.address);
    }
    out.push_back(std::move(p));
  }
  return out;
}

struct AccumulationResult {
  std::vector<CellAccumulation> cells;  // sorted by cell_id
  std::vector<std::string> warnings;
};

/// Sums visitors per cell over snapshots inside the window. The first
/// snapshot seen for a cell fixes its location.
inline AccumulationResult accumulate_cells(std::span<const VisitorSnapshot> snapshots, const TimeWindow& window) {
  if (!window.well_formed()) throw DomainError("accumulation window start after end");
  std::unordered_map<std::string_view, std::size_t> slot;
  AccumulationResult out;
  std::size_t conflicts = 0;
  for (const auto& s : snapshots) {
    if (!window.contains(s.time)) continue;
    auto [it, inserted] = slot.try_emplace(s.cell_id, out.cells.size());
    if (inserted) {
      out.cells.push_back({s.cell_id, s.location, 0});
    } else if (!(out.cells[it->second].location == s.location)) {
      ++conflicts;
    }
    out.cells[it->second].n_v += s.visitors;
  }
  if (conflicts > 0) {
    out.warnings.push_back(std::to_string(conflicts) +
                           " snapshots disagree with the first location seen for their cell; first wins");
  }
  std::sort(out.cells.begin(), out.cells.end(),
            [](const auto& a, const auto& b) { return a.cell_id < b.cell_id; });
  return out;
}

struct PoiCellLink {
  std::string poi_id;
  std::string cell_id;
};

struct VerifyResult {
  std::vector<Poi> kept;
  std::vector<Poi> dropped;
  std::map<std::string, std::uint64_t> per_poi_visitors;
};

/// Keeps POIs whose linked cells carry at least one visitor. A link counts
/// once even if listed twice.
inline VerifyResult verify_pois(std::span<const Poi> pois, std::span<const PoiCellLink> links,
                                std::span<const CellAccumulation> cells) {
  std::unordered_map<std::string_view, std::uint64_t> n_v;
  for (const auto& c : cells) n_v[c.cell_id] = c.n_v;
  std::unordered_set<std::string> unique_links;
  VerifyResult out;
  for (const auto& p : pois) out.per_poi_visitors[p.poi_id] = 0;
  for (const auto& l : links) {
    auto poi = out.per_poi_visitors.find(l.poi_id);
    if (poi == out.per_poi_visitors.end()) continue;
    if (!unique_links.insert(l.poi_id + '\x1f' + l.cell_id).second) continue;
    if (auto it = n_v.find(l.cell_id); it != n_v.end()) poi->second += it->second;
  }
  for (const auto& p : pois) {
    (out.per_poi_visitors[p.poi_id] > 0 ? out.kept : out.dropped).push_back(p);
  }
  return out;
}

// Intermediate file formats shared by the pipeline stages.

inline void write_cells(std::ostream& out, std::span<const CellAccumulation> cells) {
  csv::write_row(out, {"cell_id", "lat", "lon", "n_v"});
  for (const auto& c : cells) {
    csv::write_row(out, {c.cell_id, csv::exact(c.location.lat), csv::exact(c.location.lon), std::to_string(c.n_v)});
  }
}

inline std::vector<CellAccumulation> read_cells(std::istream& in) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("cell file: missing header");
  const csv::Header h(row);
  const auto c_id = h.require("cell_id", "cell file"), c_lat = h.require("lat", "cell file"),
             c_lon = h.require("lon", "cell file"), c_nv = h.require("n_v", "cell file");
  std::vector<CellAccumulation> out;
  while (reader.next(row)) {
    if (row.size() < 4) throw FormatError("cell file line " + std::to_string(reader.record_line()));
    auto lat = csv::to_double(row[c_lat]), lon = csv::to_double(row[c_lon]);
    auto nv = csv::to_int<std::uint64_t>(row[c_nv]);
    if (!lat || !lon || !nv) throw FormatError("cell file line " + std::to_string(reader.record_line()));
    out.push_back({row[c_id], {*lat, *lon}, *nv});
  }
  return out;
}

inline void write_pois(std::ostream& out, std::span<const Poi> pois) {
  csv::write_row(out, {"poi_id", "title", "address", "lat", "lon", "categories", "official_attraction", "district"});
  for (const auto& p : pois) {
    csv::write_row(out, {p.poi_id, p.title, p.address, csv::exact(p.location.lat), csv::exact(p.location.lon),
                         p.category, p.official_attraction ? "True" : "False", p.district});
  }
}

inline void write_visitors(std::ostream& out, std::span<const VisitorSnapshot> snapshots) {
  csv::write_row(out, {"cell_id", "time", "visitors", "lat", "lon"});
  for (const auto& s : snapshots) {
    csv::write_row(out, {s.cell_id, format_timestamp(s.time), std::to_string(s.visitors),
                         csv::exact(s.location.lat), csv::exact(s.location.lon)});
  }
}

}  // namespace walkability::ingest
