#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "walkability/ingest.hpp"

using namespace walkability;
using namespace walkability::ingest;

namespace {

Timestamp ts(const char* s) { return parse_timestamp(s); }

VisitorSnapshot snap(std::string cell, const char* time, std::uint64_t v, geo::Wgs84Point p = {36.3, 127.4}) {
  return {std::move(cell), ts(time), v, p};
}

}  // namespace

TEST(ParseVisitors, TableOneRow) {
  std::istringstream in("cell_id,time,visitors,lat,lon\nc4875,20211101-12,10,36.279981,127.411476\n");
  auto r = parse_visitor_file(in);
  ASSERT_EQ(r.snapshots.size(), 1u);
  const auto& s = r.snapshots[0];
  EXPECT_EQ(s.cell_id, "c4875");
  EXPECT_EQ(format_timestamp(s.time), "20211101-12");
  EXPECT_EQ(s.time.hour, 12);
  EXPECT_EQ(s.visitors, 10u);
  EXPECT_DOUBLE_EQ(s.location.lat, 36.279981);
  EXPECT_DOUBLE_EQ(s.location.lon, 127.411476);
}

TEST(ParseVisitors, HeaderIsCaseInsensitiveAndOrderFree) {
  std::istringstream in("Lon,LAT,Visitors,Time,Cell_ID\n127.411476,36.279981,3,20211101-00,c1\n");
  auto r = parse_visitor_file(in);
  ASSERT_EQ(r.snapshots.size(), 1u);
  EXPECT_EQ(r.snapshots[0].visitors, 3u);
  EXPECT_DOUBLE_EQ(r.snapshots[0].location.lat, 36.279981);
}

TEST(ParseVisitors, EmptyFileWithHeader) {
  std::istringstream in("cell_id,time,visitors,lat,lon\n");
  auto r = parse_visitor_file(in);
  EXPECT_TRUE(r.snapshots.empty());
  EXPECT_TRUE(r.bad_rows.empty());
}

TEST(ParseVisitors, MissingColumnIsFatal) {
  std::istringstream in("cell_id,time,lat,lon\nc1,20211101-00,36.3,127.4\n");
  EXPECT_THROW(parse_visitor_file(in), FormatError);
}

namespace {

std::string hundred_rows_two_bad() {
  std::ostringstream s;
  s << "cell_id,time,visitors,lat,lon\n";
  for (int i = 0; i < 100; ++i) {
    if (i == 17) s << "c17,2021110-12,4,36.3,127.4\n";   // bad time
    else if (i == 60) s << "c60,20211101-12,0,36.3,127.4\n";  // zero visitors
    else s << "c" << i << ",20211101-12," << (i + 1) << ",36.3,127.4\n";
  }
  return s.str();
}

}  // namespace

TEST(ParseVisitors, BadRowsReportedUnderTolerance) {
  std::istringstream in(hundred_rows_two_bad());
  auto r = parse_visitor_file(in, {CoordinateMode::wgs84, 0.05});
  EXPECT_EQ(r.snapshots.size(), 98u);
  ASSERT_EQ(r.bad_rows.size(), 2u);
  EXPECT_EQ(r.bad_rows[0].line, 19u);
  EXPECT_EQ(r.bad_rows[1].line, 62u);
}

TEST(ParseVisitors, BadRowRatioAboveDefaultIsFatal) {
  std::istringstream in(hundred_rows_two_bad());
  EXPECT_THROW(parse_visitor_file(in), DataQualityError);
}

TEST(ParseVisitors, UtmkModeProjects) {
  std::istringstream in("cell_id,time,visitors,lat,lon\nc1,20211101-12,5,2000000,1000000\n");
  auto r = parse_visitor_file(in, {CoordinateMode::utmk, 0.01});
  ASSERT_EQ(r.snapshots.size(), 1u);
  EXPECT_NEAR(r.snapshots[0].location.lat, 38.0, 1e-9);
  EXPECT_NEAR(r.snapshots[0].location.lon, 127.5, 1e-9);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(ParseVisitors, QuotedFields) {
  std::istringstream in("cell_id,time,visitors,lat,lon\r\n\"c,1\",20211101-12,5,36.3,127.4\r\n");
  auto r = parse_visitor_file(in);
  ASSERT_EQ(r.snapshots.size(), 1u);
  EXPECT_EQ(r.snapshots[0].cell_id, "c,1");
}

TEST(ParsePois, TableTwoRow) {
  std::istringstream in(
      "poi_id,title,address,lat,lon,categories,official_attraction\n"
      "p436,Traditional Food Experience Center,\"San 4-1, Musu-Dong Jung-Gu, Daejeon\",36.279981,127.411476,"
      "experience_center,False\n");
  auto pois = parse_poi_file(in);
  ASSERT_EQ(pois.size(), 1u);
  EXPECT_EQ(pois[0].poi_id, "p436");
  EXPECT_EQ(pois[0].title, "Traditional Food Experience Center");
  EXPECT_EQ(pois[0].address, "San 4-1, Musu-Dong Jung-Gu, Daejeon");
  EXPECT_EQ(pois[0].category, "experience_center");
  EXPECT_FALSE(pois[0].official_attraction);
  EXPECT_EQ(pois[0].district, "Jung-Gu");
}

TEST(ParsePois, BooleanTokensAnyCase) {
  std::istringstream in(
      "poi_id,title,address,lat,lon,categories,official_attraction\n"
      "a,t,x,36,127,park,TRUE\nb,t,x,36,127,park,true\nc,t,x,36,127,park,fAlSe\n");
  auto pois = parse_poi_file(in);
  EXPECT_TRUE(pois[0].official_attraction);
  EXPECT_TRUE(pois[1].official_attraction);
  EXPECT_FALSE(pois[2].official_attraction);
}

TEST(ParsePois, DuplicateIdNamesTheId) {
  std::istringstream in(
      "poi_id,title,address,lat,lon,categories,official_attraction\n"
      "p1,t,x,36,127,park,False\np2,t,x,36,127,park,False\np1,t,x,36,127,cafe,False\n");
  try {
    parse_poi_file(in);
    FAIL() << "expected duplicate-id error";
  } catch (const DuplicateIdError& e) {
    EXPECT_EQ(e.id(), "p1");
    EXPECT_NE(std::string(e.what()).find("p1"), std::string::npos);
  }
}

TEST(ParsePois, MissingColumn) {
  std::istringstream in("poi_id,title,address,lat,lon,official_attraction\n");
  EXPECT_THROW(parse_poi_file(in), FormatError);
}

TEST(ParsePois, DistrictColumnOverridesAddress) {
  std::istringstream in(
      "poi_id,title,address,lat,lon,categories,official_attraction,district\n"
      "p1,t,\"1 Road, Seo-Gu\",36,127,park,False,Yuseong-Gu\n");
  EXPECT_EQ(parse_poi_file(in)[0].district, "Yuseong-Gu");
}

TEST(Accumulate, Additivity) {
  std::vector<VisitorSnapshot> s{snap("c1", "20211101-10", 10), snap("c1", "20211101-11", 7)};
  auto r = accumulate_cells(s, parse_window("20211101..20211130"));
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].cell_id, "c1");
  EXPECT_EQ(r.cells[0].n_v, 17u);
}

TEST(Accumulate, OutsideWindowExcluded) {
  std::vector<VisitorSnapshot> s{snap("c1", "20211101-10", 10), snap("c1", "20211201-00", 7),
                                 snap("c2", "20211031-23", 4)};
  auto r = accumulate_cells(s, parse_window("20211101..20211130"));
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].n_v, 10u);
}

TEST(Accumulate, HourBoundsAreInclusive) {
  std::vector<VisitorSnapshot> s{snap("c1", "20211103-09", 1), snap("c1", "20211103-13", 2),
                                 snap("c1", "20211103-14", 4)};
  auto r = accumulate_cells(s, parse_window("20211103-09..20211103-13"));
  EXPECT_EQ(r.cells[0].n_v, 3u);
}

TEST(Accumulate, LocationConflictFirstWinsWithWarning) {
  std::vector<VisitorSnapshot> s{snap("c1", "20211101-10", 1, {36.3, 127.4}),
                                 snap("c1", "20211101-11", 1, {36.4, 127.4})};
  auto r = accumulate_cells(s, TimeWindow::everything());
  EXPECT_DOUBLE_EQ(r.cells[0].location.lat, 36.3);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Accumulate, MonthMatchesGroupByAndIsOrderIndependent) {
  std::mt19937_64 rng(21);
  std::poisson_distribution<int> vis(6);
  std::vector<VisitorSnapshot> s;
  const auto start = parse_date("20211101");
  for (int day = 0; day < 30; ++day) {
    for (int h = 0; h < 24; ++h) {
      for (int c = 0; c < 50; ++c) {
        int v = vis(rng);
        if (v > 0) s.push_back({"c" + std::to_string(c), {start + std::chrono::days(day), h},
                                static_cast<std::uint64_t>(v), {36.3 + c * 1e-3, 127.4}});
      }
    }
  }
  const auto window = parse_window("20211105-06..20211120-18");
  // Oracle: plain group-by with an ordered map over the string form.
  std::map<std::string, std::uint64_t> expected;
  std::uint64_t in_window_total = 0;
  for (const auto& x : s) {
    const auto t = format_timestamp(x.time);
    if (t >= "20211105-06" && t <= "20211120-18") {
      expected[x.cell_id] += x.visitors;
      in_window_total += x.visitors;
    }
  }
  auto r = accumulate_cells(s, window);
  ASSERT_EQ(r.cells.size(), expected.size());
  std::uint64_t total = 0;
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.n_v, expected.at(c.cell_id));
    total += c.n_v;
  }
  EXPECT_EQ(total, in_window_total);

  std::shuffle(s.begin(), s.end(), rng);
  auto shuffled = accumulate_cells(s, window);
  EXPECT_EQ(shuffled.cells, r.cells);
}

TEST(Accumulate, MalformedWindowRejected) {
  TimeWindow w{ts("20211102-00"), ts("20211101-00")};
  EXPECT_THROW(accumulate_cells({}, w), DomainError);
}

TEST(VerifyPois, NoLinkMeansDropped) {
  std::vector<Poi> pois{{"p1", "", "", {}, "park", "X-Gu", false}, {"p2", "", "", {}, "cafe", "X-Gu", false}};
  std::vector<CellAccumulation> cells{{"c1", {}, 5}};
  std::vector<PoiCellLink> links{{"p1", "c1"}};
  auto r = verify_pois(pois, links, cells);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].poi_id, "p1");
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0].poi_id, "p2");
  EXPECT_EQ(r.per_poi_visitors.at("p2"), 0u);
}

TEST(VerifyPois, FivePoiHandSums) {
  std::vector<Poi> pois;
  for (int i = 1; i <= 5; ++i) pois.push_back({"p" + std::to_string(i), "", "", {}, "park", "X-Gu", false});
  std::vector<CellAccumulation> cells{{"a", {}, 10}, {"b", {}, 3}, {"c", {}, 100}, {"d", {}, 1}};
  std::vector<PoiCellLink> links{{"p1", "a"}, {"p1", "b"}, {"p2", "c"}, {"p2", "d"}, {"p2", "a"},
                                 {"p3", "d"}, {"p4", "b"}, {"p4", "b"}};
  auto r = verify_pois(pois, links, cells);
  EXPECT_EQ(r.per_poi_visitors.at("p1"), 13u);
  EXPECT_EQ(r.per_poi_visitors.at("p2"), 111u);
  EXPECT_EQ(r.per_poi_visitors.at("p3"), 1u);
  EXPECT_EQ(r.per_poi_visitors.at("p4"), 3u);  // duplicate link counted once
  EXPECT_EQ(r.per_poi_visitors.at("p5"), 0u);
  EXPECT_EQ(r.kept.size() + r.dropped.size(), pois.size());
  EXPECT_EQ(r.dropped.size(), 1u);
}

TEST(Timestamps, Parsing) {
  EXPECT_FALSE(try_parse_timestamp("20211101-24"));
  EXPECT_FALSE(try_parse_timestamp("20210230-01"));
  EXPECT_FALSE(try_parse_timestamp("2021110112"));
  EXPECT_EQ(format_window(parse_window("20211103..20211103")), "20211103-00..20211103-23");
  EXPECT_THROW(parse_window("20211104..20211103"), FormatError);
}
