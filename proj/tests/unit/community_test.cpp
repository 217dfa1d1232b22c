#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "walkability/community.hpp"

using namespace walkability;
using namespace walkability::community;

namespace {

WeightedGraph to_graph(int n, const std::vector<oracle::Edge>& edges) {
  std::vector<WeightedGraph::EdgeSpec> edge_list;
  for (const auto& e : edges)
    edge_list.push_back({static_cast<std::uint32_t>(e.a), static_cast<std::uint32_t>(e.b), e.w});
  return WeightedGraph(static_cast<std::uint32_t>(n), edge_list);
}

std::vector<oracle::Edge> clique(int from, int size, double w = 1.0) {
  std::vector<oracle::Edge> e;
  for (int i = from; i < from + size; ++i)
    for (int j = i + 1; j < from + size; ++j) e.push_back({i, j, w});
  return e;
}

graph::BipartiteGraph bipartite(int pois, int cells, const std::vector<std::tuple<int, int, double>>& edges) {
  std::vector<graph::NodeInfo> p, c;
  for (int i = 0; i < pois; ++i) p.push_back({graph::NodeClass::poi, "p" + std::to_string(i)});
  for (int i = 0; i < cells; ++i) c.push_back({graph::NodeClass::cell, "c" + std::to_string(i)});
  std::vector<graph::BipartiteGraph::Edge> e;
  for (auto [a, b, w] : edges) e.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), w});
  return graph::BipartiteGraph(p, c, e);
}

}  // namespace

TEST(Modularity, OneCommunityIsZero) {
  std::mt19937_64 rng(1);
  auto edges = oracle::random_graph(rng, 8, 0.5);
  auto g = to_graph(8, edges);
  std::vector<int> one(8, 0);
  EXPECT_NEAR(modularity(g, one), 0.0, 1e-12);
}

TEST(Modularity, TwoDisjointCliquesIsHalf) {
  auto edges = clique(0, 5);
  auto more = clique(5, 5);
  edges.insert(edges.end(), more.begin(), more.end());
  auto g = to_graph(10, edges);
  std::vector<int> c{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  EXPECT_NEAR(modularity(g, c), 0.5, 1e-12);
}

TEST(Modularity, MatchesDoubleSumOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 6;
    auto edges = oracle::random_graph(rng, n, 0.6);
    if (trial % 5 == 0) edges.push_back({0, 0, 0.7});  // self-loop
    std::uniform_int_distribution<int> lab(0, 2);
    std::vector<int> c(n);
    for (auto& x : c) x = lab(rng);
    auto dense = renumber(c);
    for (double gamma : {1.0, 0.5, 2.0}) {
      const double expect = oracle::modularity_double_sum(oracle::adjacency(n, edges), dense, gamma);
      ASSERT_NEAR(modularity(to_graph(n, edges), dense, gamma), expect, 1e-12);
    }
  }
}

TEST(Modularity, EmptyGraphRejected) {
  EXPECT_THROW(modularity(WeightedGraph{}, std::vector<int>{}), EmptyGraphError);
}

TEST(Louvain, DisjointComponentsNeverMerged) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = oracle::random_graph(rng, 6, 0.7);
    auto b = oracle::random_graph(rng, 6, 0.7);
    for (auto& e : b) {
      e.a += 6;
      e.b += 6;
    }
    a.insert(a.end(), b.begin(), b.end());
    auto r = louvain(to_graph(12, a), 0.02, trial);  // very coarse resolution
    for (int i = 0; i < 6; ++i)
      for (int j = 6; j < 12; ++j) ASSERT_NE(r.partition.assignment[i], r.partition.assignment[j]);
  }
}

TEST(Louvain, RecoversPlantedBlocks) {
  auto edges = clique(0, 5, 2.0);
  auto b = clique(5, 5, 2.0);
  edges.insert(edges.end(), b.begin(), b.end());
  edges.push_back({0, 5, 0.3});
  edges.push_back({2, 8, 0.3});
  const auto A = oracle::adjacency(10, edges);
  const double best = oracle::exhaustive_max_modularity(A);
  auto r = louvain(to_graph(10, edges), 1.0, 9);
  const std::vector<int> planted{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  EXPECT_EQ(r.partition.assignment, planted);
  EXPECT_NEAR(r.modularity, best, 1e-12);
}

TEST(Louvain, DeterministicForSeed) {
  std::mt19937_64 rng(12);
  auto edges = oracle::random_graph(rng, 60, 0.08);
  auto g = to_graph(60, edges);
  auto a = louvain(g, 1.0, 77);
  auto b = louvain(g, 1.0, 77);
  EXPECT_EQ(a.partition, b.partition);
  EXPECT_EQ(a.modularity, b.modularity);
}

TEST(Louvain, ReportedModularityConsistentAndNonDecreasing) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto edges = oracle::random_graph(rng, 80, 0.06);
    auto g = to_graph(80, edges);
    for (double gamma : {0.5, 1.0, 2.0}) {
      auto r = louvain(g, gamma, trial);
      const double again = modularity(g, r.partition.assignment, gamma);
      ASSERT_NEAR(r.modularity, again, 1e-9 * std::max(1.0, std::abs(again)));
      for (std::size_t i = 1; i < r.level_modularity.size(); ++i)
        ASSERT_GE(r.level_modularity[i], r.level_modularity[i - 1] - 1e-12);
      // contiguous ids
      std::set<int> ids(r.partition.assignment.begin(), r.partition.assignment.end());
      ASSERT_EQ(*ids.rbegin() + 1, static_cast<int>(ids.size()));
    }
  }
}

TEST(Louvain, NearExhaustiveOptimumOnSmallGraphs) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 7 + trial % 3;
    auto edges = oracle::random_graph(rng, n, 0.45);
    if (edges.empty()) continue;
    const double best = oracle::exhaustive_max_modularity(oracle::adjacency(n, edges));
    auto r = louvain(to_graph(n, edges), 1.0, trial);
    ASSERT_GE(r.modularity, 0.95 * best - 1e-12);
  }
}

TEST(Louvain, HigherResolutionGivesMoreCommunities) {
  std::mt19937_64 rng(8);
  int conforming = 0, pairs = 0;
  for (int s = 0; s < 20; ++s) {
    auto edges = oracle::random_graph(rng, 120, 0.05);
    auto g = to_graph(120, edges);
    int prev = -1;
    for (double gamma : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      const int k = louvain(g, gamma, s).partition.community_count();
      if (prev >= 0) {
        ++pairs;
        if (k >= prev) ++conforming;
      }
      prev = k;
    }
  }
  EXPECT_GE(conforming, 0.9 * pairs);
}

TEST(Louvain, ZeroWeightGraphStaysSingletons) {
  auto g = to_graph(3, {{0, 1, 0.0}, {1, 2, 0.0}});
  auto r = louvain(g, 1.0, 0);
  EXPECT_EQ(r.partition.community_count(), 3);
  EXPECT_EQ(r.modularity, 0.0);
}

TEST(GephiShim, InverseMapping) {
  EXPECT_DOUBLE_EQ(gamma_from_gephi_resolution(50), 0.02);
  EXPECT_DOUBLE_EQ(gamma_from_gephi_resolution(1), 1.0);
  EXPECT_THROW(gamma_from_gephi_resolution(0), DomainError);
}

namespace {

Partition sized_partition(const std::vector<int>& sizes) {
  Partition p;
  for (int c = 0; c < static_cast<int>(sizes.size()); ++c)
    for (int i = 0; i < sizes[c]; ++i) p.assignment.push_back(c);
  return p;
}

}  // namespace

TEST(FilterLeading, AllBelowThreshold) {
  auto p = sized_partition({10, 20, 30});
  auto f = filter_leading(p);
  EXPECT_TRUE(f.leading.empty());
  EXPECT_EQ(f.residual.size(), 60u);
}

TEST(FilterLeading, SizeOrderedAndIdempotent) {
  auto p = sized_partition({100, 2500, 3000});
  auto f = filter_leading(p, 2000, 0.03);
  EXPECT_EQ(f.leading, (std::vector<int>{2, 1}));
  EXPECT_EQ(f.residual.size(), 100u);
  auto again = filter_leading(p, 2000, 0.03);
  EXPECT_EQ(again.leading, f.leading);
  EXPECT_EQ(again.residual, f.residual);
  auto labels = report_labels(p, f);
  EXPECT_EQ(labels[2], 1);
  EXPECT_EQ(labels[1], 2);
  EXPECT_EQ(labels[0], 3);
}

TEST(FilterLeading, ShareThresholdAndStrictSize) {
  // 2,001 nodes is "more than 2,000"; 2,000 is not. Shares: 2001/45001 < 5%.
  auto p = sized_partition({2000, 2001, 41000});
  auto f = filter_leading(p, 2000, 0.05);
  EXPECT_EQ(f.leading, (std::vector<int>{2}));
  auto g = filter_leading(p, 2000, 0.03);
  EXPECT_EQ(g.leading, (std::vector<int>{2, 1}));
}

TEST(CommunityStats, MatchesNaiveRecount) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution keep(0.25);
  std::uniform_real_distribution<double> w(0.5, 3);
  std::vector<std::tuple<int, int, double>> edges;
  for (int p = 0; p < 8; ++p)
    for (int c = 0; c < 30; ++c)
      if (keep(rng)) edges.emplace_back(p, c, w(rng));
  auto g = bipartite(8, 30, edges);
  auto r = louvain(g, 1.0, 5);
  auto f = filter_leading(r.partition, 5, 0.05);
  auto stats = community_stats(g, r.partition, f);
  ASSERT_EQ(static_cast<int>(stats.size()), r.partition.community_count());
  double share = 0;
  for (const auto& s : stats) {
    std::size_t nodes = 0, pois = 0, intra = 0;
    double wd = 0;
    for (std::uint32_t v = 0; v < g.node_count(); ++v) {
      if (r.partition.assignment[v] != s.community_id) continue;
      ++nodes;
      if (v < 8) ++pois;
      for (const auto& a : g.neighbors(v)) wd += a.weight;
    }
    for (auto [p, c, x] : edges)
      if (r.partition.assignment[p] == s.community_id && r.partition.assignment[8 + c] == s.community_id) ++intra;
    EXPECT_EQ(s.node_count, nodes);
    EXPECT_EQ(s.poi_count, pois);
    EXPECT_EQ(s.edge_count, intra);
    EXPECT_NEAR(s.average_weighted_degree, wd / nodes, 1e-12);
    EXPECT_LE(s.poi_count, s.node_count);
    share += s.share_of_network;
  }
  EXPECT_NEAR(share, 1.0, 1e-9);
  for (std::size_t i = 0; i < f.leading.size(); ++i) {
    EXPECT_TRUE(stats[i].leading);
    EXPECT_EQ(stats[i].label, static_cast<int>(i) + 1);
  }
}

TEST(CommunityStats, SingletonHasNoInternalEdges) {
  auto g = bipartite(2, 2, {{0, 0, 1.0}, {1, 1, 1.0}});
  Partition p;
  p.assignment = {0, 1, 2, 1};  // p0 alone, c0 alone
  auto stats = community_stats(g, p, filter_leading(p, 0, 0.0));
  for (const auto& s : stats) {
    if (s.node_count == 1) {
      EXPECT_EQ(s.edge_count, 0u);
      EXPECT_EQ(s.internal_modularity, 0.0);
    }
  }
}

TEST(PartitionIo, RoundTrip) {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution keep(0.3);
  std::vector<std::tuple<int, int, double>> edges;
  for (int p = 0; p < 6; ++p)
    for (int c = 0; c < 20; ++c)
      if (keep(rng)) edges.emplace_back(p, c, 1.0);
  auto g = bipartite(6, 20, edges);
  auto r = louvain(g, 1.0, 1);
  auto f = filter_leading(r.partition, 3, 0.0);
  std::stringstream s;
  write_partition(s, g, r.partition, f);
  auto back = read_partition(s, g);
  std::stringstream s2;
  write_partition(s2, g, back.partition, back.filter);
  EXPECT_EQ(s.str(), s2.str());
  EXPECT_EQ(back.filter.residual, f.residual);
}
