#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "walkability/csv.hpp"
#include "walkability/errors.hpp"
#include "walkability/graph.hpp"

namespace walkability::community {

/// Undirected weighted graph in CSR form with explicit self-loops. A loop of
/// weight w contributes 2w to its node's degree, matching A_ii = 2w.
class WeightedGraph {
 public:
  struct Arc {
    std::uint32_t to;
    double weight;
  };
  struct EdgeSpec {
    std::uint32_t a, b;
    double weight;
  };

  WeightedGraph() = default;

  /// Parallel edges are merged by summing their weights.
  WeightedGraph(std::uint32_t node_count, std::span<const EdgeSpec> edges)
      : loops_(node_count, 0.0), degree_(node_count, 0.0), offsets_(node_count + 1, 0) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> merged;
    for (const auto& e : edges) {
      if (e.a >= node_count || e.b >= node_count) throw ConsistencyError("edge endpoint out of range");
      if (e.a == e.b) {
        loops_[e.a] += e.weight;
      } else {
        merged[std::minmax(e.a, e.b)] += e.weight;
      }
    }
    for (const auto& [k, w] : merged) {
      ++offsets_[k.first + 1];
      ++offsets_[k.second + 1];
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    arcs_.resize(merged.size() * 2);
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    total_ = 0;
    for (const auto& [k, w] : merged) {
      arcs_[fill[k.first]++] = {k.second, w};
      arcs_[fill[k.second]++] = {k.first, w};
      degree_[k.first] += w;
      degree_[k.second] += w;
      total_ += w;
    }
    for (std::uint32_t v = 0; v < node_count; ++v) {
      degree_[v] += 2 * loops_[v];
      total_ += loops_[v];
    }
  }

  std::uint32_t node_count() const { return static_cast<std::uint32_t>(degree_.size()); }
  std::span<const Arc> neighbors(std::uint32_t v) const {
    return {arcs_.data() + offsets_[v], arcs_.data() + offsets_[v + 1]};
  }
  double self_loop(std::uint32_t v) const { return loops_[v]; }
  double degree(std::uint32_t v) const { return degree_[v]; }
  /// Sum of edge weights, each edge (and loop) counted once: m.
  double total_weight() const { return total_; }

 private:
  std::vector<double> loops_;
  std::vector<double> degree_;
  std::vector<std::uint32_t> offsets_;
  std::vector<Arc> arcs_;
  double total_ = 0;
};

inline WeightedGraph to_weighted(const graph::BipartiteGraph& g) {
  std::vector<WeightedGraph::EdgeSpec> edges;
  edges.reserve(g.edge_count());
  for (const auto& e : g.edges()) edges.push_back({e.poi, e.cell, e.weight});
  return WeightedGraph(g.node_count(), edges);
}

/// Node -> community assignment with dense ids starting at 0.
struct Partition {
  std::vector<int> assignment;
  double resolution = 1.0;
  std::uint64_t seed = 0;

  int community_count() const {
    return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  }
  bool operator==(const Partition&) const = default;
};

/// Relabels communities 0..k-1 in order of first appearance.
inline std::vector<int> renumber(std::span<const int> labels) {
  std::unordered_map<int, int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = map.try_emplace(labels[i], static_cast<int>(map.size())).first->second;
  }
  return out;
}

/// Gephi-style resolution r (larger r, larger communities) to the modularity
/// resolution gamma used here.
inline double gamma_from_gephi_resolution(double r) {
  if (!(r > 0)) throw DomainError("gephi resolution must be positive");
  return 1.0 / r;
}

/// Generalized modularity Q(gamma) = sum_c [ W_c / m - gamma (K_c / 2m)^2 ]
/// where W_c is the internal edge weight and K_c the total degree of c.
inline double modularity(const WeightedGraph& g, std::span<const int> assignment, double gamma = 1.0) {
  if (g.node_count() == 0) throw EmptyGraphError("modularity of an empty graph");
  if (assignment.size() != g.node_count()) throw ConsistencyError("partition does not cover the graph");
  const double m = g.total_weight();
  if (m <= 0) return 0.0;
  const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<double> internal(k, 0.0), tot(k, 0.0);
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    const int c = assignment[v];
    tot[c] += g.degree(v);
    internal[c] += g.self_loop(v);
    for (const auto& a : g.neighbors(v)) {
      if (a.to > v && assignment[a.to] == c) internal[c] += a.weight;
    }
  }
  double q = 0;
  for (int c = 0; c < k; ++c) q += internal[c] / m - gamma * (tot[c] / (2 * m)) * (tot[c] / (2 * m));
  return q;
}

inline double modularity(const graph::BipartiteGraph& g, const Partition& p, double gamma = 1.0) {
  if (g.empty()) throw EmptyGraphError("modularity of an empty graph");
  return modularity(to_weighted(g), p.assignment, gamma);
}

struct LouvainResult {
  Partition partition;
  double modularity = 0.0;
  /// Q(gamma) of the original graph after each full pass.
  std::vector<double> level_modularity;
};

namespace detail {

// Local-moving phase on one level, starting from the ids already in comm
// (each below n). Returns true if any node changed community.
inline bool move_nodes(const WeightedGraph& g, double gamma, std::mt19937_64& rng, std::vector<int>& comm) {
  const std::uint32_t n = g.node_count();
  const double m2 = 2 * g.total_weight();
  std::vector<double> tot(n, 0.0);
  for (std::uint32_t v = 0; v < n; ++v) tot[comm[v]] += g.degree(v);
  if (m2 <= 0) return false;

  std::vector<std::uint32_t> order(n);
  std::vector<double> link(n, 0.0);
  std::vector<char> is_touched(n, 0);
  std::vector<int> touched;
  bool any_move = false;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    std::iota(order.begin(), order.end(), 0u);
    for (std::uint32_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::uint32_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    std::size_t moves = 0;
    for (auto v : order) {
      const int current = comm[v];
      const double k = g.degree(v);
      touched.clear();
      for (const auto& a : g.neighbors(v)) {
        const int c = comm[a.to];
        if (!is_touched[c]) {
          is_touched[c] = 1;
          touched.push_back(c);
        }
        link[c] += a.weight;
      }
      tot[current] -= k;
      int best = current;
      double best_gain = link[current] - gamma * tot[current] * k / m2;
      std::sort(touched.begin(), touched.end());
      for (int c : touched) {
        if (c == current) continue;
        const double gain = link[c] - gamma * tot[c] * k / m2;
        if (gain > best_gain) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += k;
      comm[v] = best;
      for (int c : touched) {
        link[c] = 0.0;
        is_touched[c] = 0;
      }
      if (best != current) ++moves;
    }
    if (moves == 0) break;
    any_move = true;
  }
  return any_move;
}

// Splits each community of `within` into well-merged pieces: every node
// starts alone and a node that is still alone may join a neighbouring piece
// of the same community when that raises Q(gamma). Returns dense piece ids.
inline std::vector<int> refine(const WeightedGraph& g, double gamma, std::mt19937_64& rng,
                               std::span<const int> within) {
  const std::uint32_t n = g.node_count();
  const double m2 = 2 * g.total_weight();
  std::vector<int> piece(n);
  std::iota(piece.begin(), piece.end(), 0);
  if (m2 <= 0) return piece;
  std::vector<double> tot(n);
  std::vector<std::uint32_t> piece_size(n, 1);
  for (std::uint32_t v = 0; v < n; ++v) tot[v] = g.degree(v);

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  for (std::uint32_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::uint32_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<double> link(n, 0.0);
  std::vector<char> is_touched(n, 0);
  std::vector<int> touched;
  for (auto v : order) {
    if (piece_size[piece[v]] != 1) continue;
    const double k = g.degree(v);
    touched.clear();
    for (const auto& a : g.neighbors(v)) {
      if (within[a.to] != within[v]) continue;
      const int c = piece[a.to];
      if (c == piece[v]) continue;
      if (!is_touched[c]) {
        is_touched[c] = 1;
        touched.push_back(c);
      }
      link[c] += a.weight;
    }
    std::sort(touched.begin(), touched.end());
    const int own = piece[v];
    // Staying alone has gain 0 relative to the removed state.
    const double base = -gamma * (tot[own] - k) * k / m2;
    int best = own;
    double best_gain = base;
    for (int c : touched) {
      const double gain = link[c] - gamma * tot[c] * k / m2;
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
    }
    if (best != own) {
      tot[own] -= k;
      --piece_size[own];
      tot[best] += k;
      ++piece_size[best];
      piece[v] = best;
    }
    for (int c : touched) {
      link[c] = 0.0;
      is_touched[c] = 0;
    }
  }
  return renumber(piece);
}

inline constexpr std::size_t kKlMaxSize = 400;

// Two-way split of a node group, tuned in place against Q(gamma). Arcs
// leaving the group are ignored; degrees are the full-graph degrees.
class GroupSplit {
 public:
  GroupSplit(const WeightedGraph& g, double gamma, std::vector<int>& slot, std::span<const std::uint32_t> nodes,
             std::vector<char> side)
      : g_(g), gamma_(gamma), m_(g.total_weight()), slot_(slot), nodes_(nodes), side_(std::move(side)) {
    const std::size_t size = nodes_.size();
    for (std::size_t i = 0; i < size; ++i) slot_[nodes_[i]] = static_cast<int>(i);
    k_.resize(size);
    inner_.assign(size, 0.0);
    link1_.assign(size, 0.0);
    loop_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      const auto v = nodes_[i];
      k_[i] = g.degree(v);
      loop_[i] = g.self_loop(v);
      tot_[side_[i]] += k_[i];
      w_in_[side_[i]] += loop_[i];
      for (const auto& a : g.neighbors(v)) {
        const int j = slot_[a.to];
        if (j < 0) continue;
        inner_[i] += a.weight;
        if (side_[j]) link1_[i] += a.weight;
        if (a.to > v && side_[j] == side_[i]) w_in_[side_[i]] += a.weight;
      }
    }
  }
  GroupSplit(const GroupSplit&) = delete;
  GroupSplit& operator=(const GroupSplit&) = delete;
  ~GroupSplit() {
    for (auto v : nodes_) slot_[v] = -1;
  }

  double q() const { return term(w_in_[0], tot_[0]) + term(w_in_[1], tot_[1]); }
  bool both_sides() const { return tot_[0] > 0 && tot_[1] > 0 && std::count(side_.begin(), side_.end(), 1) > 0 &&
                                   std::count(side_.begin(), side_.end(), 0) > 0; }
  const std::vector<char>& side() const { return side_; }

  /// Kernighan-Lin passes on small groups, plain positive-gain moves on
  /// large ones.
  void tune() {
    const std::size_t size = nodes_.size();
    if (size > kKlMaxSize) {
      for (bool again = true; again;) {
        again = false;
        for (std::size_t i = 0; i < size; ++i) {
          if (move_gain(i) > 1e-15) {
            move(i);
            again = true;
          }
        }
      }
      return;
    }
    for (int round = 0; round < 32; ++round) {
      std::vector<char> moved(size, 0);
      std::vector<std::size_t> seq;
      double run = 0, best_run = 0;
      std::size_t best_len = 0;
      for (std::size_t step = 0; step < size; ++step) {
        std::size_t pick = 0;
        double pick_gain = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < size; ++i) {
          if (moved[i]) continue;
          const double d = move_gain(i);
          if (d > pick_gain) {
            pick_gain = d;
            pick = i;
          }
        }
        move(pick);
        moved[pick] = 1;
        seq.push_back(pick);
        run += pick_gain;
        if (run > best_run + 1e-15) {
          best_run = run;
          best_len = seq.size();
        }
      }
      for (std::size_t t = seq.size(); t > best_len; --t) move(seq[t - 1]);
      if (best_len == 0) break;
    }
  }

 private:
  double term(double w, double t) const { return w / m_ - gamma_ * (t / (2 * m_)) * (t / (2 * m_)); }
  double link_to(std::size_t i, int s) const { return s ? link1_[i] : inner_[i] - link1_[i]; }
  double move_gain(std::size_t i) const {
    const int from = side_[i], to = 1 - from;
    const double wf = w_in_[from] - link_to(i, from) - loop_[i];
    const double wt = w_in_[to] + link_to(i, to) + loop_[i];
    return term(wf, tot_[from] - k_[i]) + term(wt, tot_[to] + k_[i]) - q();
  }
  void move(std::size_t i) {
    const int from = side_[i], to = 1 - from;
    w_in_[from] -= link_to(i, from) + loop_[i];
    w_in_[to] += link_to(i, to) + loop_[i];
    tot_[from] -= k_[i];
    tot_[to] += k_[i];
    side_[i] = static_cast<char>(to);
    const double sign = to ? 1.0 : -1.0;
    for (const auto& a : g_.neighbors(nodes_[i])) {
      const int j = slot_[a.to];
      if (j >= 0) link1_[j] += sign * a.weight;
    }
  }

  const WeightedGraph& g_;
  double gamma_, m_;
  std::vector<int>& slot_;
  std::span<const std::uint32_t> nodes_;
  std::vector<char> side_;
  std::vector<double> k_, inner_, link1_, loop_;
  double w_in_[2] = {0, 0}, tot_[2] = {0, 0};
};

// Sign pattern of the leading eigenvector of the generalized modularity
// matrix restricted to a group, by shifted power iteration.
inline std::vector<char> spectral_sides(const WeightedGraph& g, double gamma, std::span<const std::uint32_t> nodes,
                                        std::span<const int> slot, std::mt19937_64& rng) {
  const std::size_t size = nodes.size();
  const double m2 = 2 * g.total_weight();
  std::vector<double> k(size), diag(size);
  double big_k = 0, shift = 0;
  for (std::size_t i = 0; i < size; ++i) big_k += k[i] = g.degree(nodes[i]);
  for (std::size_t i = 0; i < size; ++i) {
    double inner = 2 * g.self_loop(nodes[i]);
    for (const auto& a : g.neighbors(nodes[i]))
      if (slot[a.to] >= 0) inner += a.weight;
    diag[i] = inner - gamma * k[i] * big_k / m2;
    shift = std::max(shift, inner + gamma * k[i] * big_k / m2 + std::abs(diag[i]));
  }
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<double> x(size), y(size);
  for (auto& xi : x) xi = unit(rng);
  for (int iter = 0; iter < 500; ++iter) {
    double kx = 0;
    for (std::size_t i = 0; i < size; ++i) kx += k[i] * x[i];
    double norm = 0;
    for (std::size_t i = 0; i < size; ++i) {
      double ax = 2 * g.self_loop(nodes[i]) * x[i];
      for (const auto& a : g.neighbors(nodes[i]))
        if (slot[a.to] >= 0) ax += a.weight * x[slot[a.to]];
      y[i] = ax - gamma * k[i] * kx / m2 + (shift - diag[i]) * x[i];
      norm += y[i] * y[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0) break;
    double change = 0;
    for (std::size_t i = 0; i < size; ++i) {
      y[i] /= norm;
      change = std::max(change, std::abs(y[i] - x[i]));
    }
    x.swap(y);
    if (change < 1e-10) break;
  }
  std::vector<char> side(size);
  for (std::size_t i = 0; i < size; ++i) side[i] = x[i] > 0 ? 1 : 0;
  return side;
}

// Multi-way Kernighan-Lin over single vertices: each round moves every
// vertex once to its best community (or a new one), accepting losses, then
// keeps the best prefix of the round. Cost per round is O(n (n + m)), so
// this is meant for small graphs. Returns true if comm changed.
inline bool vertex_mover(const WeightedGraph& g, double gamma, std::vector<int>& comm) {
  const std::uint32_t n = g.node_count();
  const double m = g.total_weight();
  if (m <= 0 || n < 2) return false;
  comm = renumber(comm);
  // Ids can grow up to n distinct communities plus fresh ones per step.
  std::vector<double> tot(2 * n + 1, 0.0);
  for (std::uint32_t v = 0; v < n; ++v) tot[comm[v]] += g.degree(v);
  std::vector<double> link(2 * n + 1, 0.0);
  auto best_move = [&](std::uint32_t v, std::vector<int>& touched) {
    touched.clear();
    for (const auto& a : g.neighbors(v)) {
      const int c = comm[a.to];
      if (link[c] == 0.0) touched.push_back(c);
      link[c] += a.weight;
    }
    const int own = comm[v];
    const double k = g.degree(v);
    const double l_own = link[own];
    // Moving into an empty community is always available.
    int target = -1;
    double gain = -l_own / m - gamma * k * (0 - tot[own] + k) / (2 * m * m);
    std::sort(touched.begin(), touched.end());
    for (int c : touched) {
      if (c == own) continue;
      const double d = (link[c] - l_own) / m - gamma * k * (tot[c] - tot[own] + k) / (2 * m * m);
      if (d > gain) {
        gain = d;
        target = c;
      }
    }
    for (int c : touched) link[c] = 0.0;
    return std::pair{target, gain};
  };
  auto free_id = [&] {
    std::vector<char> used(2 * n + 1, 0);
    for (int c : comm) used[c] = 1;
    return static_cast<int>(std::find(used.begin(), used.end(), 0) - used.begin());
  };

  bool changed = false;
  std::vector<int> touched;
  for (int round = 0; round < 64; ++round) {
    const std::vector<int> start = comm;
    std::vector<char> moved(n, 0);
    double run = 0, best_run = 0;
    std::vector<int> best = comm;
    for (std::uint32_t step = 0; step < n; ++step) {
      std::uint32_t pick = n;
      int pick_target = -1;
      double pick_gain = -std::numeric_limits<double>::infinity();
      for (std::uint32_t v = 0; v < n; ++v) {
        if (moved[v]) continue;
        auto [target, gain] = best_move(v, touched);
        if (gain > pick_gain) {
          pick_gain = gain;
          pick = v;
          pick_target = target;
        }
      }
      const int to = pick_target < 0 ? free_id() : pick_target;
      const double k = g.degree(pick);
      tot[comm[pick]] -= k;
      tot[to] += k;
      comm[pick] = to;
      moved[pick] = 1;
      run += pick_gain;
      if (run > best_run + 1e-15) {
        best_run = run;
        best = comm;
      }
    }
    comm = renumber(best);
    std::fill(tot.begin(), tot.end(), 0.0);
    for (std::uint32_t v = 0; v < n; ++v) tot[comm[v]] += g.degree(v);
    if (best_run <= 1e-12) {
      comm = renumber(start);
      break;
    }
    changed = true;
  }
  return changed;
}

// Improves a partition with two-way moves that single-node local moving
// cannot make. Every community is offered a spectral split, and every pair
// of adjacent communities has its shared boundary retuned (which may also
// merge the pair). Changes are kept only when they raise Q(gamma). Returns
// true if comm changed; ids are not dense afterwards.
inline bool polish(const WeightedGraph& g, double gamma, std::mt19937_64& rng, std::vector<int>& comm) {
  const std::uint32_t n = g.node_count();
  if (g.total_weight() <= 0 || n == 0) return false;
  constexpr double kEps = 1e-12;
  std::vector<int> slot(n, -1);
  bool changed = false;
  int next_id = *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<std::vector<std::uint32_t>> members(next_id);
  for (std::uint32_t v = 0; v < n; ++v) members[comm[v]].push_back(v);

  for (int c = 0; c < static_cast<int>(members.size()); ++c) {
    const auto& nodes = members[c];
    if (nodes.size() < 2) continue;
    for (std::size_t i = 0; i < nodes.size(); ++i) slot[nodes[i]] = static_cast<int>(i);
    auto sides = spectral_sides(g, gamma, nodes, slot, rng);
    GroupSplit whole(g, gamma, slot, nodes, std::vector<char>(nodes.size(), 0));
    const double before = whole.q();
    GroupSplit split(g, gamma, slot, nodes, std::move(sides));
    split.tune();
    if (!split.both_sides() || split.q() <= before + kEps) continue;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (split.side()[i]) comm[nodes[i]] = next_id;
    ++next_id;
    changed = true;
  }

  // Boundary retuning between adjacent pairs, visited in id order.
  std::set<std::pair<int, int>> pairs;
  for (std::uint32_t v = 0; v < n; ++v)
    for (const auto& a : g.neighbors(v))
      if (comm[v] != comm[a.to]) pairs.insert(std::minmax(comm[v], comm[a.to]));
  for (auto [a, b] : pairs) {
    std::vector<std::uint32_t> nodes;
    std::vector<char> sides;
    for (std::uint32_t v = 0; v < n; ++v) {
      if (comm[v] == a || comm[v] == b) {
        nodes.push_back(v);
        sides.push_back(comm[v] == b ? 1 : 0);
      }
    }
    if (nodes.empty() || std::count(sides.begin(), sides.end(), 1) == 0 ||
        std::count(sides.begin(), sides.end(), 0) == 0)
      continue;  // an earlier retune merged or emptied one of them
    // A fresh spectral start is only affordable on small unions.
    std::vector<char> fresh;
    if (nodes.size() <= kKlMaxSize) {
      for (std::size_t i = 0; i < nodes.size(); ++i) slot[nodes[i]] = static_cast<int>(i);
      fresh = spectral_sides(g, gamma, nodes, slot, rng);
      for (auto v : nodes) slot[v] = -1;
    }
    GroupSplit split(g, gamma, slot, nodes, std::move(sides));
    const double before = split.q();
    split.tune();
    std::vector<char> result = split.side();
    double after = split.q();
    if (!fresh.empty()) {
      GroupSplit other(g, gamma, slot, nodes, std::move(fresh));
      other.tune();
      if (other.q() > after + kEps) {
        after = other.q();
        result = other.side();
      }
    }
    if (after <= before + kEps) continue;
    for (std::size_t i = 0; i < nodes.size(); ++i) comm[nodes[i]] = result[i] ? b : a;
    changed = true;
  }
  if (n <= kKlMaxSize && vertex_mover(g, gamma, comm)) changed = true;
  return changed;
}

inline WeightedGraph aggregate(const WeightedGraph& g, std::span<const int> comm, int k) {
  std::vector<WeightedGraph::EdgeSpec> edges;
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    const auto cv = static_cast<std::uint32_t>(comm[v]);
    if (g.self_loop(v) != 0.0) edges.push_back({cv, cv, g.self_loop(v)});
    for (const auto& a : g.neighbors(v)) {
      if (a.to > v) edges.push_back({cv, static_cast<std::uint32_t>(comm[a.to]), a.weight});
    }
  }
  return WeightedGraph(static_cast<std::uint32_t>(k), edges);
}

}  // namespace detail

/// Two-phase Louvain maximization of Q(resolution). Nodes are visited in a
/// seeded shuffled order each sweep; ties keep the current community, then
/// prefer the lowest community id.
inline LouvainResult louvain(const WeightedGraph& g, double resolution = 1.0, std::uint64_t seed = 0) {
  if (!(resolution > 0)) throw DomainError("resolution must be positive");
  LouvainResult out;
  out.partition.resolution = resolution;
  out.partition.seed = seed;
  std::vector<int> membership(g.node_count());
  std::iota(membership.begin(), membership.end(), 0);
  if (g.node_count() == 0) return out;

  std::mt19937_64 rng(seed);
  // The first pass is the classic two-phase hierarchy. Each pass ends with a
  // spectral bisection attempt on every community. Later passes split each
  // community into refined pieces, aggregate those, and rerun the hierarchy
  // from the previous communities, so a whole piece can leave a community it
  // joined too early. Stops once Q stalls.
  double best_q = -std::numeric_limits<double>::infinity();
  std::vector<int> best = membership;
  for (int pass = 0; pass < 32; ++pass) {
    // node_of maps each original node to its node on the current level.
    std::vector<int> node_of(g.node_count());
    WeightedGraph level;
    std::vector<int> comm;
    if (pass == 0) {
      std::iota(node_of.begin(), node_of.end(), 0);
      level = g;
      comm = node_of;
    } else {
      node_of = detail::refine(g, resolution, rng, membership);
      const int k = *std::max_element(node_of.begin(), node_of.end()) + 1;
      level = detail::aggregate(g, node_of, k);
      comm.assign(k, 0);
      for (std::uint32_t v = 0; v < g.node_count(); ++v) comm[node_of[v]] = membership[v];
    }
    for (int depth = 0;; ++depth) {
      const bool moved = detail::move_nodes(level, resolution, rng, comm);
      auto dense = renumber(comm);
      const int k = dense.empty() ? 0 : *std::max_element(dense.begin(), dense.end()) + 1;
      for (auto& c : node_of) c = dense[c];
      if ((!moved && depth > 0) || k == static_cast<int>(level.node_count())) break;
      level = detail::aggregate(level, dense, k);
      comm.resize(k);
      std::iota(comm.begin(), comm.end(), 0);
    }
    membership = node_of;
    detail::polish(g, resolution, rng, membership);
    membership = renumber(membership);
    const double q = modularity(g, membership, resolution);
    out.level_modularity.push_back(q);
    if (q <= best_q + 1e-12) break;
    best_q = q;
    best = membership;
  }
  out.partition.assignment = renumber(best);
  out.modularity = modularity(g, out.partition.assignment, resolution);
  return out;
}

inline LouvainResult louvain(const graph::BipartiteGraph& g, double resolution = 1.0, std::uint64_t seed = 0) {
  return louvain(to_weighted(g), resolution, seed);
}

/// Community ids ordered by descending size; equal sizes keep id order.
inline std::vector<int> communities_by_size(const Partition& p) {
  std::vector<std::size_t> size(p.community_count(), 0);
  for (int c : p.assignment) ++size[c];
  std::vector<int> order(size.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return size[a] > size[b]; });
  return order;
}

struct LeadingFilter {
  /// Leading community ids; position i carries report label i + 1.
  std::vector<int> leading;
  std::vector<std::uint32_t> residual;
};

inline constexpr std::size_t kDefaultMinNodes = 2000;
inline constexpr double kDefaultMinShare = 0.03;

/// Leading communities have more than min_nodes members and at least
/// min_share of all nodes. Everything else is residual.
inline LeadingFilter filter_leading(const Partition& p, std::size_t min_nodes = kDefaultMinNodes,
                                    double min_share = kDefaultMinShare) {
  LeadingFilter out;
  const auto n = p.assignment.size();
  std::vector<std::size_t> size(p.community_count(), 0);
  for (int c : p.assignment) ++size[c];
  std::vector<char> is_leading(size.size(), 0);
  for (int c : communities_by_size(p)) {
    if (size[c] > min_nodes && static_cast<double>(size[c]) >= min_share * static_cast<double>(n)) {
      out.leading.push_back(c);
      is_leading[c] = 1;
    }
  }
  for (std::uint32_t v = 0; v < n; ++v) {
    if (!is_leading[p.assignment[v]]) out.residual.push_back(v);
  }
  return out;
}

/// Report label per community: leading ones 1..k in size order, the rest
/// continue the numbering by size.
inline std::vector<int> report_labels(const Partition& p, const LeadingFilter& f) {
  std::vector<int> label(p.community_count(), 0);
  std::vector<char> taken(label.size(), 0);
  int next = 1;
  for (int c : f.leading) {
    label[c] = next++;
    taken[c] = 1;
  }
  for (int c : communities_by_size(p)) {
    if (!taken[c]) label[c] = next++;
  }
  return label;
}

struct CommunityStats {
  int community_id = 0;  // partition id
  int label = 0;         // report label
  bool leading = false;
  std::size_t node_count = 0;
  std::size_t edge_count = 0;  // intra-community
  double internal_modularity = 0.0;
  double average_weighted_degree = 0.0;
  double share_of_network = 0.0;
  std::size_t poi_count = 0;
};

/// Subgraph induced by `members` (global node ids), renumbered 0..n-1.
inline WeightedGraph induced_subgraph(const graph::BipartiteGraph& g, std::span<const std::uint32_t> members) {
  std::unordered_map<std::uint32_t, std::uint32_t> local;
  for (std::uint32_t i = 0; i < members.size(); ++i) local.emplace(members[i], i);
  std::vector<WeightedGraph::EdgeSpec> edges;
  for (auto v : members) {
    for (const auto& a : g.neighbors(v)) {
      if (a.to > v) {
        if (auto it = local.find(a.to); it != local.end()) edges.push_back({local.at(v), it->second, a.weight});
      }
    }
  }
  return WeightedGraph(static_cast<std::uint32_t>(members.size()), edges);
}

/// Per-community statistics for every community, leading ones first in label
/// order. Internal modularity is the Q(1) that Louvain (same seed) reaches on
/// the community's induced subgraph; weighted degrees are taken in the full
/// graph.
inline std::vector<CommunityStats> community_stats(const graph::BipartiteGraph& g, const Partition& p,
                                                   const LeadingFilter& f) {
  if (p.assignment.size() != g.node_count()) throw ConsistencyError("partition does not cover the graph");
  const auto labels = report_labels(p, f);
  const int k = p.community_count();
  std::vector<std::vector<std::uint32_t>> members(k);
  for (std::uint32_t v = 0; v < g.node_count(); ++v) members[p.assignment[v]].push_back(v);
  std::vector<CommunityStats> out(k);
  for (int c = 0; c < k; ++c) {
    auto& s = out[c];
    s.community_id = c;
    s.label = labels[c];
    s.node_count = members[c].size();
    s.share_of_network = static_cast<double>(s.node_count) / static_cast<double>(g.node_count());
    double wd = 0;
    for (auto v : members[c]) {
      wd += g.weighted_degree(v);
      if (g.is_poi(v)) ++s.poi_count;
    }
    s.average_weighted_degree = s.node_count ? wd / static_cast<double>(s.node_count) : 0.0;
  }
  for (const auto& e : g.edges()) {
    if (p.assignment[e.poi] == p.assignment[e.cell]) ++out[p.assignment[e.poi]].edge_count;
  }
  for (int c : f.leading) out[c].leading = true;
  for (int c = 0; c < k; ++c) {
    if (out[c].edge_count == 0) continue;
    const auto sub = induced_subgraph(g, members[c]);
    out[c].internal_modularity = louvain(sub, 1.0, p.seed).modularity;
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
  return out;
}

/// Partition export: node_id, node_class, community_id (report label), is_leading.
inline void write_partition(std::ostream& out, const graph::BipartiteGraph& g, const Partition& p,
                            const LeadingFilter& f) {
  const auto labels = report_labels(p, f);
  std::vector<char> leading(p.community_count(), 0);
  for (int c : f.leading) leading[c] = 1;
  csv::write_row(out, {"node_id", "node_class", "community_id", "is_leading"});
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    const int c = p.assignment[v];
    csv::write_row(out, {g.node(v).id, graph::to_string(g.node(v).kind), std::to_string(labels[c]),
                         leading[c] ? "true" : "false"});
  }
}

struct ImportedPartition {
  Partition partition;  // ids are label - 1
  LeadingFilter filter;
};

/// Reads a partition file back against the graph it was written for.
inline ImportedPartition read_partition(std::istream& in, const graph::BipartiteGraph& g) {
  csv::Reader reader(in);
  csv::Row row;
  if (!reader.next(row)) throw FormatError("partition file: missing header");
  csv::Header h(row);
  const auto c_id = h.require("node_id", "partition file"), c_cls = h.require("node_class", "partition file"),
             c_com = h.require("community_id", "partition file"), c_lead = h.require("is_leading", "partition file");
  ImportedPartition out;
  out.partition.assignment.assign(g.node_count(), -1);
  std::map<int, bool> leading;
  while (reader.next(row)) {
    if (row.size() < 4) throw FormatError("partition file line " + std::to_string(reader.record_line()));
    auto v = row[c_cls] == "poi" ? g.find_poi(row[c_id]) : g.find_cell(row[c_id]);
    auto label = csv::to_int<int>(row[c_com]);
    if (!v || !label || *label < 1) throw ConsistencyError("partition row does not match graph: " + row[c_id]);
    out.partition.assignment[*v] = *label - 1;
    leading[*label - 1] = row[c_lead] == "true";
  }
  for (int c : out.partition.assignment) {
    if (c < 0) throw ConsistencyError("partition file does not cover every graph node");
  }
  for (const auto& [c, lead] : leading) {
    if (lead) out.filter.leading.push_back(c);
  }
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    if (!leading[out.partition.assignment[v]]) out.filter.residual.push_back(v);
  }
  return out;
}

}  // namespace walkability::community
