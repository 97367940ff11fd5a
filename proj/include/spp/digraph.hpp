#pragma once

#include <algorithm>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spp/errors.hpp"
#include "spp/rng.hpp"

namespace spp {

/// Directed edge (from, to): node `from` can send information to node `to`.
struct Edge {
  int from = 0;
  int to = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Directed graph on nodes 0..n-1 without self-loops.
///
/// Self-influence belongs to the weight matrices, so add-time rejects (i, i).
class DirectedGraph {
 public:
  explicit DirectedGraph(int n) : n_(n), out_(n), in_(n) {
    if (n < 1) throw InvalidSizeError("graph needs at least one node");
  }

  DirectedGraph(int n, const std::vector<Edge>& edges) : DirectedGraph(n) {
    for (const Edge& e : edges) add_edge(e.from, e.to);
  }

  int n() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  // Duplicate insertions are ignored.
  void add_edge(int from, int to) {
    if (from < 0 || from >= n_ || to < 0 || to >= n_) {
      throw DimensionError("edge (" + std::to_string(from) + "," +
                           std::to_string(to) + ") outside [0," +
                           std::to_string(n_) + ")");
    }
    if (from == to) throw StructureError("self-loops are not stored in a graph");
    if (!edges_.insert(Edge{from, to}).second) return;
    out_[from].push_back(to);
    in_[to].push_back(from);
  }

  bool has_edge(int from, int to) const { return edges_.count(Edge{from, to}) > 0; }

  std::vector<Edge> edges() const { return {edges_.begin(), edges_.end()}; }

  const std::vector<int>& out_neighbors(int i) const { return out_.at(i); }
  const std::vector<int>& in_neighbors(int i) const { return in_.at(i); }
  int in_degree(int i) const { return static_cast<int>(in_.at(i).size()); }
  int out_degree(int i) const { return static_cast<int>(out_.at(i).size()); }

  DirectedGraph reversed() const {
    DirectedGraph r(n_);
    for (const Edge& e : edges_) r.add_edge(e.to, e.from);
    return r;
  }

  bool is_symmetric() const {
    return std::all_of(edges_.begin(), edges_.end(),
                       [this](const Edge& e) { return has_edge(e.to, e.from); });
  }

  friend bool operator==(const DirectedGraph& a, const DirectedGraph& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_;
  }

 private:
  int n_;
  std::set<Edge> edges_;
  std::vector<std::vector<int>> out_;
  std::vector<std::vector<int>> in_;
};

/// Sorted set of node indices.
using RootSet = std::vector<int>;

namespace detail {

// Kosaraju's algorithm, iterative. Returns the component id of every node;
// ids are assigned in topological order of the condensation (sources first).
inline std::vector<int> strongly_connected_components(const DirectedGraph& g, int& count) {
  const int n = g.n();
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
    seen[s] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& nb = g.out_neighbors(v);
      if (next < nb.size()) {
        const int w = nb[next++];
        if (!seen[w]) {
          seen[w] = 1;
          stack.emplace_back(w, 0);
        }
      } else {
        order.push_back(v);
        stack.pop_back();
      }
    }
  }
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  count = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (comp[*it] >= 0) continue;
    std::vector<int> stack{*it};
    comp[*it] = count;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.in_neighbors(v)) {
        if (comp[w] < 0) {
          comp[w] = count;
          stack.push_back(w);
        }
      }
    }
    ++count;
  }
  return comp;
}

}  // namespace detail

/// Nodes from which every node is reachable along directed edges.
///
/// Such nodes exist iff the condensation has exactly one source component,
/// and then they are exactly the members of that component.
inline RootSet root_set(const DirectedGraph& g) {
  int count = 0;
  const std::vector<int> comp = detail::strongly_connected_components(g, count);
  std::vector<char> has_incoming(static_cast<std::size_t>(count), 0);
  for (const Edge& e : g.edges()) {
    if (comp[e.from] != comp[e.to]) has_incoming[comp[e.to]] = 1;
  }
  int sources = 0;
  int source = -1;
  for (int c = 0; c < count; ++c) {
    if (!has_incoming[c]) {
      ++sources;
      source = c;
    }
  }
  RootSet roots;
  if (sources != 1) return roots;
  for (int v = 0; v < g.n(); ++v)
    if (comp[v] == source) roots.push_back(v);
  return roots;
}

inline bool is_strongly_connected(const DirectedGraph& g) {
  return static_cast<int>(root_set(g).size()) == g.n();
}

/// Roots shared by the pull graph and the reversed push graph.
inline RootSet common_roots(const DirectedGraph& pull, const DirectedGraph& push) {
  if (pull.n() != push.n()) {
    throw DimensionError("pull graph has " + std::to_string(pull.n()) +
                         " nodes, push graph has " + std::to_string(push.n()));
  }
  const RootSet a = root_set(pull);
  const RootSet b = root_set(push.reversed());
  RootSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// ---------------------------------------------------------------------------
// Generators

inline DirectedGraph gen_ring(int n, bool bidirectional) {
  if (n < 1) throw InvalidSizeError("ring needs n >= 1");
  DirectedGraph g(n);
  if (n == 1) return g;
  for (int i = 0; i < n; ++i) {
    g.add_edge(i, (i + 1) % n);
    if (bidirectional) g.add_edge((i + 1) % n, i);
  }
  return g;
}

inline constexpr int kDefaultErdosRenyiAttempts = 1000;

/// Directed Erdos-Renyi graph, regenerated until strongly connected.
inline DirectedGraph gen_erdos_renyi(int n, double p, Stream& rng,
                                     int max_attempts = kDefaultErdosRenyiAttempts) {
  if (n < 1) throw InvalidSizeError("Erdos-Renyi graph needs n >= 1");
  if (!(p > 0.0 && p <= 1.0)) throw InputError("edge probability must lie in (0, 1]");
  if (max_attempts < 1) throw InputError("max_attempts must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    DirectedGraph g(n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (i != j && unif(rng) < p) g.add_edge(j, i);
    if (is_strongly_connected(g)) return g;
  }
  throw GenerationFailure("no strongly connected Erdos-Renyi graph", max_attempts);
}

/// k directed rings through hub node 0; the remaining n-1 nodes are split
/// into k contiguous groups whose sizes differ by at most one.
inline DirectedGraph gen_multi_subring(int n, int k) {
  if (k < 1) throw InvalidSizeError("need at least one sub-ring");
  if (n <= k) throw InvalidSizeError("multi-sub-ring needs n >= k + 1");
  DirectedGraph g(n);
  const int others = n - 1;
  const int base = others / k;
  const int extra = others % k;
  int next = 1;
  for (int r = 0; r < k; ++r) {
    const int size = base + (r < extra ? 1 : 0);
    int prev = 0;
    for (int s = 0; s < size; ++s) {
      g.add_edge(prev, next);
      prev = next++;
    }
    g.add_edge(prev, 0);
  }
  return g;
}

struct TreePair {
  DirectedGraph pull;  // parent -> child
  DirectedGraph push;  // child -> parent
};

/// Random recursive spanning tree rooted at node 0 and its reversal.
inline TreePair gen_spanning_tree_pair(int n, Stream& rng) {
  if (n < 1) throw InvalidSizeError("tree needs n >= 1");
  std::vector<int> order(static_cast<std::size_t>(n - 1));
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> placed{0};
  DirectedGraph pull(n);
  for (int v : order) {
    std::uniform_int_distribution<std::size_t> pick(0, placed.size() - 1);
    pull.add_edge(placed[pick(rng)], v);
    placed.push_back(v);
  }
  DirectedGraph push = pull.reversed();
  return {std::move(pull), std::move(push)};
}

// ---------------------------------------------------------------------------
// Edge-list text format: first line n, then one "j i" pair per line.

inline void write_edge_list(std::ostream& out, const DirectedGraph& g) {
  out << g.n() << '\n';
  for (const Edge& e : g.edges()) out << e.from << ' ' << e.to << '\n';
}

inline DirectedGraph read_edge_list(std::istream& in) {
  std::string line;
  int lineno = 0;
  int n = -1;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    if (n < 0) {
      if (!(ss >> n) || n < 1) throw ParseError("expected positive node count", lineno);
      continue;
    }
    Edge e;
    if (!(ss >> e.from >> e.to)) throw ParseError("expected 'j i' edge", lineno);
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n || e.from == e.to) {
      throw ParseError("edge out of range or self-loop", lineno);
    }
    edges.push_back(e);
  }
  if (n < 0) throw ParseError("empty edge list", lineno);
  return DirectedGraph(n, edges);
}

}  // namespace spp
