#pragma once

#include "agp/common.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>
#include <vector>

namespace agp {

// Directed communication graph over the real agents. Nodes are 0-based
// internally; the text file format is 1-based (see io.hpp). Every node must
// carry a self-loop and the graph must be strongly connected.
class ReferenceGraph {
 public:
  ReferenceGraph() = default;

  int node_count() const { return n_; }
  const std::vector<int>& out_neighbors(int i) const { return out_[i]; }
  const std::vector<int>& in_neighbors(int i) const { return in_[i]; }
  int out_degree(int i) const { return static_cast<int>(out_[i].size()); }
  int max_out_degree() const {
    int m = 0;
    for (int i = 0; i < n_; ++i) m = std::max(m, out_degree(i));
    return m;
  }
  bool has_edge(int i, int j) const {
    return std::binary_search(out_[i].begin(), out_[i].end(), j);
  }
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n_; ++i)
      for (int j : out_[i]) e.emplace_back(i, j);
    return e;
  }

  friend ReferenceGraph build_reference_graph(int n,
                                              const std::set<std::pair<int, int>>& edges,
                                              bool add_self_loops);

 private:
  int n_ = 0;
  std::vector<std::vector<int>> out_;  // sorted adjacency
  std::vector<std::vector<int>> in_;
};

namespace detail {

inline std::vector<char> reachable_from(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<char> seen(adj.size(), 0);
  std::vector<int> stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

}  // namespace detail

// Validates indices, installs self-loops (mandatory; `add_self_loops=false`
// requires them to be present in `edges`), and rejects graphs that are not
// strongly connected. Connectivity check is two reachability sweeps: forward
// from node 0 and forward from node 0 in the transposed graph.
inline ReferenceGraph build_reference_graph(int n,
                                            const std::set<std::pair<int, int>>& edges,
                                            bool add_self_loops = true) {
  if (n < 1) throw IndexOutOfRange("node count must be >= 1, got " + std::to_string(n));
  std::vector<std::set<int>> out(n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw IndexOutOfRange("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") out of range for n=" + std::to_string(n));
    out[i].insert(j);
  }
  for (int i = 0; i < n; ++i) {
    if (add_self_loops) {
      out[i].insert(i);
    } else if (!out[i].count(i)) {
      throw MissingSelfLoop("node " + std::to_string(i + 1) + " has no self-loop");
    }
  }

  ReferenceGraph g;
  g.n_ = n;
  g.out_.assign(n, {});
  g.in_.assign(n, {});
  for (int i = 0; i < n; ++i)
    for (int j : out[i]) {
      g.out_[i].push_back(j);
      g.in_[j].push_back(i);
    }
  for (auto& v : g.in_) std::sort(v.begin(), v.end());

  const auto fwd = detail::reachable_from(g.out_, 0);
  for (int v = 0; v < n; ++v)
    if (!fwd[v])
      throw NotStronglyConnected("no path from node 1 to node " + std::to_string(v + 1));
  std::vector<std::vector<int>> transpose(n);
  for (int i = 0; i < n; ++i)
    for (int j : g.out_[i]) transpose[j].push_back(i);
  const auto bwd = detail::reachable_from(transpose, 0);
  for (int v = 0; v < n; ++v)
    if (!bwd[v])
      throw NotStronglyConnected("no path from node " + std::to_string(v + 1) + " to node 1");
  return g;
}

// Reference graph plus one chain of `tau_msg_max` virtual relay nodes per
// agent. Node (agent i, chain position r) lives at flat index r*n + i, so the
// real agents occupy indices 0..n-1 and chain stage r occupies block r.
// A message in chain stage r reaches its real agent in r more steps.
class AugmentedGraph {
 public:
  AugmentedGraph(ReferenceGraph base, int tau_msg_max)
      : base_(std::move(base)), tau_msg_max_(tau_msg_max) {
    if (tau_msg_max < 0)
      throw IndexOutOfRange("tau_msg_max must be >= 0, got " + std::to_string(tau_msg_max));
  }

  const ReferenceGraph& base() const { return base_; }
  int real_count() const { return base_.node_count(); }
  int tau_msg_max() const { return tau_msg_max_; }
  int node_count() const { return base_.node_count() * (tau_msg_max_ + 1); }
  int flat_index(int agent, int stage) const { return stage * base_.node_count() + agent; }

 private:
  ReferenceGraph base_;
  int tau_msg_max_;
};

inline AugmentedGraph augment(ReferenceGraph g, int tau_msg_max) {
  return AugmentedGraph(std::move(g), tau_msg_max);
}

// One gossip step over the augmented state: a sparse column-stochastic matrix.
// Stored by column since construction and the push-style product both walk
// columns. Most entries are structurally zero (identity shifts of the virtual
// chains plus one split column per active sender).
class ConsensusMatrix {
 public:
  struct Entry {
    int row;
    double value;
  };

  explicit ConsensusMatrix(int dimension) : cols_(dimension) {}

  int dimension() const { return static_cast<int>(cols_.size()); }
  const std::vector<Entry>& column(int c) const { return cols_[c]; }
  void add_entry(int row, int col, double value) { cols_[col].push_back({row, value}); }

  // out = M * in, with `in` holding one state row per augmented node.
  void apply(const Mat& in, Mat& out) const {
    if (in.rows() != dimension())
      throw DimensionMismatch("matrix dimension " + std::to_string(dimension()) +
                              " vs state rows " + std::to_string(in.rows()));
    out.setZero(in.rows(), in.cols());
    for (int c = 0; c < dimension(); ++c)
      for (const Entry& e : cols_[c]) out.row(e.row) += e.value * in.row(c);
  }

  void apply(const Vec& in, Vec& out) const {
    if (in.size() != dimension())
      throw DimensionMismatch("matrix dimension " + std::to_string(dimension()) +
                              " vs vector size " + std::to_string(in.size()));
    out.setZero(in.size());
    for (int c = 0; c < dimension(); ++c)
      for (const Entry& e : cols_[c]) out[e.row] += e.value * in[c];
  }

  Mat to_dense() const {
    Mat d = Mat::Zero(dimension(), dimension());
    for (int c = 0; c < dimension(); ++c)
      for (const Entry& e : cols_[c]) d(e.row, c) += e.value;
    return d;
  }

 private:
  std::vector<std::vector<Entry>> cols_;
};

// Delay assignment for one gossip step: (sender, receiver) -> message delay.
using DelayMap = std::map<std::pair<int, int>, int>;

// Assembles the square gossip matrix of dimension n*(tau_msg_max+1).
//
// Layout (block row r, block col c), with n-by-n blocks:
//   - col 0 holds the split blocks: an active sender i contributes
//     1/out_degree(i) at block row r for each out-edge (i, j) with delay r;
//     an inactive agent holds its value via a 1 on the diagonal of block 0.
//   - block (r, r+1) is the identity: chain stage r+1 shifts into stage r.
//
// `delays` must contain exactly one entry per out-edge of each active sender
// (including the self-loop, whose delay must be 0).
inline ConsensusMatrix build_consensus_matrix(const AugmentedGraph& ag,
                                              const std::set<int>& active,
                                              const DelayMap& delays) {
  const int n = ag.real_count();
  const int tmax = ag.tau_msg_max();
  ConsensusMatrix m(ag.node_count());

  std::size_t expected = 0;
  for (int i : active) {
    if (i < 0 || i >= n)
      throw IndexOutOfRange("active agent " + std::to_string(i) + " out of range");
    expected += ag.base().out_neighbors(i).size();
  }
  if (delays.size() != expected)
    throw MissingDelayAssignment("expected " + std::to_string(expected) +
                                 " delay assignments, got " + std::to_string(delays.size()));

  for (int i = 0; i < n; ++i) {
    if (active.count(i)) {
      const double share = 1.0 / ag.base().out_degree(i);
      for (int j : ag.base().out_neighbors(i)) {
        const auto it = delays.find({i, j});
        if (it == delays.end())
          throw MissingDelayAssignment("no delay for edge " + std::to_string(i + 1) + "->" +
                                       std::to_string(j + 1));
        const int r = it->second;
        if (r < 0 || r > tmax)
          throw DelayOutOfBounds("delay " + std::to_string(r) + " for edge " +
                                 std::to_string(i + 1) + "->" + std::to_string(j + 1) +
                                 " outside [0, " + std::to_string(tmax) + "]");
        if (j == i && r != 0)
          throw NonzeroSelfDelay("self-delay of agent " + std::to_string(i + 1) +
                                 " must be 0, got " + std::to_string(r));
        m.add_entry(ag.flat_index(j, r), i, share);
      }
    } else {
      m.add_entry(i, i, 1.0);
    }
  }
  for (const auto& [edge, r] : delays)
    if (!active.count(edge.first))
      throw MissingDelayAssignment("delay given for inactive sender " +
                                   std::to_string(edge.first + 1));

  // chain shift: stage r+1 -> stage r
  for (int r = 0; r + 1 <= tmax; ++r)
    for (int i = 0; i < n; ++i) m.add_entry(ag.flat_index(i, r), ag.flat_index(i, r + 1), 1.0);

  return m;
}

inline double column_stochasticity_defect(const ConsensusMatrix& m) {
  double worst = 0.0;
  for (int c = 0; c < m.dimension(); ++c) {
    double sum = 0.0;
    for (const auto& e : m.column(c)) sum += e.value;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

inline double column_stochasticity_defect(const Mat& m) {
  double worst = 0.0;
  for (int c = 0; c < m.cols(); ++c) worst = std::max(worst, std::abs(m.col(c).sum() - 1.0));
  return worst;
}

// Single-matrix coefficient of ergodicity over column pairs:
//   1 - min_{j1,j2} sum_i min([m]_{i,j1}, [m]_{i,j2}).
// Strictly below 1 means the matrix contracts disagreement between columns.
inline double hajnal_coefficient(const Mat& m) {
  if (m.rows() != m.cols())
    throw NotColumnStochastic("matrix is not square");
  if (m.minCoeff() < -1e-12 || column_stochasticity_defect(m) > 1e-9)
    throw NotColumnStochastic("matrix is not column-stochastic");
  double min_overlap = 1.0;
  for (int a = 0; a < m.cols(); ++a)
    for (int b = a + 1; b < m.cols(); ++b) {
      double overlap = 0.0;
      for (int i = 0; i < m.rows(); ++i) overlap += std::min(m(i, a), m(i, b));
      min_overlap = std::min(min_overlap, overlap);
    }
  return 1.0 - min_overlap;
}

inline double hajnal_coefficient(const ConsensusMatrix& m) {
  return hajnal_coefficient(m.to_dense());
}

// Lower bound on the entries in the first n rows of any product of
// n*(tau_bar+1) or more consecutive gossip matrices:
//   (1 / max out-degree)^(n*(tau_bar+1)).
// Underflows gracefully to 0 for large networks; callers treat it as a
// diagnostic, not an enforced floor.
inline double delta_min_bound(const ReferenceGraph& g, int tau_bar) {
  const double base = 1.0 / g.max_out_degree();
  const double expo = static_cast<double>(g.node_count()) * (tau_bar + 1);
  return std::pow(base, expo);
}

}  // namespace agp
