#include "agp/schedule.hpp"
#include "agp/topology.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <set>

using namespace agp;

namespace {

// Independent dense construction of the gossip matrix, written directly from
// the block layout: split blocks in the first block-column, identity blocks
// on the super-diagonal. Used as a structural oracle for the sparse builder.
Mat naive_consensus_dense(const AugmentedGraph& ag, const std::set<int>& active,
                          const DelayMap& delays) {
  const int n = ag.real_count();
  const int tmax = ag.tau_msg_max();
  const int dim = n * (tmax + 1);
  Mat p = Mat::Zero(dim, dim);

  for (int r = 0; r <= tmax; ++r) {
    Mat block = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const auto it = delays.find({i, j});
        if (active.count(i) && ag.base().has_edge(i, j) && it != delays.end() &&
            it->second == r) {
          block(j, i) = 1.0 / ag.base().out_degree(i);
        } else if (!active.count(i) && r == 0 && j == i) {
          block(j, i) = 1.0;
        }
      }
    p.block(r * n, 0, n, n) = block;
  }
  for (int r = 0; r + 1 <= tmax; ++r)
    p.block(r * n, (r + 1) * n, n, n) = Mat::Identity(n, n);
  return p;
}

ReferenceGraph fig1_graph() {
  // 4-ring 1->2->3->4->1 plus the chord 3->1, self-loops implied
  return build_reference_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {2, 0}});
}

}  // namespace

TEST_CASE("reference graph construction") {
  SECTION("singleton with self-loop") {
    const auto g = build_reference_graph(1, {});
    REQUIRE(g.node_count() == 1);
    REQUIRE(g.out_degree(0) == 1);
    REQUIRE(g.has_edge(0, 0));
  }
  SECTION("four-agent ring with chord is accepted") {
    const auto g = fig1_graph();
    REQUIRE(g.node_count() == 4);
    REQUIRE(g.out_degree(0) == 2);
    REQUIRE(g.out_degree(2) == 3);  // self, 3->4, 3->1
    REQUIRE(g.max_out_degree() == 3);
  }
  SECTION("missing reverse path is rejected with the offending pair") {
    try {
      build_reference_graph(2, {{0, 1}});
      FAIL("expected NotStronglyConnected");
    } catch (const NotStronglyConnected& e) {
      REQUIRE(std::string(e.what()).find("node 2") != std::string::npos);
      REQUIRE(std::string(e.what()).find("node 1") != std::string::npos);
    }
  }
  SECTION("edge index range is checked") {
    REQUIRE_THROWS_AS(build_reference_graph(2, {{0, 5}}), IndexOutOfRange);
    REQUIRE_THROWS_AS(build_reference_graph(0, {}), IndexOutOfRange);
  }
  SECTION("self-loops must be present when auto-add is disabled") {
    REQUIRE_THROWS_AS(build_reference_graph(2, {{0, 1}, {1, 0}}, false), MissingSelfLoop);
    REQUIRE_NOTHROW(
        build_reference_graph(2, {{0, 0}, {1, 1}, {0, 1}, {1, 0}}, false));
  }
}

TEST_CASE("graph augmentation") {
  SECTION("fig-1 sizes: 4 agents, delay bound 2 -> 12 nodes") {
    const auto ag = augment(fig1_graph(), 2);
    REQUIRE(ag.node_count() == 12);
    REQUIRE(ag.node_count() - ag.real_count() == 8);
    REQUIRE(ag.flat_index(1, 2) == 9);
  }
  SECTION("zero delay bound adds nothing") {
    const auto ag = augment(fig1_graph(), 0);
    REQUIRE(ag.node_count() == 4);
  }
  SECTION("two agents, delay bound 1 -> chain stage per agent") {
    const auto g = build_reference_graph(2, {{0, 1}, {1, 0}});
    const auto ag = augment(g, 1);
    REQUIRE(ag.node_count() == 4);
    // chain edge appears as the identity shift in any gossip matrix
    const auto m = build_consensus_matrix(ag, {}, {});
    const Mat dense = m.to_dense();
    REQUIRE(dense(0, 2) == 1.0);
    REQUIRE(dense(1, 3) == 1.0);
  }
  SECTION("negative delay bound is rejected") {
    REQUIRE_THROWS_AS(augment(fig1_graph(), -1), IndexOutOfRange);
  }
}

TEST_CASE("consensus matrix assembly") {
  const auto g2 = build_reference_graph(2, {{0, 1}, {1, 0}});
  const auto ag = augment(g2, 1);

  SECTION("hand-evaluated 2-agent example") {
    // agent 1 active, sends to 2 with delay 1 and to itself with delay 0
    const DelayMap delays{{{0, 1}, 1}, {{0, 0}, 0}};
    const auto m = build_consensus_matrix(ag, {0}, delays);
    const Mat dense = m.to_dense();
    Mat expected(4, 4);
    // blocks: P0 = [[1/2, 0], [0, 1]], P1 = [[0, 0], [1/2, 0]], shift block
    expected << 0.5, 0, 1, 0,
                0,   1, 0, 1,
                0,   0, 0, 0,
                0.5, 0, 0, 0;
    REQUIRE((dense - expected).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(column_stochasticity_defect(m) == 0.0);
  }
  SECTION("empty activation set holds every real value") {
    const auto m = build_consensus_matrix(ag, {}, {});
    const Mat dense = m.to_dense();
    REQUIRE(dense(0, 0) == 1.0);
    REQUIRE(dense(1, 1) == 1.0);
    REQUIRE(column_stochasticity_defect(m) <= 1e-12);
  }
  SECTION("complete graph, all active, zero delays mixes uniformly") {
    const int n = 4;
    std::set<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) edges.emplace(i, j);
    const auto ag4 = augment(build_reference_graph(n, edges), 0);
    std::set<int> active;
    DelayMap delays;
    for (int i = 0; i < n; ++i) {
      active.insert(i);
      for (int j = 0; j < n; ++j) delays[{i, j}] = 0;
    }
    const auto m = build_consensus_matrix(ag4, active, delays);
    const Mat dense = m.to_dense();
    REQUIRE((dense.array() - 1.0 / n).abs().maxCoeff() <= 1e-15);
    REQUIRE(column_stochasticity_defect(m) <= 1e-12);
  }
  SECTION("validation errors") {
    REQUIRE_THROWS_AS(build_consensus_matrix(ag, {0}, {{{0, 1}, 1}}), MissingDelayAssignment);
    REQUIRE_THROWS_AS(build_consensus_matrix(ag, {0}, {{{0, 1}, 2}, {{0, 0}, 0}}),
                      DelayOutOfBounds);
    REQUIRE_THROWS_AS(build_consensus_matrix(ag, {0}, {{{0, 1}, 1}, {{0, 0}, 1}}),
                      NonzeroSelfDelay);
    REQUIRE_THROWS_AS(build_consensus_matrix(ag, {}, {{{0, 1}, 0}}), MissingDelayAssignment);
  }
}

TEST_CASE("column stochasticity defect") {
  SECTION("identity") {
    ConsensusMatrix m(3);
    for (int i = 0; i < 3; ++i) m.add_entry(i, i, 1.0);
    REQUIRE(column_stochasticity_defect(m) == 0.0);
  }
  SECTION("column summing to 0.9 has defect 0.1") {
    Mat m = Mat::Identity(2, 2);
    m(0, 0) = 0.9;
    REQUIRE(column_stochasticity_defect(m) == Catch::Approx(0.1));
  }
}

TEST_CASE("hajnal coefficient") {
  SECTION("identity has disjoint column supports") {
    REQUIRE(hajnal_coefficient(Mat(Mat::Identity(2, 2))) == 1.0);
  }
  SECTION("equal columns are fully mixed") {
    Mat m(2, 2);
    m << 0.3, 0.3, 0.7, 0.7;
    REQUIRE(hajnal_coefficient(m) == 0.0);
  }
  SECTION("half-overlap example") {
    Mat m(2, 2);
    m << 1.0, 0.5, 0.0, 0.5;
    REQUIRE(hajnal_coefficient(m) == Catch::Approx(0.5));
  }
  SECTION("rejects non-stochastic input") {
    Mat m(2, 2);
    m << 0.5, 0.5, 0.2, 0.2;
    REQUIRE_THROWS_AS(hajnal_coefficient(m), NotColumnStochastic);
  }
}

TEST_CASE("delta_min bound") {
  SECTION("two agents") {
    const auto g = build_reference_graph(2, {{0, 1}, {1, 0}});
    REQUIRE(delta_min_bound(g, 2) == Catch::Approx(0.015625).epsilon(1e-15));
  }
  SECTION("singleton") {
    const auto g = build_reference_graph(1, {});
    REQUIRE(delta_min_bound(g, 5) == 1.0);
  }
  SECTION("fig-1 graph with tau_bar 3") {
    REQUIRE(delta_min_bound(fig1_graph(), 3) ==
            Catch::Approx(std::pow(1.0 / 3.0, 16)).epsilon(1e-12));
  }
}

TEST_CASE("randomized gossip matrices: column sums, mass action, structure") {
  Rng rng(20240901);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rng.next_int(2, 6);
    std::set<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace(i, (i + 1) % n);
    for (int extra = rng.next_int(0, 2 * n); extra > 0; --extra)
      edges.emplace(rng.next_int(0, n - 1), rng.next_int(0, n - 1));
    ReferenceGraph g;
    try {
      g = build_reference_graph(n, edges);
    } catch (const NotStronglyConnected&) {
      continue;
    }
    const int tmax = rng.next_int(0, 3);
    const auto ag = augment(g, tmax);

    std::set<int> active;
    DelayMap delays;
    for (int i = 0; i < n; ++i) {
      if (rng.next_unit() < 0.6) {
        active.insert(i);
        for (int j : g.out_neighbors(i))
          delays[{i, j}] = j == i ? 0 : (tmax == 0 ? 0 : rng.next_int(0, tmax));
      }
    }
    const auto m = build_consensus_matrix(ag, active, delays);
    REQUIRE(column_stochasticity_defect(m) <= 1e-12);

    Vec w(ag.node_count());
    for (int i = 0; i < ag.node_count(); ++i) w[i] = rng.next_gaussian();
    Vec out;
    m.apply(w, out);
    REQUIRE(std::abs(out.sum() - w.sum()) <= 1e-12 * std::max(1.0, w.cwiseAbs().sum()));

    const Mat dense = m.to_dense();
    const Mat oracle = naive_consensus_dense(ag, active, delays);
    REQUIRE((dense - oracle).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("window products: contraction and the positivity floor") {
  // small instance: 3-agent ring with chord, modest delays
  const auto g = build_reference_graph(3, {{0, 1}, {1, 2}, {2, 0}, {1, 0}});
  const int tau_proc = 2, tau_msg = 1;
  const int tau_bar = tau_msg + tau_proc - 1;
  const auto ag = augment(g, tau_msg);
  const int window = g.node_count() * (tau_bar + 1);

  for (std::uint64_t seed : {11u, 22u, 33u}) {
    const auto s = generate_schedule(3, 4 * window, tau_proc, tau_msg, UniformRandom{}, seed);

    SECTION("hajnal coefficient non-increasing along cumulative products, seed " +
            std::to_string(seed)) {
      Mat prod = Mat::Identity(ag.node_count(), ag.node_count());
      double prev = 1.0;
      bool contracted = false;
      for (int k = 0; k < 3 * window; ++k) {
        prod = consensus_matrix_at(ag, s, k).to_dense() * prod;
        const double h = hajnal_coefficient(prod);
        REQUIRE(h <= prev + 1e-12);
        prev = h;
        if (h < 1.0) contracted = true;
      }
      REQUIRE(contracted);
      REQUIRE(prev < 1.0);
    }

    SECTION("window product floors the real rows at delta_min, seed " + std::to_string(seed)) {
      const double floor = delta_min_bound(g, tau_bar);
      for (int start : {0, window / 2, window}) {
        Mat prod = Mat::Identity(ag.node_count(), ag.node_count());
        for (int k = start; k < start + window; ++k)
          prod = consensus_matrix_at(ag, s, k).to_dense() * prod;
        const double min_entry = prod.topRows(g.node_count()).minCoeff();
        REQUIRE(min_entry >= floor - 1e-15);
      }
    }
  }
}
