#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "transeq/errors.hpp"

using namespace transeq;

TEST_CASE("shortest path on a line") {
  const Network net = fixtures::line();
  const EdgeVector t{2.0, 3.0};
  const auto tree = shortest_path(net, t, 0);
  CHECK(tree.distance[2] == doctest::Approx(5.0));
  CHECK(tree.path_to(net, 2) == Path{0, 1});
}

TEST_CASE("shortest path picks the cheaper parallel edge") {
  const Network net = fixtures::pigou();
  const auto tree = shortest_path(net, EdgeVector{1.0, 0.5}, 0);
  CHECK(tree.distance[1] == doctest::Approx(0.5));
  CHECK(tree.path_to(net, 1) == Path{1});
}

TEST_CASE("ties go to the smallest edge id") {
  const Network net = fixtures::pigou();
  const auto tree = shortest_path(net, EdgeVector{1.0, 1.0}, 0);
  CHECK(tree.path_to(net, 1) == Path{0});
}

TEST_CASE("braess distances agree with path enumeration") {
  const Network net = fixtures::braess(true);
  const EdgeVector t{1, 1, 1, 1, 0};
  const auto tree = shortest_path(net, t, 0);
  const auto paths = enumerate_simple_paths(net, 0, 3, 64);
  REQUIRE(paths.size() == 3);
  double best = kInfinity;
  for (const Path& p : paths) {
    CHECK(is_simple_path(net, p, 0, 3));
    best = std::min(best, path_cost(t, p));
    CHECK(path_cost(t, p) == doctest::Approx(2.0));
  }
  CHECK(tree.distance[3] == doctest::Approx(best));
}

TEST_CASE("shortest path rejects negative weights and flags unreachable nodes") {
  const Network net = fixtures::line();
  CHECK_THROWS_AS(shortest_path(net, EdgeVector{-1.0, 1.0}, 0), InputError);
  const auto tree = shortest_path(net, EdgeVector{1.0, 1.0}, 2);
  CHECK_FALSE(tree.reachable(0));
  CHECK(tree.path_to(net, 0).empty());
}

TEST_CASE("network validation") {
  CHECK_THROWS_AS(Network(2, {{0, 0, Affine{1, 0}}}), InputError);
  CHECK_THROWS_AS(Network(2, {{0, 2, Affine{1, 0}}}), InputError);
  CHECK_THROWS_AS(Network(2, {{0, 1, Affine{1, -1}}}), InputError);
  CHECK_THROWS_AS(Network(2, {{0, 1, Bpr{1, 1, 0.15, 0.5}}}), InputError);
  CHECK_THROWS_AS(Network(2, {{0, 1, HardCap{0, 1}}}), InputError);
}

TEST_CASE("path budget") {
  const Network net = fixtures::braess(true);
  CHECK_THROWS_AS(enumerate_simple_paths(net, 0, 3, 2), PathBudgetError);
}

TEST_CASE("edge cost values") {
  CHECK(edge_tau(Affine{1, 0}, 7.0) == 1.0);
  CHECK(edge_tau(Affine{0, 1}, 0.5) == 0.5);
  CHECK(edge_tau(Bpr{1, 2, 0.15, 4}, 2.0) == doctest::Approx(1.15));
  CHECK_THROWS_AS(edge_tau(Affine{0, 1}, -1.0), InputError);
  CHECK_THROWS_AS(edge_tau(HardCap{1, 1}, 0.5), InputError);

  CHECK(edge_sigma(Affine{0, 1}, 2.0) == doctest::Approx(2.0));
  CHECK(edge_sigma_conjugate(Affine{0, 1}, 3.0) == doctest::Approx(4.5));
  CHECK(edge_sigma(Affine{1, 0}, 5.0) == doctest::Approx(5.0));
  CHECK(edge_sigma_conjugate(Affine{1, 0}, 1.0) == 0.0);
  CHECK(edge_sigma_conjugate(Affine{1, 0}, 1.5) == kInfinity);
}

TEST_CASE("bpr conjugate against a direct one-dimensional search") {
  const Bpr bpr{1, 1, 1, 1};
  // Golden-section maximization of f*2 - (f + f^2/2) on [0, 10].
  auto objective = [&](double f) { return 2.0 * f - edge_sigma(bpr, f); };
  double lo = 0.0, hi = 10.0;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int k = 0; k < 200; ++k) {
    const double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
    if (objective(a) < objective(b)) lo = a; else hi = b;
  }
  const double oracle = objective(0.5 * (lo + hi));
  CHECK(oracle == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(edge_sigma_conjugate(bpr, 2.0) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("fenchel-young on grids") {
  const std::vector<CostFunction> family{Affine{0, 1}, Affine{2, 0.5}, Bpr{1, 2, 0.15, 4},
                                         Bpr{2, 1, 1, 1}, Bpr{0.5, 3, 0.3, 2.5}};
  for (const auto& cf : family) {
    const double t0 = free_flow_time(cf);
    for (int i = 0; i <= 40; ++i) {
      const double f = 0.1 * i;
      const double tf = edge_tau(cf, f);
      // Equality at the matching time.
      CHECK(edge_sigma(cf, f) + edge_sigma_conjugate(cf, tf) ==
            doctest::Approx(f * tf).epsilon(1e-9).scale(1.0));
      for (int j = 0; j <= 40; ++j) {
        const double t = t0 + 0.15 * j;
        CHECK(edge_sigma(cf, f) + edge_sigma_conjugate(cf, t) >= f * t - 1e-9);
      }
    }
  }
}

TEST_CASE("tau is nondecreasing") {
  const std::vector<CostFunction> family{Affine{1, 0}, Affine{0, 2}, Bpr{1, 2, 0.15, 4},
                                         Bpr{1, 1, 0.15, 100}};
  for (const auto& cf : family) {
    double prev = edge_tau(cf, 0.0);
    for (int i = 1; i <= 200; ++i) {
      const double now = edge_tau(cf, 0.02 * i);
      CHECK(now >= prev);
      prev = now;
    }
  }
}

TEST_CASE("relaxation optimality of distances on random graphs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> weight(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Edge> edges;
    for (NodeId u = 0; u < 8; ++u)
      for (NodeId v = 0; v < 8; ++v)
        if (u != v && (rng() % 3 == 0)) edges.push_back({u, v, Affine{1, 0}});
    const Network net(8, edges);
    EdgeVector t(net.edge_count());
    for (double& x : t) x = weight(rng);
    const auto tree = shortest_path(net, t, 0);
    for (EdgeId e = 0; e < net.edge_count(); ++e) {
      const auto& edge = net.edge(e);
      if (tree.reachable(edge.tail))
        CHECK(tree.distance[edge.head] <= tree.distance[edge.tail] + t[e] + 1e-12);
    }
  }
}

TEST_CASE("smoothing hard caps") {
  const Network net(2, {{0, 1, HardCap{1, 1}}, {0, 1, Affine{1, 0}}});
  CHECK(net.has_hard_caps());
  const Network smooth = smooth_capacities(net, 0.01);
  CHECK_FALSE(smooth.has_hard_caps());
  CHECK(edge_tau(smooth.edge(0).cost, 1.0) == doctest::Approx(1.15));
  CHECK_THROWS_AS(smooth_capacities(net, 0.0), InputError);
}
