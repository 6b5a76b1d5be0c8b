#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "transeq/errors.hpp"

using namespace transeq;

namespace {

// Golden-section minimizer on [lo, hi].
template <class F>
double golden_min(F f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int k = 0; k < 200; ++k) {
    const double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
    if (f(a) < f(b)) hi = b; else lo = a;
  }
  return 0.5 * (lo + hi);
}

SolveConfig tight(double tol) {
  SolveConfig cfg;
  cfg.tol = tol;
  cfg.max_iter = 100000;
  return cfg;
}

}  // namespace

TEST_CASE("beckmann values") {
  const Network net = fixtures::pigou();
  CHECK(beckmann(net, EdgeVector{0, 1}) == doctest::Approx(0.5));
  CHECK(beckmann(net, EdgeVector{0, 0}) == 0.0);
  CHECK(beckmann(net, EdgeVector{0.5, 0.5}) == doctest::Approx(0.625));
}

TEST_CASE("pigou equilibrium against a one-dimensional minimization") {
  const Network net = fixtures::pigou();
  const double f2 = golden_min([](double x) { return (1.0 - x) + 0.5 * x * x; }, 0.0, 1.0);
  const auto res = solve_wardrop(net, fixtures::one_pair(0, 1, 1.0), tight(1e-6));
  CHECK(res.converged);
  CHECK(res.flow[1] == doctest::Approx(f2).epsilon(1e-6));
  CHECK(res.flow[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-4));
  CHECK(res.gap <= 1e-6);
  CHECK(res.wardrop_residual <= 1e-4);
  CHECK(res.od_cost[0] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("braess paradox") {
  const auto d = fixtures::one_pair(0, 3, 1.0);
  const auto before = solve_wardrop(fixtures::braess(false), d, tight(1e-9));
  CHECK(before.flow[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(before.flow[2] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(before.od_cost[0] == doctest::Approx(1.5).epsilon(1e-6));
  const auto after = solve_wardrop(fixtures::braess(true), d, tight(1e-9));
  CHECK(after.od_cost[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(after.flow[4] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(after.wardrop_residual <= 1e-6);
}

TEST_CASE("dual value examples") {
  const Network net = fixtures::pigou();
  const auto d = fixtures::one_pair(0, 1, 1.0);
  CHECK(dual_value(net, d, EdgeVector{1, 1}) == doctest::Approx(0.5));
  CHECK(dual_value(net, d, EdgeVector{1, 0.5}) == doctest::Approx(0.375));
  CHECK(dual_value(net, fixtures::one_pair(0, 1, 0.0), EdgeVector{1, 2}) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(dual_value(net, d, EdgeVector{0.5, 1}), InputError);
}

TEST_CASE("cost map on a single edge") {
  const Network net(2, {{0, 1, Affine{1, 1}}});
  const auto cm = cost_map(net, fixtures::one_pair(0, 1, 2.0), tight(1e-10));
  CHECK(cm.od_cost[0] == doctest::Approx(3.0));
  CHECK(cm.potential == doctest::Approx(4.0));
  const auto zero = cost_map(fixtures::pigou(), fixtures::one_pair(0, 1, 0.0));
  CHECK(zero.od_cost[0] == doctest::Approx(0.0));
  CHECK(cost_map(fixtures::pigou(), fixtures::one_pair(0, 1, 1.0), tight(1e-8)).od_cost[0] ==
        doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("disconnected demand names the pair") {
  const Network net = fixtures::line();
  try {
    solve_wardrop(net, fixtures::one_pair(2, 0, 1.0));
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("t -> s") != std::string::npos);
  }
}

TEST_CASE("weak duality along the iterates and the final gap") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = fixtures::random_affine(10, rng);
    SolveConfig cfg = tight(1e-7);
    cfg.record_trace = true;
    const auto res = solve_wardrop(net, fixtures::one_pair(0, 9, 3.0), cfg);
    CHECK(res.converged);
    for (const auto& rec : res.trace) CHECK(rec.dual_value <= rec.beckmann + 1e-10);
    CHECK(res.wardrop_residual <= res.residual_bound + 1e-12);
    // Flow conservation through path reconstruction.
    const EdgeVector rebuilt = link_flows(net, res.paths);
    for (EdgeId e = 0; e < net.edge_count(); ++e) CHECK(rebuilt[e] == doctest::Approx(res.flow[e]));
    double total = 0.0;
    for (const double x : res.paths[0].flows) total += x;
    CHECK(total == doctest::Approx(3.0));
  }
}

TEST_CASE("fixed step rule converges more slowly but still decreases the gap") {
  SolveConfig cfg = tight(1e-3);
  cfg.line_search = LineSearch::Fixed;
  const auto res = solve_wardrop(fixtures::braess(false), fixtures::one_pair(0, 3, 1.0), cfg);
  CHECK(res.converged);
  CHECK(res.od_cost[0] == doctest::Approx(1.5).epsilon(1e-2));
}

TEST_CASE("danskin finite differences") {
  std::mt19937_64 rng(3);
  const Network net = fixtures::random_affine(6, rng);
  const std::vector<OdPair> pairs{{0, 5}, {1, 4}, {0, 3}};
  const std::vector<double> d{2.0, 1.5, 1.0};
  const auto base = cost_map(net, DemandMatrix::single(pairs, d), tight(1e-9));
  const double eps = 1e-4;
  for (std::size_t w = 0; w < pairs.size(); ++w) {
    auto up = d, down = d;
    up[w] += eps;
    down[w] -= eps;
    const double phi_up = cost_map(net, DemandMatrix::single(pairs, up), tight(1e-9)).potential;
    const double phi_down = cost_map(net, DemandMatrix::single(pairs, down), tight(1e-9)).potential;
    CHECK((phi_up - phi_down) / (2 * eps) == doctest::Approx(base.od_cost[w]).epsilon(1e-3));
  }
}

TEST_CASE("equilibrium times are monotone in demand on parallel links") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> a(0.5, 2.0), b(0.2, 1.0);
  std::vector<Edge> edges;
  for (int k = 0; k < 4; ++k) edges.push_back({0, 1, Affine{a(rng), b(rng)}});
  const Network net(2, edges);
  EdgeVector prev;
  for (double d = 0.5; d <= 6.0; d += 0.5) {
    const auto res = solve_wardrop(net, fixtures::one_pair(0, 1, d), tight(1e-10));
    if (!prev.empty())
      for (EdgeId e = 0; e < net.edge_count(); ++e) CHECK(res.time[e] >= prev[e] - 1e-6);
    prev = res.time;
  }
}

TEST_CASE("wardrop residual examples") {
  const Network net = fixtures::pigou();
  PathFlows eq{{{0, 1}, 1.0, {{0}, {1}}, {0.0, 1.0}}};
  CHECK(wardrop_residual(net, eq) == doctest::Approx(0.0));
  PathFlows half{{{0, 1}, 1.0, {{0}, {1}}, {0.5, 0.5}}};
  CHECK(wardrop_residual(net, half) == doctest::Approx(0.5));
  PathFlows single{{{0, 2}, 1.0, {{0, 1}}, {1.0}}};
  CHECK(wardrop_residual(fixtures::line(), single) == 0.0);
}

TEST_CASE("stochastic equilibrium") {
  SolveConfig cfg = tight(1e-10);
  SUBCASE("identical paths split evenly") {
    const Network net(2, {{0, 1, Affine{1, 1}}, {0, 1, Affine{1, 1}}});
    cfg.gamma_tilde = 0.7;
    const auto res = solve_stochastic(net, fixtures::one_pair(0, 1, 1.0), cfg);
    CHECK(res.paths[0].flows[0] == doctest::Approx(0.5));
  }
  SUBCASE("constant costs give the softmax") {
    const Network net(2, {{0, 1, Affine{0, 0}}, {0, 1, Affine{std::log(3.0), 0}}});
    cfg.gamma_tilde = 1.0;
    const auto res = solve_stochastic(net, fixtures::one_pair(0, 1, 1.0), cfg);
    CHECK(res.converged);
    CHECK(res.paths[0].flows[0] == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(res.paths[0].flows[1] == doctest::Approx(0.25).epsilon(1e-9));
  }
  SUBCASE("high temperature spreads flow") {
    cfg.gamma_tilde = 1e6;
    const auto res = solve_stochastic(fixtures::pigou(), fixtures::one_pair(0, 1, 1.0), cfg);
    CHECK(res.paths[0].flows[0] == doctest::Approx(0.5).epsilon(1e-5));
  }
  SUBCASE("low temperature approaches the wardrop flows") {
    cfg.gamma_tilde = 1e-4;
    cfg.tol = 1e-6;
    const auto res = solve_stochastic(fixtures::pigou(), fixtures::one_pair(0, 1, 1.0), cfg);
    const auto det = solve_wardrop(fixtures::pigou(), fixtures::one_pair(0, 1, 1.0), tight(1e-9));
    CHECK(std::abs(res.flow[0] - det.flow[0]) <= 1e-2);
    CHECK(std::abs(res.flow[1] - det.flow[1]) <= 1e-2);
  }
  SUBCASE("fixed point on random networks") {
    std::mt19937_64 rng(17);
    cfg.tol = 1e-8;
    for (int trial = 0; trial < 5; ++trial) {
      const Network net = fixtures::random_affine(6, rng, 0.25);
      cfg.gamma_tilde = 0.5;
      const auto res = solve_stochastic(net, fixtures::one_pair(0, 5, 2.0), cfg);
      CHECK(res.converged);
      CHECK(res.fixed_point_residual <= 1e-8);
    }
  }
  SUBCASE("path budget overflow names the pair") {
    cfg.path_budget = 2;
    CHECK_THROWS_AS(solve_stochastic(fixtures::braess(true), fixtures::one_pair(0, 3, 1.0), cfg),
                    PathBudgetError);
  }
}

TEST_CASE("lp limit examples") {
  SUBCASE("under capacity") {
    const Network net(2, {{0, 1, HardCap{1, 5}}});
    const auto lp = lp_limit(net, fixtures::one_pair(0, 1, 3.0));
    CHECK(lp.flow[0] == doctest::Approx(3.0));
    CHECK(lp.objective == doctest::Approx(3.0));
    CHECK(lp.time[0] == doctest::Approx(1.0));
  }
  SUBCASE("both edges saturate") {
    const Network net(2, {{0, 1, HardCap{1, 1}}, {0, 1, HardCap{1, 1}}});
    const auto lp = lp_limit(net, fixtures::one_pair(0, 1, 2.0));
    CHECK(lp.flow == EdgeVector{1.0, 1.0});
    CHECK(lp.objective == doctest::Approx(2.0));
  }
  SUBCASE("overflow to the expensive edge") {
    const Network net(2, {{0, 1, HardCap{1, 1}}, {0, 1, HardCap{2, 10}}});
    const auto lp = lp_limit(net, fixtures::one_pair(0, 1, 2.0));
    CHECK(lp.flow[0] == doctest::Approx(1.0));
    CHECK(lp.flow[1] == doctest::Approx(1.0));
    CHECK(lp.objective == doctest::Approx(3.0));
    // The saturated cheap edge carries a congestion premium up to the
    // expensive alternative.
    CHECK(lp.time[0] == doctest::Approx(2.0));
    CHECK(lp.time[1] == doctest::Approx(2.0));
    CHECK(lp.dual_objective == doctest::Approx(lp.objective));
  }
  SUBCASE("infeasible demand reports a cut") {
    const Network net(2, {{0, 1, HardCap{1, 1}}, {0, 1, HardCap{2, 1}}});
    CHECK_THROWS_AS(lp_limit(net, fixtures::one_pair(0, 1, 3.0)), InfeasibleError);
  }
}

TEST_CASE("lp limit strong duality on random capacitated networks") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> tbar(0.5, 3.0), cap(0.5, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Edge> edges;
    for (NodeId v = 0; v + 1 < 6; ++v) edges.push_back({v, v + 1, HardCap{tbar(rng), 10.0}});
    for (NodeId u = 0; u < 6; ++u)
      for (NodeId v = 0; v < 6; ++v)
        if (u != v && rng() % 3 == 0) edges.push_back({u, v, HardCap{tbar(rng), cap(rng)}});
    const Network net(6, edges);
    const auto d = DemandMatrix::single({{0, 5}, {0, 3}, {0, 4}}, {2.0, 1.0, 1.5});
    const auto lp = lp_limit(net, d);
    CHECK(lp.dual_objective == doctest::Approx(lp.objective).epsilon(1e-9));
    for (EdgeId e = 0; e < net.edge_count(); ++e) {
      const auto& c = std::get<HardCap>(net.edge(e).cost);
      CHECK(lp.flow[e] <= c.capacity + 1e-12);
      if (lp.time[e] > c.free_flow + 1e-9) CHECK(lp.flow[e] == doctest::Approx(c.capacity));
    }
  }
}

TEST_CASE("steep bpr approaches the lp limit") {
  const Network capped(2, {{0, 1, HardCap{1, 1}}, {0, 1, HardCap{2, 10}}});
  const auto d = fixtures::one_pair(0, 1, 2.0);
  const auto lp = lp_limit(capped, d);
  const auto smooth = solve_wardrop(smooth_capacities(capped, 1e-2), d, tight(1e-9));
  CHECK(std::abs(smooth.flow[0] - lp.flow[0]) <= 5e-2);
  CHECK(std::abs(smooth.flow[1] - lp.flow[1]) <= 5e-2);
  // Closed form for the smooth equilibrium: 0.15 f^100 = 1.
  CHECK(smooth.flow[0] == doctest::Approx(std::pow(1.0 / 0.15, 0.01)).epsilon(1e-6));
}
