#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "transeq/errors.hpp"
#include "transeq/fullmodel.hpp"

using namespace transeq;

namespace {

Producer producer(double u, double c) {
  Producer p;
  p.u_max = {u};
  p.A = {0.0};
  p.c = {c};
  return p;
}

Consumer consumer(double need, double income) {
  Consumer cn;
  cn.properties = 1;
  cn.Q = {1.0};
  cn.sigma_min = {need};
  cn.income = income;
  return cn;
}

// One producer at node 0 (u_max 10, c 1) and one consumer at node 1 needing
// 2 units, joined by the given parallel edges.
FullInstance toy(std::vector<CostFunction> edges, double income) {
  std::vector<Edge> list;
  for (auto& c : edges) list.push_back({0, 1, c});
  FullInstance inst;
  inst.market.goods = 1;
  inst.market.producers = {producer(10.0, 1.0)};
  inst.market.consumers = {consumer(2.0, income)};
  inst.market.transport = TransportModel::network(Network(2, list), {0}, {1});
  inst.market.gamma = 1e-3;
  return inst;
}

FullConfig config() {
  FullConfig cfg;
  cfg.market.tol = 1e-7;
  cfg.market.max_iter = 400000;
  return cfg;
}

// max over 0 <= d <= cap of delta d - a d - b d^2 / 2 - gamma d ln d, by
// bisection on the derivative.
double transporter_profit(double delta, double a, double b, double gamma, double cap) {
  auto slope = [&](double d) { return delta - a - b * d - gamma * (std::log(d) + 1.0); };
  double lo = 1e-300, hi = cap;
  if (slope(hi) > 0.0) {
    lo = hi;
  } else {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (slope(mid) > 0.0 ? lo : hi) = mid;
    }
  }
  const double d = lo;
  return delta * d - a * d - 0.5 * b * d * d - gamma * d * std::log(d);
}

// Refining grid minimum of a convex function of two variables over a box.
std::pair<double, double> grid_min2(const std::function<double(double, double)>& f, double lx, double hx, double ly,
                                    double hy) {
  double bx = lx, by = ly;
  for (int round = 0; round < 40; ++round) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j) {
        const double x = lx + (hx - lx) * i / 40.0, y = ly + (hy - ly) * j / 40.0;
        const double v = f(x, y);
        if (v < best) {
          best = v;
          bx = x;
          by = y;
        }
      }
    const double wx = (hx - lx) / 10.0, wy = (hy - ly) / 10.0;
    lx = std::max(0.0, bx - wx);
    hx = bx + wx;
    ly = std::max(0.0, by - wy);
    hy = by + wy;
  }
  return {bx, by};
}

// Oracle prices of the toy over one Affine{a, b} edge: minimise profit +
// surplus + transporter profit over (lambda_l, lambda_w).
std::pair<double, double> toy_prices(double a, double b, double income, double gamma) {
  return grid_min2(
      [&](double ll, double lw) {
        return 10.0 * std::max(0.0, ll - 1.0) + std::max(0.0, income - 2.0 * lw) +
               transporter_profit(lw - ll, a, b, gamma, 10.0);
      },
      0.0, 8.0, 0.0, 8.0);
}

void check_recovery(const FullEquilibrium& eq) {
  CHECK(eq.wardrop_residual <= 1e-4);
  CHECK(eq.cost_mismatch <= 1e-3);
  CHECK_FALSE(eq.time_cap_active);
  CHECK(eq.market.walras.max() <= 1e-3);
}

}  // namespace

TEST_CASE("full model over a constant unit edge reproduces the market toy") {
  const double gamma = 1e-3;
  const auto [ll, lw] = toy_prices(1.0, 0.0, 10.0, gamma);
  CHECK(ll == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(lw == doctest::Approx(2.0 + gamma * (1.0 + std::log(2.0))).epsilon(1e-6));

  const auto eq = solve_full(toy({Affine{1.0, 0.0}}, 10.0), config());
  CHECK(eq.market.converged);
  CHECK(eq.market.state.lambda_l[0][0] == doctest::Approx(ll).epsilon(1e-3));
  CHECK(eq.market.state.lambda_w[0][0] == doctest::Approx(lw).epsilon(1e-3));
  CHECK(eq.market.state.d[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.market.state.L[0][0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.t[0] == doctest::Approx(1.0));
  CHECK(eq.f[0] == doctest::Approx(2.0).epsilon(1e-3));
  check_recovery(eq);
}

TEST_CASE("full model with a congestible edge") {
  const double gamma = 1e-3;
  const auto [ll, lw] = toy_prices(1.0, 1.0, 10.0, gamma);
  // Supply is flat at c = 1 and the consumer still affords W = 2 at 1 + 1 + 2.
  CHECK(ll == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(lw == doctest::Approx(4.0 + gamma * (1.0 + std::log(2.0))).epsilon(1e-5));

  const auto eq = solve_full(toy({Affine{1.0, 1.0}}, 10.0), config());
  CHECK(eq.market.converged);
  CHECK(eq.market.state.lambda_l[0][0] == doctest::Approx(ll).epsilon(1e-3));
  CHECK(eq.market.state.lambda_w[0][0] == doctest::Approx(lw).epsilon(1e-3));
  CHECK(eq.market.state.d[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.t[0] == doctest::Approx(3.0).epsilon(1e-3));
  check_recovery(eq);
}

TEST_CASE("full model without income has no trade") {
  const auto eq = solve_full(toy({Affine{1.0, 1.0}, Bpr{2.0, 1.0, 0.15, 4.0}}, 0.0), config());
  CHECK(eq.market.state.d[0] <= 1e-4);
  CHECK(eq.market.state.L[0][0] <= 1e-4);
  CHECK(eq.market.beta[0] <= 1e-4);
  CHECK(eq.t[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(eq.t[1] == doctest::Approx(2.0).epsilon(1e-4));
  check_recovery(eq);
}

TEST_CASE("full model splits symmetric routes equally") {
  const auto eq = solve_full(toy({Affine{1.0, 1.0}, Affine{1.0, 1.0}}, 10.0), config());
  CHECK(eq.market.state.d[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.f[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(eq.f[1] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(eq.t[0] == doctest::Approx(eq.t[1]).epsilon(1e-4));
  REQUIRE(eq.x.size() == 1);
  REQUIRE(eq.x[0].paths.size() == 2);
  CHECK(eq.x[0].flows[0] == doctest::Approx(eq.x[0].flows[1]).epsilon(1e-3));
  check_recovery(eq);
}

TEST_CASE("edge-time gradient at zero trade pulls times to free flow") {
  const FullInstance inst = toy({Affine{1.0, 1.0}, Bpr{2.0, 1.0, 0.15, 4.0}}, 10.0);
  const SaddleProblem prob = assemble_full(inst, 100.0);
  Point z = prob.initial;
  std::fill(z.front().begin(), z.front().end(), 0.0);
  const std::vector<double> times = {1.5, 2.5};
  z.back() = times;
  Point g;
  for (const auto& b : z) g.emplace_back(b.size(), 0.0);
  prob.gradient(z, g);
  const Network& net = *inst.market.transport.network_ptr();
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(g.back()[e] == doctest::Approx(-edge_flow_at_time(net.edge(e).cost, times[e])));
    CHECK(g.back()[e] < 0.0);
  }
}

TEST_CASE("full model agrees with the market on constant-cost networks") {
  // Two producers and two consumers on a four-node network with several
  // routes per pair and constant edge times.
  std::vector<Edge> edges = {{0, 2, Affine{1.0, 0.0}}, {0, 3, Affine{2.0, 0.0}}, {1, 2, Affine{1.5, 0.0}},
                             {1, 3, Affine{0.5, 0.0}}, {2, 3, Affine{0.3, 0.0}}, {3, 2, Affine{0.4, 0.0}}};
  FullInstance inst;
  MarketInstance& mk = inst.market;
  mk.goods = 1;
  mk.producers = {producer(3.0, 1.0), producer(2.0, 0.5)};
  mk.consumers = {consumer(2.0, 12.0), consumer(1.5, 9.0)};
  mk.transport = TransportModel::network(Network(4, edges), {0, 1}, {2, 3});
  mk.transport.inner().tol = 1e-10;
  mk.gamma = 1e-2;
  const FullConfig cfg = config();
  const auto full = solve_full(inst, cfg);
  const auto market = solve_market(mk, cfg.market);
  REQUIRE(full.market.converged);
  REQUIRE(market.converged);
  double traded = 0.0;
  for (const double v : full.market.state.d) traded += v;
  CHECK(traded == doctest::Approx(3.5).epsilon(1e-3));
  for (std::size_t k = 0; k < market.state.d.size(); ++k)
    CHECK(full.market.state.d[k] == doctest::Approx(market.state.d[k]).epsilon(1e-3));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(full.market.state.lambda_l[i][0] == doctest::Approx(market.state.lambda_l[i][0]).epsilon(1e-3));
    CHECK(full.market.state.lambda_w[i][0] == doctest::Approx(market.state.lambda_w[i][0]).epsilon(1e-3));
  }
  check_recovery(full);
}

TEST_CASE("full model input validation") {
  FullInstance inst = toy({Affine{1.0, 0.0}}, 10.0);
  inst.path_budget = 0;
  CHECK_THROWS_AS(assemble_full(inst, 10.0), InputError);
  inst.path_budget = 64;
  inst.market.transport = TransportModel::fixed({1, 1, {1.0}});
  CHECK_THROWS_AS(solve_full(inst), InputError);
  CHECK_THROWS_AS(assemble_full(toy({Affine{1.0, 0.0}}, 10.0), 0.0), InputError);
}
