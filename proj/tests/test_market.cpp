#include <doctest.h>

#include <cmath>
#include <array>
#include <functional>
#include <random>

#include "transeq/errors.hpp"
#include "transeq/market.hpp"

using namespace transeq;

namespace {

Producer single_producer(double u, double chi, double c) {
  Producer p;
  p.u_max = {u};
  p.chi = chi;
  p.A = {0.0};
  p.c = {c};
  return p;
}

Consumer single_consumer(double sigma, double income) {
  Consumer cn;
  cn.properties = 1;
  cn.Q = {1.0};
  cn.sigma_min = {sigma};
  cn.income = income;
  return cn;
}

// One producer (u_max 10, c 1) shipping over a unit-cost edge to one consumer
// who needs 2 units.
MarketInstance toy(double income, bool resource) {
  MarketInstance inst;
  inst.goods = 1;
  inst.producers = {single_producer(10.0, 0.0, 1.0)};
  inst.consumers = {single_consumer(2.0, income)};
  inst.transport = TransportModel::fixed({1, 1, {1.0}});
  inst.gamma = 1e-3;
  if (resource) {
    inst.materials = 1;
    inst.producers[0].R = {1.0};
    inst.b = {1.0};
  }
  return inst;
}

// Minimises a convex function over a box by repeatedly refining a grid
// around the best point.
std::vector<double> grid_min(const std::function<double(const std::vector<double>&)>& f, std::vector<double> lo,
                             std::vector<double> hi, int points, int rounds) {
  const std::size_t n = lo.size();
  std::vector<double> best(n);
  for (int round = 0; round < rounds; ++round) {
    double best_value = std::numeric_limits<double>::infinity();
    std::vector<int> idx(n, 0);
    while (true) {
      std::vector<double> x(n);
      for (std::size_t k = 0; k < n; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * idx[k] / (points - 1);
      const double v = f(x);
      if (v < best_value) {
        best_value = v;
        best = x;
      }
      std::size_t k = 0;
      while (k < n && ++idx[k] == points) idx[k++] = 0;
      if (k == n) break;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double half = 2.0 * (hi[k] - lo[k]) / (points - 1);
      lo[k] = std::max(0.0, best[k] - half);
      hi[k] = best[k] + half;
    }
  }
  return best;
}

// Price-side objective of the one-good toy: profit + surplus + transporter
// profit (+ y b with a material), minimised over prices.
double toy_price_objective(double income, bool resource, double gamma, double lambda_l, double lambda_w, double y) {
  const double profit = 10.0 * std::max(0.0, lambda_l - 1.0 - (resource ? y : 0.0));
  const double surplus = std::max(0.0, income - 2.0 * lambda_w);
  const double exponent = (lambda_w - lambda_l - 1.0) / gamma - 1.0;
  const double shipped = std::min(10.0, std::exp(std::min(exponent, 50.0)));
  const double transporter = (lambda_w - lambda_l - 1.0) * shipped - gamma * shipped * std::log(shipped);
  return profit + surplus + transporter + (resource ? y : 0.0);
}

MarketConfig toy_config() {
  MarketConfig cfg;
  cfg.tol = 1e-7;
  cfg.max_iter = 400000;
  return cfg;
}

}  // namespace

TEST_CASE("producer best response examples") {
  const auto a = producer_best_response(single_producer(10, 0, 1), {2.0}, {0.0}, {});
  CHECK(a.profit == doctest::Approx(10.0));
  CHECK(a.L[0] == doctest::Approx(10.0));
  CHECK(a.alpha == 1.0);
  const auto b = producer_best_response(single_producer(10, 3, 1), {1.0}, {0.0}, {});
  CHECK(b.profit == 0.0);
  CHECK(b.L[0] == 0.0);
  const auto c = producer_best_response(single_producer(10, 5, 1), {1.4}, {0.0}, {});
  CHECK(c.margin[0] == doctest::Approx(0.4));
  CHECK(c.profit == 0.0);
  CHECK(c.L[0] == 0.0);
  CHECK(c.alpha == 0.0);
}

TEST_CASE("producer margin includes inputs and materials") {
  Producer p;
  p.u_max = {4.0, 2.0};
  p.c = {0.5, 0.0};
  p.A = {0.0, 1.0, 0.5, 0.0};  // good 1 uses one unit of good 0, good 0 uses half of good 1
  p.R = {1.0, 2.0};
  const auto r = producer_best_response(p, {3.0, 5.0}, {1.0, 2.0}, {0.25});
  CHECK(r.margin[0] == doctest::Approx(3.0 - 0.5 - 0.5 * 2.0 - 0.25));
  CHECK(r.margin[1] == doctest::Approx(5.0 - 1.0 - 0.5));
  CHECK(r.profit == doctest::Approx(4.0 * 1.25 + 2.0 * 3.5));
}

TEST_CASE("consumer best response examples") {
  const auto a = consumer_best_response(single_consumer(2.0, 10.0), {2.0});
  CHECK(a.W[0] == doctest::Approx(2.0));
  CHECK(a.surplus == doctest::Approx(6.0));
  CHECK(a.beta == 1.0);
  const auto b = consumer_best_response(single_consumer(2.0, 10.0), {5.0});
  CHECK(b.surplus == 0.0);
  CHECK(b.beta == 0.0);
  Consumer two;
  two.properties = 1;
  two.Q = {1.0, 1.0};
  two.sigma_min = {1.0};
  two.income = 5.0;
  const auto c = consumer_best_response(two, {3.0, 1.0});
  CHECK(c.W[0] == doctest::Approx(0.0));
  CHECK(c.W[1] == doctest::Approx(1.0));
  CHECK(c.cost == doctest::Approx(1.0));
}

TEST_CASE("cheapest bundle matches the dual linear program") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Consumer cn;
    cn.properties = 2;
    cn.Q = {u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    cn.sigma_min = {0.5 + u(rng), 0.5 + u(rng)};
    cn.income = 100.0;
    const std::vector<double> price{0.1 + u(rng), 0.1 + u(rng), 0.1 + u(rng)};
    const auto r = consumer_best_response(cn, price);
    // Dual: max sigma . mu over mu >= 0 with Q^T mu <= price, a polygon in the
    // plane. Its optimum sits where two of the five lines cross.
    std::vector<std::array<double, 3>> lines;  // a mu0 + b mu1 <= c
    for (int k = 0; k < 3; ++k) lines.push_back({cn.Q[k], cn.Q[3 + k], price[k]});
    lines.push_back({-1.0, 0.0, 0.0});
    lines.push_back({0.0, -1.0, 0.0});
    double dual = -1.0;
    for (std::size_t a1 = 0; a1 < lines.size(); ++a1)
      for (std::size_t a2 = a1 + 1; a2 < lines.size(); ++a2) {
        const auto& p = lines[a1];
        const auto& q = lines[a2];
        const double det = p[0] * q[1] - p[1] * q[0];
        if (std::abs(det) < 1e-12) continue;
        const double m0 = (p[2] * q[1] - p[1] * q[2]) / det, m1 = (p[0] * q[2] - p[2] * q[0]) / det;
        bool ok = true;
        for (const auto& l : lines) ok = ok && l[0] * m0 + l[1] * m1 <= l[2] + 1e-12;
        if (ok) dual = std::max(dual, cn.sigma_min[0] * m0 + cn.sigma_min[1] * m1);
      }
    CHECK(r.cost == doctest::Approx(dual).epsilon(1e-9));
    double cost = 0.0;
    for (int k = 0; k < 3; ++k) {
      CHECK(r.bundle[k] >= 0.0);
      cost += price[k] * r.bundle[k];
    }
    CHECK(cost == doctest::Approx(r.cost));
    for (int row = 0; row < 2; ++row)
      CHECK(cn.Q[row * 3] * r.bundle[0] + cn.Q[row * 3 + 1] * r.bundle[1] + cn.Q[row * 3 + 2] * r.bundle[2] >=
            cn.sigma_min[row] - 1e-9);
  }
}

TEST_CASE("productivity examples") {
  CHECK(productivity_check(toy(10.0, false)).ok);
  MarketInstance self = toy(10.0, false);
  self.producers[0].A = {1.0};
  const auto a = productivity_check(self);
  CHECK_FALSE(a.ok);
  CHECK(a.message.find("good 0") != std::string::npos);
  MarketInstance scarce = toy(10.0, true);
  scarce.b = {5.0};
  const auto b = productivity_check(scarce);
  CHECK_FALSE(b.ok);
  CHECK(b.material_slack[0] == doctest::Approx(-5.0));
  CHECK(b.message.find("material 0") != std::string::npos);
}

TEST_CASE("least-norm witness lies in V") {
  Consumer cn;
  cn.properties = 2;
  cn.Q = {1.0, 2.0, 3.0, 1.0};
  cn.sigma_min = {2.0, 3.0};
  MarketInstance inst = toy(10.0, false);
  inst.goods = 2;
  inst.producers[0].u_max = {50, 50};
  inst.producers[0].c = {1, 1};
  inst.producers[0].A = {0, 0, 0, 0};
  inst.consumers = {cn};
  const auto rep = productivity_check(inst);
  const auto& W = rep.W[0];
  CHECK(W[0] + 2 * W[1] >= 2.0 - 1e-9);
  CHECK(3 * W[0] + W[1] >= 3.0 - 1e-9);
  // Both rows bind at the least-norm point: W = (0.8, 0.6).
  CHECK(W[0] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(W[1] == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("walras residual examples") {
  const MarketInstance inst = toy(10.0, false);
  MarketState s;
  s.d = {0.0};
  s.L = {{1.0}};
  s.W = {{0.0}};
  s.lambda_l = {{1.0}};
  s.lambda_w = {{0.0}};
  const auto a = walras_residuals(inst, s);
  CHECK(a.source.complementarity == doctest::Approx(1.0));
  CHECK(a.source.violation == 0.0);
  s.L = {{0.0}};
  s.lambda_l = {{0.0}};
  const auto b = walras_residuals(inst, s);
  CHECK(b.max() == 0.0);
}

TEST_CASE("toy market equilibrium") {
  const double gamma = 1e-3;
  const auto oracle = grid_min(
      [&](const std::vector<double>& p) { return toy_price_objective(10.0, false, gamma, p[0], p[1], 0.0); },
      {0.0, 0.0}, {4.0, 8.0}, 41, 30);
  CHECK(oracle[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(oracle[1] == doctest::Approx(2.0 + gamma * (1.0 + std::log(2.0))).epsilon(1e-6));

  const auto eq = solve_market(toy(10.0, false), toy_config());
  CHECK(eq.state.lambda_l[0][0] == doctest::Approx(oracle[0]).epsilon(1e-3));
  CHECK(eq.state.lambda_w[0][0] == doctest::Approx(oracle[1]).epsilon(1e-3));
  CHECK(eq.state.d[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.state.L[0][0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.state.W[0][0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(eq.beta[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(eq.walras.max() <= 1e-3);
  CHECK_FALSE(eq.price_cap_active);
  CHECK(eq.productive);
}

TEST_CASE("toy market with too little income") {
  const auto eq = solve_market(toy(3.0, false), toy_config());
  CHECK(eq.beta[0] <= 1e-3);
  CHECK(eq.state.W[0][0] <= 1e-3);
  CHECK(eq.state.d[0] <= 1e-3);
  CHECK(eq.state.L[0][0] <= 1e-3);
  CHECK(eq.surplus[0] <= 1e-3);
  CHECK(eq.walras.max() <= 1e-2);
}

TEST_CASE("toy market with a scarce material") {
  const double gamma = 1e-3;
  const auto oracle = grid_min(
      [&](const std::vector<double>& p) { return toy_price_objective(10.0, true, gamma, p[0], p[1], p[2]); },
      {0.0, 0.0, 0.0}, {8.0, 8.0, 8.0}, 21, 40);
  CHECK(oracle[0] == doctest::Approx(4.0 - gamma).epsilon(1e-4));
  CHECK(oracle[1] == doctest::Approx(5.0).epsilon(1e-4));
  CHECK(oracle[2] == doctest::Approx(3.0 - gamma).epsilon(1e-4));

  MarketConfig cfg = toy_config();
  cfg.allow_unproductive = true;
  const MarketInstance inst = toy(10.0, true);
  CHECK_THROWS_AS(solve_market(inst, toy_config()), InputError);
  const auto eq = solve_market(inst, cfg);
  CHECK_FALSE(eq.productive);
  CHECK(eq.state.d[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(eq.state.L[0][0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(eq.state.W[0][0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(eq.beta[0] == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(eq.state.lambda_w[0][0] == doctest::Approx(oracle[1]).epsilon(1e-3));
  CHECK(eq.state.y[0] == doctest::Approx(oracle[2]).epsilon(1e-3));
  CHECK(eq.walras.max() <= 1e-2);
}

TEST_CASE("producer profit envelope") {
  Producer p;
  p.u_max = {4.0, 2.0};
  p.c = {0.5, 0.2};
  p.A = {0.0, 0.3, 0.2, 0.0};
  p.R = {1.0, 0.5};
  p.chi = 0.7;
  std::mt19937_64 rng(83);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  const double eps = 1e-7;
  for (int trial = 0; trial < 30; ++trial) {
    const std::vector<double> ll{u(rng), u(rng)}, lw{u(rng) / 3, u(rng) / 3}, y{u(rng) / 3};
    const auto r = producer_best_response(p, ll, lw, y);
    bool near_kink = std::abs(r.profit) < 1e-3;
    for (const double m : r.margin) near_kink = near_kink || std::abs(m) < 1e-3;
    if (near_kink) continue;
    for (std::size_t k = 0; k < 2; ++k) {
      auto up = ll, down = ll;
      up[k] += eps;
      down[k] -= eps;
      const double fd = (producer_best_response(p, up, lw, y).profit - producer_best_response(p, down, lw, y).profit) / (2 * eps);
      CHECK(fd == doctest::Approx(r.L[k]).epsilon(1e-6).scale(1.0));
    }
    auto up = y, down = y;
    up[0] += eps;
    down[0] -= eps;
    const double fd = (producer_best_response(p, ll, lw, up).profit - producer_best_response(p, ll, lw, down).profit) / (2 * eps);
    CHECK(fd == doctest::Approx(-(r.L[0] + 0.5 * r.L[1])).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("scaling prices and money leaves choices unchanged") {
  std::mt19937_64 rng(89);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Producer p;
  p.u_max = {4.0, 2.0};
  p.c = {0.5, 0.2};
  p.A = {0.0, 0.3, 0.2, 0.0};
  p.R = {1.0, 0.5};
  p.chi = 0.7;
  Consumer cn;
  cn.properties = 2;
  cn.Q = {1.0, 0.5, 0.2, 1.0};
  cn.sigma_min = {1.0, 2.0};
  cn.income = 4.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double s = 0.5 + u(rng);
    const std::vector<double> ll{u(rng), u(rng)}, lw{u(rng), u(rng)}, y{u(rng) / 4};
    auto scaled = [s](std::vector<double> v) {
      for (double& x : v) x *= s;
      return v;
    };
    Producer ps = p;
    ps.c = scaled(p.c);
    ps.chi = s * p.chi;
    Consumer cs = cn;
    cs.income = s * cn.income;
    const auto a = producer_best_response(p, ll, lw, y), b = producer_best_response(ps, scaled(ll), scaled(lw), scaled(y));
    CHECK(b.profit == doctest::Approx(s * a.profit));
    CHECK(a.L == b.L);
    const auto c = consumer_best_response(cn, lw), e = consumer_best_response(cs, scaled(lw));
    CHECK(e.surplus == doctest::Approx(s * c.surplus));
    for (std::size_t k = 0; k < 2; ++k) CHECK(c.W[k] == doctest::Approx(e.W[k]));
  }
}

TEST_CASE("market saddle gap trace decreases") {
  MarketConfig cfg = toy_config();
  cfg.record_trace = true;
  cfg.max_iter = 2000;
  cfg.tol = 0.0;
  const auto eq = solve_market(toy(10.0, false), cfg);
  REQUIRE(eq.trace.size() > 100);
  CHECK(eq.trace.back().gap_average < 0.1 * eq.trace[9].gap_average);
}

TEST_CASE("market input validation") {
  MarketInstance bad = toy(10.0, false);
  bad.consumers[0].Q = {0.0};
  CHECK_THROWS_AS(bad.validate(), InputError);
  MarketInstance neg = toy(10.0, false);
  neg.producers[0].c = {-1.0};
  CHECK_THROWS_AS(neg.validate(), InputError);
  MarketInstance shape = toy(10.0, false);
  shape.b = {1.0};
  CHECK_THROWS_AS(shape.validate(), InputError);
}

namespace {

// Two goods, a fixed cost, intermediate inputs bought at a co-located sink,
// one scarce material and a consumer priced out at the margin.
MarketInstance two_good_market() {
  MarketInstance inst;
  inst.goods = 2;
  inst.materials = 1;
  inst.b = {30.0};
  Producer p0;
  p0.u_max = {8, 6};
  p0.chi = 1.0;
  p0.A = {0, 0.2, 0.1, 0};
  p0.c = {1, 1.5};
  p0.R = {1, 1};
  p0.sink = 0;
  Producer p1;
  p1.u_max = {5, 9};
  p1.A = {0, 0, 0, 0};
  p1.c = {1.2, 0.8};
  p1.R = {0.5, 1};
  Consumer c0{2, {1, 0.5, 0.2, 1}, {2, 2}, 12.0};
  Consumer c1{1, {1, 1}, {3}, 15.0};
  Consumer c2{2, {1, 0, 0, 1}, {1, 2}, 4.0};
  inst.producers = {p0, p1};
  inst.consumers = {c0, c1, c2};
  inst.transport = TransportModel::fixed({2, 3, {0.0, 1.0, 2.0, 1.5, 0.5, 1.0}});
  inst.gamma = 0.05;
  return inst;
}

}  // namespace

TEST_CASE("two-good market satisfies the Walras laws and agent optimality") {
  // Consumer 2 is exactly indifferent, so the equilibrium has a vanishing
  // participation level that the saddle iterates approach slowly.
  MarketConfig cfg;
  cfg.tol = 1e-3;
  const MarketInstance inst = two_good_market();
  const auto eq = solve_market(inst, cfg);
  CHECK(eq.converged);
  CHECK(eq.productive);
  CHECK_FALSE(eq.unrouted_inputs);
  CHECK_FALSE(eq.price_cap_active);
  CHECK(eq.walras.max() <= 1e-3);
  for (std::size_t i = 0; i < 2; ++i) {
    if (eq.profit[i] > 1e-3) CHECK(eq.alpha[i] == doctest::Approx(1.0).epsilon(1e-3));
    if (eq.alpha[i] < 1.0 - 1e-3) CHECK(eq.profit[i] <= 1e-3);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    if (eq.surplus[j] > 1e-3) CHECK(eq.beta[j] == doctest::Approx(1.0).epsilon(1e-3));
    if (eq.beta[j] < 1.0 - 1e-3) CHECK(eq.surplus[j] <= 1e-3);
    // Consumption is a cheapest bundle at the reported prices.
    const auto br = consumer_best_response(inst.consumers[j], eq.state.lambda_w[j]);
    double cost = 0.0;
    for (std::size_t k = 0; k < 2; ++k) cost += eq.state.lambda_w[j][k] * eq.state.W[j][k];
    CHECK(cost == doctest::Approx(eq.beta[j] * br.cost).epsilon(1e-3).scale(1.0));
  }
  CHECK(eq.beta[2] <= 1e-3);
}

TEST_CASE("inputs without a co-located sink are flagged") {
  MarketInstance inst = two_good_market();
  inst.producers[0].sink.reset();
  MarketConfig cfg;
  cfg.tol = 1e-2;
  CHECK(solve_market(inst, cfg).unrouted_inputs);
}
