#include <algorithm>
#include <cmath>

#include "transeq/assignment.hpp"
#include "transeq/errors.hpp"

namespace transeq {

namespace {

constexpr double kFloor = 1e-300;

std::vector<double> path_costs(const OdPathFlows& od, const EdgeVector& t) {
  std::vector<double> g(od.paths.size());
  for (std::size_t p = 0; p < g.size(); ++p) g[p] = path_cost(t, od.paths[p]);
  return g;
}

// d * softmax(scores), computed with the usual max shift.
std::vector<double> scaled_softmax(const std::vector<double>& scores, double mass) {
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t p = 0; p < scores.size(); ++p) sum += (out[p] = std::exp(scores[p] - top));
  for (double& x : out) x = mass * x / sum;
  return out;
}

double entropy_term(const PathFlows& x) {
  double total = 0.0;
  for (const OdPathFlows& od : x)
    for (const double xp : od.flows)
      if (xp > 0.0) total += xp * std::log(xp / od.demand);
  return total;
}

double fixed_point_residual(const PathFlows& x, const EdgeVector& t, double gamma_tilde) {
  double residual = 0.0;
  for (const OdPathFlows& od : x) {
    std::vector<double> scores = path_costs(od, t);
    for (double& s : scores) s = -s / gamma_tilde;
    const std::vector<double> target = scaled_softmax(scores, od.demand);
    for (std::size_t p = 0; p < target.size(); ++p)
      residual = std::max(residual, std::abs(od.flows[p] - target[p]));
  }
  return residual;
}

}  // namespace

double stochastic_objective(const Network& network, const PathFlows& x, double gamma_tilde) {
  return beckmann(network, link_flows(network, x)) + gamma_tilde * entropy_term(x);
}

StochasticResult solve_stochastic(const Network& network, const DemandMatrix& demands,
                                  const SolveConfig& cfg) {
  demands.validate(network);
  if (network.has_hard_caps()) throw InputError("hard-capacity edges are not supported here");
  if (!(cfg.gamma_tilde > 0.0)) throw InputError("gamma_tilde must be > 0");

  StochasticResult result;
  for (std::size_t w = 0; w < demands.size(); ++w) {
    const double d = demands.total(w);
    if (d == 0.0) continue;
    OdPathFlows od;
    od.od = demands.pairs[w];
    od.demand = d;
    od.paths = enumerate_simple_paths(network, od.od.origin, od.od.destination, cfg.path_budget);
    if (od.paths.empty()) throw InputError("no route for od pair " + describe(network, od.od));
    od.flows.assign(od.paths.size(), d / static_cast<double>(od.paths.size()));
    result.paths.push_back(std::move(od));
  }

  const double gt = cfg.gamma_tilde;
  PathFlows& x = result.paths;
  double eta = 1.0;
  EdgeVector f = link_flows(network, x);
  EdgeVector t = network.times(f);
  for (std::size_t it = 0;; ++it) {
    result.iterations = it;
    result.fixed_point_residual = fixed_point_residual(x, t, gt);
    if (result.fixed_point_residual <= cfg.tol) {
      result.converged = true;
      break;
    }
    if (it == cfg.max_iter) break;

    std::vector<std::vector<double>> grads;
    grads.reserve(x.size());
    for (const OdPathFlows& od : x) grads.push_back(path_costs(od, t));

    // Composite entropic prox step; the entropy term enters exactly. The
    // acceptance test uses sum (dtau)(df) >= Bregman remainder of the
    // Beckmann part, which is free of cancellation near the fixed point.
    for (;;) {
      PathFlows next = x;
      double divergence = 0.0;
      for (std::size_t w = 0; w < x.size(); ++w) {
        std::vector<double> scores(x[w].flows.size());
        for (std::size_t p = 0; p < scores.size(); ++p)
          scores[p] = (std::log(std::max(x[w].flows[p], kFloor)) - eta * grads[w][p]) / (1.0 + eta * gt);
        next[w].flows = scaled_softmax(scores, x[w].demand);
        for (std::size_t p = 0; p < scores.size(); ++p) {
          const double a = next[w].flows[p], b = std::max(x[w].flows[p], kFloor);
          const double r = (a - b) / b;
          divergence += b * ((1.0 + r) * std::log1p(r) - r);
        }
      }
      const EdgeVector f_next = link_flows(network, next);
      const EdgeVector t_next = network.times(f_next);
      double curvature = 0.0;
      for (EdgeId e = 0; e < f.size(); ++e) curvature += (t_next[e] - t[e]) * (f_next[e] - f[e]);
      if (curvature <= divergence / eta || eta < 1e-12) {
        x = std::move(next);
        f = f_next;
        t = t_next;
        eta = std::min(2.0 * eta, 1e12);
        break;
      }
      eta *= 0.5;
    }
  }

  result.flow = f;
  result.time = t;
  result.objective = beckmann(network, f) + gt * entropy_term(x);
  return result;
}

}  // namespace transeq
