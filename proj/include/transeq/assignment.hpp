#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "transeq/network.hpp"

namespace transeq {

// Per-pair demand vectors; one entry per commodity (a single commodity for
// plain assignment).
struct DemandMatrix {
  std::vector<OdPair> pairs;
  std::vector<std::vector<double>> amounts;

  static DemandMatrix single(std::vector<OdPair> pairs, const std::vector<double>& demand);

  std::size_t size() const { return pairs.size(); }
  std::size_t commodities() const { return amounts.empty() ? 1 : amounts.front().size(); }
  // Sum over commodities for pair w.
  double total(std::size_t w) const;
  std::vector<double> totals() const;
  double mass() const;

  // Throws InputError on negative or non-finite entries, ragged commodity
  // vectors or out-of-range nodes.
  void validate(const Network& network) const;
};

enum class LineSearch { Exact, Fixed };

struct SolveConfig {
  double tol = 1e-6;
  std::size_t max_iter = 20000;
  LineSearch line_search = LineSearch::Exact;
  bool away_steps = true;
  double gamma_tilde = 1.0;
  std::size_t path_budget = 64;
  double flow_eps = 1e-9;
  bool record_trace = false;
};

struct IterateRecord {
  std::size_t iteration = 0;
  double beckmann = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
};

struct OdPathFlows {
  OdPair od;
  double demand = 0.0;
  std::vector<Path> paths;
  std::vector<double> flows;
};

using PathFlows = std::vector<OdPathFlows>;

EdgeVector link_flows(const Network& network, const PathFlows& x);

struct AssignmentResult {
  EdgeVector flow;
  EdgeVector time;
  double beckmann = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  double wardrop_residual = 0.0;
  // gap / (smallest used path flow); a certified upper bound on the residual.
  double residual_bound = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  PathFlows paths;                // positive-demand pairs only
  std::vector<double> od_cost;    // shortest-path cost per input pair at `time`
  std::vector<IterateRecord> trace;
};

double beckmann(const Network& network, std::span<const double> flow);

// sum_w d_w T_w(t) - sum_e sigma*_e(t_e). Accepts HardCap edges.
double dual_value(const Network& network, const DemandMatrix& demands, std::span<const double> t);

// Frank-Wolfe on the Beckmann potential with per-pair path tracking. Away
// steps (on by default) move flow off the costliest used path.
AssignmentResult solve_wardrop(const Network& network, const DemandMatrix& demands,
                               const SolveConfig& cfg = {});

// Largest excess cost of a used path over the pair's shortest path, at the
// times induced by x.
double wardrop_residual(const Network& network, const PathFlows& x, double flow_eps = 1e-9);

struct CostMap {
  std::vector<double> od_cost;  // T_w at the equilibrium of d, for every pair
  double potential = 0.0;       // optimal Beckmann value Phi(d)
  AssignmentResult assignment;
};

CostMap cost_map(const Network& network, const DemandMatrix& demands, const SolveConfig& cfg = {});

struct StochasticResult {
  PathFlows paths;
  EdgeVector flow;
  EdgeVector time;
  double objective = 0.0;
  // max |x_p - d_w softmax(-G / gamma_tilde)_p|
  double fixed_point_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Entropic objective Psi(f(x)) + gamma_tilde sum x_p ln(x_p / d_w).
double stochastic_objective(const Network& network, const PathFlows& x, double gamma_tilde);

// Enumerates every simple path per pair (bounded by cfg.path_budget) and runs
// entropic mirror descent with backtracking.
StochasticResult solve_stochastic(const Network& network, const DemandMatrix& demands,
                                  const SolveConfig& cfg);

struct LpLimitResult {
  EdgeVector flow;
  EdgeVector time;       // dual times, equal to free flow on unsaturated edges
  double objective = 0.0;
  double dual_objective = 0.0;
  std::size_t augmentations = 0;
};

// Min-cost flow with hard capacities by successive shortest paths. All edges
// must be HardCap and the pairs must share one origin or one destination.
// Throws InfeasibleError naming a cut whose capacity is below the demand.
LpLimitResult lp_limit(const Network& network, const DemandMatrix& demands);

}  // namespace transeq
