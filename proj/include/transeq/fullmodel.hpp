#pragma once

#include <cstddef>
#include <vector>

#include "transeq/assignment.hpp"
#include "transeq/market.hpp"

namespace transeq {

// A market whose transport is a network model. Hard-capacity edges must be
// smoothed (smooth_capacities) before the transport model is built.
struct FullInstance {
  MarketInstance market;
  std::size_t path_budget = 64;  // simple paths per producer-consumer pair

  void validate() const;
};

struct FullConfig {
  MarketConfig market;
  SolveConfig wardrop{.tol = 1e-10, .max_iter = 100000};
};

struct FullEquilibrium {
  MarketEquilibrium market;
  EdgeVector t;                  // edge times of the dual block
  bool time_cap_active = false;  // some t_e sits at the artificial upper bound
  PathFlows x;                   // Wardrop flows recovered at the final d
  EdgeVector f;
  double wardrop_residual = 0.0;
  // Row-major pair costs: shortest paths under t and under the recovered
  // equilibrium times. kInfinity off the admissible pairs.
  std::vector<double> t_cost;
  std::vector<double> assignment_cost;
  double cost_mismatch = 0.0;  // max |t_cost - assignment_cost| over admissible pairs
};

// Blocks: d per (pair, good, route), L, weights, prices, then edge times t on
// [t_bar, min(sup of the dual times, 1e6 max(t_bar, 1))].
SaddleProblem assemble_full(const FullInstance& inst, double price_cap);

FullEquilibrium solve_full(const FullInstance& inst, const FullConfig& cfg = {});

}  // namespace transeq
