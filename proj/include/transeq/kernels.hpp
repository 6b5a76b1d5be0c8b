#pragma once

// Data-parallel inner loops. Each kernel has a serial reference version and an
// OpenMP version that produces bitwise-identical output; the unsuffixed entry
// point dispatches to the OpenMP build when available.

#include <cstddef>
#include <span>
#include <vector>

#include "transeq/network.hpp"

namespace transeq::kernels {

bool parallel_available();

struct AonLoad {
  EdgeVector load;              // sum over pairs of demand along the shortest path
  std::vector<double> od_cost;  // shortest-path cost per pair, kInfinity if disconnected
  std::vector<Path> od_path;    // the tie-broken shortest path per pair
};

// All-or-nothing loading under weights t. One shortest-path tree per distinct
// origin; loads are accumulated in pair order.
AonLoad all_or_nothing_serial(const Network& network, std::span<const double> t,
                              std::span<const OdPair> pairs, std::span<const double> demand);
AonLoad all_or_nothing_parallel(const Network& network, std::span<const double> t,
                                std::span<const OdPair> pairs, std::span<const double> demand);
AonLoad all_or_nothing(const Network& network, std::span<const double> t,
                       std::span<const OdPair> pairs, std::span<const double> demand);

struct SinkhornResult {
  std::vector<double> plan;  // rows x cols, row-major
  std::vector<double> log_u;
  std::vector<double> log_v;
  std::size_t iterations = 0;
  double margin_residual = kInfinity;
  bool converged = false;
};

struct SinkhornProblem {
  std::span<const double> cost;  // rows x cols, row-major; kInfinity marks a missing pair
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const double> row_mass;
  std::span<const double> col_mass;
  double gamma = 1.0;
};

// Log-domain alternating scaling plan_ij = u_i exp(-cost_ij / gamma) v_j.
// Stops once the row-margin residual (columns are exact after each sweep) is
// at most tol.
SinkhornResult sinkhorn_serial(const SinkhornProblem& problem, double tol, std::size_t max_iter);
SinkhornResult sinkhorn_parallel(const SinkhornProblem& problem, double tol, std::size_t max_iter);
SinkhornResult sinkhorn(const SinkhornProblem& problem, double tol, std::size_t max_iter);

}  // namespace transeq::kernels
