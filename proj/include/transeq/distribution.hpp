#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "transeq/assignment.hpp"
#include "transeq/kernels.hpp"
#include "transeq/saddle.hpp"

namespace transeq {

// Row-major source x sink travel costs; kInfinity marks a pair with no route.
struct FixedCosts {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> cost;

  double at(std::size_t i, std::size_t j) const { return cost[i * cols + j]; }
};

// The transporter's potential Phi over source x sink masses and its gradient
// T. Either fixed costs (Phi linear) or equilibrium costs of a network,
// obtained from cost_map.
class TransportModel {
 public:
  static TransportModel fixed(FixedCosts costs);
  // Pairs with equal origin and destination node travel at cost 0 and bypass
  // the network.
  static TransportModel network(Network net, std::vector<NodeId> origins,
                                std::vector<NodeId> destinations, SolveConfig inner = {});

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool is_fixed() const { return !net_.has_value(); }
  const Network* network_ptr() const { return net_ ? &*net_ : nullptr; }
  const std::vector<NodeId>& origins() const { return origins_; }
  const std::vector<NodeId>& destinations() const { return destinations_; }
  SolveConfig& inner() { return inner_; }
  const SolveConfig& inner() const { return inner_; }

  // Free-flow (zero mass) costs; kInfinity marks unroutable pairs.
  const std::vector<double>& base_cost() const { return base_; }
  bool admissible(std::size_t i, std::size_t j) const { return base_[i * cols_ + j] < kInfinity; }

  struct Evaluation {
    double potential = 0.0;
    std::vector<double> cost;  // row-major T_ij
    double inner_gap = 0.0;
  };
  Evaluation evaluate(std::span<const double> mass) const;

  // Demand matrix of the network pairs for a row-major mass matrix.
  DemandMatrix demand(std::span<const double> mass) const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> base_;
  std::optional<Network> net_;
  std::vector<NodeId> origins_, destinations_;
  SolveConfig inner_;
};

// sigma(f) = alpha f + beta f^2 / 2 on the total shipped from (or received
// at) a site. Consumption sites carry utilities with a minus sign.
struct QuadraticSite {
  double alpha = 0.0;
  double beta = 0.0;

  double value(double f) const { return alpha * f + 0.5 * beta * f * f; }
  double slope(double f) const { return alpha + beta * f; }
};

struct DistributionConfig {
  double tol = 1e-6;
  std::size_t max_iter = 100000;
  double flow_eps = 1e-9;
  bool record_trace = false;
  double step = 1.0;  // initial step for the saddle engine
};

struct DistributionResult {
  std::size_t rows = 0, cols = 0;
  std::vector<double> d;         // row-major
  double d0 = 0.0;               // unused mass of the potential model
  double total_cap = 0.0;        // d-bar used by the potential model
  std::vector<double> lambda_l;  // constrained model
  std::vector<double> lambda_w;
  std::vector<double> pair_cost;  // G_ij (potential) or T_ij (constrained)
  double objective = 0.0;
  double first_order_residual = 0.0;
  double equilibrium_residual = 0.0;
  double margin_residual = 0.0;
  double gap = 0.0;
  bool cap_binds = false;     // d0 = 0: the total-mass cap is active
  bool price_bound_active = false;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<TraceRecord> trace;
};

// Potential model over {d >= 0, sum d + d0 = d_bar}: objective
// sum sigma_i + sum sigma_j + Phi(d) + gamma (sum d ln(d/d_bar) + d0 ln(d0/d_bar)).
class PotentialModel {
 public:
  PotentialModel(TransportModel transport, std::vector<QuadraticSite> sources,
                 std::vector<QuadraticSite> sinks, std::optional<double> total_cap = std::nullopt,
                 double gamma = 0.0);

  const TransportModel& transport() const { return transport_; }
  std::size_t rows() const { return transport_.rows(); }
  std::size_t cols() const { return transport_.cols(); }
  double total_cap() const { return total_cap_; }
  double gamma() const { return gamma_; }

  struct Evaluation {
    double smooth = 0.0;            // objective without the entropy term
    double entropic = 0.0;          // with it
    std::vector<double> pair_cost;  // G_ij = sigma_i' + T_ij + sigma_j'
  };
  Evaluation evaluate(std::span<const double> d, double d0) const;

  // Largest profitable total trade implied by the site slopes (kInfinity if
  // unbounded).
  static double trade_bound(const std::vector<QuadraticSite>& sources,
                            const std::vector<QuadraticSite>& sinks, const std::vector<double>& base_cost);

 private:
  TransportModel transport_;
  std::vector<QuadraticSite> sources_, sinks_;
  double total_cap_ = 0.0;
  double gamma_ = 0.0;
};

// gamma = 0: projected gradient with backtracking. gamma > 0: entropic
// mirror descent to the logit fixed point d = d_bar softmax(-G / gamma).
DistributionResult solve_potential(const PotentialModel& model, const DistributionConfig& cfg = {});

// Saddle form of the doubly constrained model:
//   min over {d >= 0, sum d = N} max over lambda of
//   Phi(d) + gamma sum d ln(d / N) + <lambda_l, L - row sums> + <lambda_w, W - col sums>.
SaddleProblem assemble_constrained(const TransportModel& transport, const std::vector<double>& row_margin,
                                   const std::vector<double>& col_margin, double gamma);

DistributionResult solve_constrained(const TransportModel& transport, const std::vector<double>& row_margin,
                                     const std::vector<double>& col_margin, double gamma,
                                     const DistributionConfig& cfg = {});

struct GravityResult {
  std::size_t rows = 0, cols = 0;
  std::vector<double> d;
  double objective = 0.0;  // sum T d + gamma sum d ln(d / N)
  double margin_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

GravityResult gravity_sinkhorn(const FixedCosts& costs, const std::vector<double>& row_margin,
                               const std::vector<double>& col_margin, double gamma,
                               const DistributionConfig& cfg = {});

// Largest |row sum - L_i| and |col sum - W_j|.
double margin_residual(std::size_t rows, std::size_t cols, std::span<const double> d,
                       const std::vector<double>& row_margin, const std::vector<double>& col_margin);

}  // namespace transeq
