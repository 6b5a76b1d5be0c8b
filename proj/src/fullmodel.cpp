#include "transeq/fullmodel.hpp"

#include <algorithm>
#include <cmath>

#include "market_detail.hpp"
#include "transeq/errors.hpp"

namespace transeq {

void FullInstance::validate() const {
  market.validate();
  if (market.transport.is_fixed()) throw InputError("full model: the transport must be a network");
  if (path_budget == 0) throw InputError("full model: path_budget must be > 0");
}

SaddleProblem assemble_full(const FullInstance& inst, double price_cap) {
  inst.validate();
  return detail::assemble(inst.market, detail::market_layout(inst.market, inst.path_budget), price_cap);
}

namespace {

// Row-major shortest-path costs between the transport origins and
// destinations under edge weights w; kInfinity off the admissible pairs.
std::vector<double> pair_costs(const TransportModel& tm, std::span<const double> w) {
  const Network& net = *tm.network_ptr();
  std::vector<double> out(tm.rows() * tm.cols(), kInfinity);
  for (std::size_t i = 0; i < tm.rows(); ++i) {
    const ShortestPathTree tree = shortest_path(net, w, tm.origins()[i]);
    for (std::size_t j = 0; j < tm.cols(); ++j)
      if (tm.admissible(i, j)) out[i * tm.cols() + j] = tree.distance[tm.destinations()[j]];
  }
  return out;
}

}  // namespace

FullEquilibrium solve_full(const FullInstance& inst, const FullConfig& cfg) {
  inst.validate();
  const MarketInstance& mk = inst.market;
  const ProductivityReport prod = productivity_check(mk);
  if (!prod.ok && !cfg.market.allow_unproductive)
    throw InputError("market: productivity check failed: " + prod.message);
  const detail::MarketLayout lay = detail::market_layout(mk, inst.path_budget);
  const double cap = cfg.market.price_cap.value_or(default_price_cap(mk));
  const SaddleProblem problem = detail::assemble(mk, lay, cap);
  SaddleConfig sc;
  sc.tol = cfg.market.tol;
  sc.max_iter = cfg.market.max_iter;
  sc.step = cfg.market.step;
  sc.record_trace = cfg.market.record_trace;
  const SaddleResult r = mirror_prox(problem, sc);

  FullEquilibrium out;
  out.market = detail::read_equilibrium(mk, lay, r, cap);
  out.market.productive = prod.ok;
  const Network& net = *mk.transport.network_ptr();
  out.t = lay.bt == detail::MarketLayout::npos ? net.free_flow_times() : r.best[lay.bt];
  for (std::size_t e = 0; e < out.t.size(); ++e)
    if (lay.t_upper[e] < max_dual_time(net.edge(e).cost) && out.t[e] >= lay.t_lower[e] + 0.999 * (lay.t_upper[e] - lay.t_lower[e]))
      out.time_cap_active = true;

  const DemandMatrix demand = mk.transport.demand(detail::pair_masses(lay, r.best));
  SolveConfig wc = cfg.wardrop;
  wc.path_budget = inst.path_budget;
  const AssignmentResult a = solve_wardrop(net, demand, wc);
  out.x = a.paths;
  out.f = a.flow;
  out.wardrop_residual = a.wardrop_residual;
  out.t_cost = pair_costs(mk.transport, out.t);
  out.assignment_cost = pair_costs(mk.transport, net.times(a.flow));
  for (std::size_t k = 0; k < out.t_cost.size(); ++k)
    if (out.t_cost[k] < kInfinity)
      out.cost_mismatch = std::max(out.cost_mismatch, std::abs(out.t_cost[k] - out.assignment_cost[k]));
  out.market.converged = r.converged && out.wardrop_residual <= 1e-4;
  return out;
}

}  // namespace transeq
