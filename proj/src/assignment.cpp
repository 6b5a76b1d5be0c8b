#include "transeq/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "transeq/errors.hpp"
#include "transeq/kernels.hpp"

namespace transeq {

DemandMatrix DemandMatrix::single(std::vector<OdPair> pairs, const std::vector<double>& demand) {
  DemandMatrix out;
  out.pairs = std::move(pairs);
  out.amounts.reserve(demand.size());
  for (const double d : demand) out.amounts.push_back({d});
  return out;
}

double DemandMatrix::total(std::size_t w) const {
  double sum = 0.0;
  for (const double a : amounts[w]) sum += a;
  return sum;
}

std::vector<double> DemandMatrix::totals() const {
  std::vector<double> out(pairs.size());
  for (std::size_t w = 0; w < pairs.size(); ++w) out[w] = total(w);
  return out;
}

double DemandMatrix::mass() const {
  double sum = 0.0;
  for (std::size_t w = 0; w < pairs.size(); ++w) sum += total(w);
  return sum;
}

void DemandMatrix::validate(const Network& network) const {
  if (amounts.size() != pairs.size()) throw InputError("demand: one amount vector per od pair required");
  const std::size_t m = commodities();
  for (std::size_t w = 0; w < pairs.size(); ++w) {
    if (pairs[w].origin >= network.node_count() || pairs[w].destination >= network.node_count())
      throw InputError("demand " + std::to_string(w) + ": node out of range");
    if (pairs[w].origin == pairs[w].destination)
      throw InputError("demand " + std::to_string(w) + ": origin equals destination");
    if (amounts[w].size() != m) throw InputError("demand " + std::to_string(w) + ": commodity count differs");
    for (const double a : amounts[w])
      if (!(a >= 0.0) || !std::isfinite(a))
        throw InputError("demand " + std::to_string(w) + ": amounts must be finite and >= 0");
  }
}

EdgeVector link_flows(const Network& network, const PathFlows& x) {
  EdgeVector f(network.edge_count(), 0.0);
  for (const OdPathFlows& od : x)
    for (std::size_t p = 0; p < od.paths.size(); ++p) accumulate_path(f, od.paths[p], od.flows[p]);
  return f;
}

double beckmann(const Network& network, std::span<const double> flow) {
  if (flow.size() != network.edge_count()) throw InputError("flow length differs from edge count");
  double total = 0.0;
  for (EdgeId e = 0; e < network.edge_count(); ++e) total += edge_sigma(network.edge(e).cost, flow[e]);
  return total;
}

double dual_value(const Network& network, const DemandMatrix& demands, std::span<const double> t) {
  if (t.size() != network.edge_count()) throw InputError("time length differs from edge count");
  for (EdgeId e = 0; e < network.edge_count(); ++e) {
    if (t[e] < free_flow_time(network.edge(e).cost))
      throw InputError("edge " + std::to_string(e) + ": time below free-flow time");
  }
  const std::vector<double> totals = demands.totals();
  const auto aon = kernels::all_or_nothing(network, t, demands.pairs, std::vector<double>(totals.size(), 0.0));
  double value = 0.0;
  for (std::size_t w = 0; w < totals.size(); ++w) {
    if (totals[w] == 0.0) continue;
    if (!(aon.od_cost[w] < kInfinity))
      throw InputError("no route for od pair " + describe(network, demands.pairs[w]));
    value += totals[w] * aon.od_cost[w];
  }
  for (EdgeId e = 0; e < network.edge_count(); ++e)
    value -= edge_sigma_conjugate(network.edge(e).cost, t[e]);
  return value;
}

double wardrop_residual(const Network& network, const PathFlows& x, double flow_eps) {
  const EdgeVector t = network.times(link_flows(network, x));
  double residual = 0.0;
  std::vector<OdPair> pairs;
  for (const OdPathFlows& od : x) pairs.push_back(od.od);
  const auto aon = kernels::all_or_nothing(network, t, pairs, std::vector<double>(pairs.size(), 0.0));
  for (std::size_t w = 0; w < x.size(); ++w) {
    for (std::size_t p = 0; p < x[w].paths.size(); ++p) {
      if (x[w].flows[p] <= flow_eps) continue;
      residual = std::max(residual, path_cost(t, x[w].paths[p]) - aon.od_cost[w]);
    }
  }
  return residual;
}

namespace {

struct PairState {
  std::size_t input_index = 0;
  OdPair od;
  double demand = 0.0;
  std::vector<Path> paths;
  std::vector<double> flows;
  std::map<Path, std::size_t> index;

  std::size_t slot(const Path& path) {
    const auto [it, inserted] = index.try_emplace(path, paths.size());
    if (inserted) {
      paths.push_back(path);
      flows.push_back(0.0);
    }
    return it->second;
  }

  void prune() {
    std::vector<Path> kept_paths;
    std::vector<double> kept_flows;
    index.clear();
    for (std::size_t p = 0; p < paths.size(); ++p) {
      if (flows[p] <= 0.0) continue;
      index.emplace(paths[p], kept_paths.size());
      kept_paths.push_back(std::move(paths[p]));
      kept_flows.push_back(flows[p]);
    }
    paths = std::move(kept_paths);
    flows = std::move(kept_flows);
  }
};

EdgeVector flows_of(const Network& network, const std::vector<PairState>& state) {
  EdgeVector f(network.edge_count(), 0.0);
  for (const PairState& s : state)
    for (std::size_t p = 0; p < s.paths.size(); ++p) accumulate_path(f, s.paths[p], s.flows[p]);
  return f;
}

// d/ds of the Beckmann potential along f + s dir.
double slope(const Network& network, const EdgeVector& f, const EdgeVector& dir, double s) {
  double total = 0.0;
  for (EdgeId e = 0; e < f.size(); ++e) {
    if (dir[e] == 0.0) continue;
    total += edge_tau(network.edge(e).cost, std::max(0.0, f[e] + s * dir[e])) * dir[e];
  }
  return total;
}

double exact_step(const Network& network, const EdgeVector& f, const EdgeVector& dir, double s_max) {
  if (slope(network, f, dir, 0.0) >= 0.0) return 0.0;
  if (slope(network, f, dir, s_max) <= 0.0) return s_max;
  double lo = 0.0, hi = s_max;
  for (int k = 0; k < 64; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (slope(network, f, dir, mid) < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

PathFlows export_paths(const std::vector<PairState>& state) {
  PathFlows out;
  out.reserve(state.size());
  for (const PairState& s : state) out.push_back({s.od, s.demand, s.paths, s.flows});
  return out;
}

}  // namespace

AssignmentResult solve_wardrop(const Network& network, const DemandMatrix& demands,
                               const SolveConfig& cfg) {
  demands.validate(network);
  if (network.has_hard_caps())
    throw InputError("hard-capacity edges need the lp-limit solver or smoothing");
  if (!(cfg.tol > 0.0)) throw InputError("tol must be > 0");

  std::vector<PairState> state;
  std::vector<OdPair> active_pairs;
  std::vector<double> active_demand;
  for (std::size_t w = 0; w < demands.size(); ++w) {
    const double d = demands.total(w);
    if (d == 0.0) continue;
    PairState s;
    s.input_index = w;
    s.od = demands.pairs[w];
    s.demand = d;
    state.push_back(std::move(s));
    active_pairs.push_back(demands.pairs[w]);
    active_demand.push_back(d);
  }

  AssignmentResult result;
  EdgeVector t = network.free_flow_times();
  {
    const auto aon = kernels::all_or_nothing(network, t, active_pairs, active_demand);
    for (std::size_t k = 0; k < state.size(); ++k) {
      if (!(aon.od_cost[k] < kInfinity))
        throw InputError("no route for od pair " + describe(network, state[k].od));
      state[k].flows[state[k].slot(aon.od_path[k])] = state[k].demand;
    }
  }

  EdgeVector f = flows_of(network, state);
  double demand_cost = 0.0;
  for (std::size_t it = 0;; ++it) {
    t = network.times(f);
    const auto aon = kernels::all_or_nothing(network, t, active_pairs, active_demand);
    demand_cost = 0.0;
    for (std::size_t k = 0; k < state.size(); ++k) demand_cost += state[k].demand * aon.od_cost[k];
    double conjugate = 0.0;
    for (EdgeId e = 0; e < network.edge_count(); ++e)
      conjugate += edge_sigma_conjugate(network.edge(e).cost, t[e]);
    result.beckmann = beckmann(network, f);
    result.dual_value = demand_cost - conjugate;
    result.gap = result.beckmann - result.dual_value;
    result.iterations = it;
    if (cfg.record_trace) result.trace.push_back({it, result.beckmann, result.dual_value, result.gap});
    if (result.gap <= cfg.tol) {
      result.converged = true;
      break;
    }
    if (it == cfg.max_iter) break;

    double ft = 0.0;
    for (EdgeId e = 0; e < f.size(); ++e) ft += f[e] * t[e];
    const double fw_gap = ft - demand_cost;

    // Away vertex: every pair moves to its costliest used path.
    std::vector<std::size_t> worst(state.size(), 0);
    double away_cost = 0.0;
    double away_max = kInfinity;
    for (std::size_t k = 0; k < state.size(); ++k) {
      double cost = -kInfinity;
      for (std::size_t p = 0; p < state[k].paths.size(); ++p) {
        const double c = path_cost(t, state[k].paths[p]);
        if (c > cost) {
          cost = c;
          worst[k] = p;
        }
      }
      away_cost += state[k].demand * cost;
      const double x = state[k].flows[worst[k]];
      if (x < state[k].demand) away_max = std::min(away_max, x / (state[k].demand - x));
    }
    const double away_gap = away_cost - ft;

    const bool away = cfg.away_steps && cfg.line_search == LineSearch::Exact &&
                      away_gap > fw_gap && away_max < kInfinity;
    EdgeVector dir(f.size(), 0.0);
    double s_max = 1.0;
    if (away) {
      EdgeVector vertex(f.size(), 0.0);
      for (std::size_t k = 0; k < state.size(); ++k)
        accumulate_path(vertex, state[k].paths[worst[k]], state[k].demand);
      for (EdgeId e = 0; e < f.size(); ++e) dir[e] = f[e] - vertex[e];
      s_max = away_max;
    } else {
      for (EdgeId e = 0; e < f.size(); ++e) dir[e] = aon.load[e] - f[e];
    }

    const double s = cfg.line_search == LineSearch::Exact
                         ? exact_step(network, f, dir, s_max)
                         : 2.0 / (static_cast<double>(it) + 2.0);
    if (s == 0.0) break;

    for (std::size_t k = 0; k < state.size(); ++k) {
      PairState& ps = state[k];
      if (away) {
        const double x = ps.flows[worst[k]];
        if (x >= ps.demand) continue;
        for (double& xp : ps.flows) xp *= (1.0 + s);
        ps.flows[worst[k]] -= s * ps.demand;
        if (s == s_max && x / (ps.demand - x) == s_max) ps.flows[worst[k]] = 0.0;
        for (double& xp : ps.flows) xp = std::max(0.0, xp);
      } else {
        for (double& xp : ps.flows) xp *= (1.0 - s);
        ps.flows[ps.slot(aon.od_path[k])] += s * ps.demand;
      }
      ps.prune();
    }
    f = flows_of(network, state);
  }

  result.flow = f;
  result.time = t;
  result.paths = export_paths(state);
  const auto all = kernels::all_or_nothing(network, t, demands.pairs,
                                           std::vector<double>(demands.size(), 0.0));
  result.od_cost = all.od_cost;
  result.wardrop_residual = wardrop_residual(network, result.paths, cfg.flow_eps);
  double min_used = kInfinity;
  for (const PairState& s : state)
    for (const double x : s.flows)
      if (x > cfg.flow_eps) min_used = std::min(min_used, x);
  result.residual_bound = min_used < kInfinity ? std::max(result.gap, 0.0) / min_used : 0.0;
  return result;
}

CostMap cost_map(const Network& network, const DemandMatrix& demands, const SolveConfig& cfg) {
  CostMap out;
  out.assignment = solve_wardrop(network, demands, cfg);
  out.od_cost = out.assignment.od_cost;
  out.potential = out.assignment.beckmann;
  return out;
}

}  // namespace transeq
