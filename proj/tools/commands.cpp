#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "instance.hpp"
#include "transeq/dynamics.hpp"
#include "transeq/errors.hpp"
#include "transeq/fullmodel.hpp"

namespace transeq::cli {

using nlohmann::json;

namespace {

struct Flags {
  std::string command, instance, output, solution, csv, kind = "logit", target;
  std::optional<double> tol, gamma, gamma_tilde, mu, step, price_cap;
  std::optional<std::size_t> max_iter, horizon, path_budget;
  std::uint64_t seed = 0;
  bool timing = false, random_start = false, allow_unproductive = false;
};

// Resolved settings shared by the commands; echoed in every report.
struct Settings {
  double tol = 1e-6;
  std::size_t max_iter = 0;
  double step = 1.0;
  std::optional<double> mu, gamma;
  double gamma_tilde = 1.0;
  std::size_t path_budget = 64;

  json echo(const Flags& f) const {
    json j;
    j["tol"] = tol;
    j["max_iter"] = max_iter;
    j["step"] = step;
    j["mu"] = mu ? json(*mu) : json(nullptr);
    j["gamma"] = gamma ? json(*gamma) : json(nullptr);
    j["gamma_tilde"] = gamma_tilde;
    j["path_budget"] = path_budget;
    j["seed"] = f.seed;
    return j;
  }
};

json paths_json(const PathFlows& x) {
  json out = json::array();
  for (const auto& od : x) {
    json routes = json::array();
    for (std::size_t p = 0; p < od.paths.size(); ++p) routes.push_back({{"edges", od.paths[p]}, {"flow", od.flows[p]}});
    out.push_back({{"origin", od.od.origin}, {"destination", od.od.destination}, {"demand", od.demand}, {"routes", routes}});
  }
  return out;
}

std::size_t index_of(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) throw InputError(path + ": expected a nonnegative integer");
  return j.get<std::size_t>();
}

double finite_of(const json& j, const std::string& path) {
  if (!j.is_number()) throw InputError(path + ": expected a number");
  return j.get<double>();
}

PathFlows paths_from(const json& j, const Network& net, const std::string& path) {
  if (!j.is_array()) throw InputError(path + ": expected an array");
  PathFlows x;
  for (std::size_t w = 0; w < j.size(); ++w) {
    const std::string p = path + "[" + std::to_string(w) + "]";
    const json& o = j[w];
    if (!o.is_object() || !o.contains("routes")) throw InputError(p + ".routes: missing");
    OdPathFlows od;
    od.od = {index_of(o.value("origin", json()), p + ".origin"), index_of(o.value("destination", json()), p + ".destination")};
    od.demand = finite_of(o.value("demand", json()), p + ".demand");
    for (std::size_t r = 0; r < o["routes"].size(); ++r) {
      const std::string rp = p + ".routes[" + std::to_string(r) + "]";
      const json& route = o["routes"][r];
      Path edges;
      for (const auto& e : route.value("edges", json::array())) edges.push_back(index_of(e, rp + ".edges"));
      if (!is_simple_path(net, edges, od.od.origin, od.od.destination)) throw InputError(rp + ": not a simple path of the pair");
      od.paths.push_back(edges);
      od.flows.push_back(finite_of(route.value("flow", json()), rp + ".flow"));
    }
    x.push_back(od);
  }
  return x;
}

// Path decomposition of link flows for a single od pair.
PathFlows decompose(const Network& net, const DemandMatrix& dm, std::vector<double> f) {
  if (dm.size() != 1) throw InputError("solution.flow: link flows can only be decomposed for one od pair; give solution.paths");
  OdPathFlows od;
  od.od = dm.pairs[0];
  od.demand = dm.total(0);
  const double eps = 1e-12;
  while (true) {
    std::vector<EdgeId> pred(net.node_count(), kNoEdge);
    std::vector<bool> seen(net.node_count(), false);
    std::vector<NodeId> stack{od.od.origin};
    seen[od.od.origin] = true;
    while (!stack.empty() && !seen[od.od.destination]) {
      const NodeId v = stack.back();
      stack.pop_back();
      for (const EdgeId e : net.out_edges(v))
        if (f[e] > eps && !seen[net.edge(e).head]) {
          seen[net.edge(e).head] = true;
          pred[net.edge(e).head] = e;
          stack.push_back(net.edge(e).head);
        }
    }
    if (!seen[od.od.destination]) break;
    Path p;
    double bottleneck = kInfinity;
    for (NodeId v = od.od.destination; v != od.od.origin; v = net.edge(pred[v]).tail) {
      p.insert(p.begin(), pred[v]);
      bottleneck = std::min(bottleneck, f[pred[v]]);
    }
    for (const EdgeId e : p) f[e] -= bottleneck;
    od.paths.push_back(p);
    od.flows.push_back(bottleneck);
  }
  return {od};
}

double demand_residual(const DemandMatrix& dm, const PathFlows& x) {
  double worst = 0.0;
  for (std::size_t w = 0; w < dm.size(); ++w) {
    double routed = 0.0;
    for (const auto& od : x)
      if (od.od == dm.pairs[w])
        for (const double v : od.flows) routed += v;
    worst = std::max(worst, std::abs(routed - dm.total(w)));
  }
  for (const auto& od : x)
    for (const double v : od.flows) worst = std::max(worst, -v);
  return worst;
}

json assignment_residuals(const Network& net, const DemandMatrix& dm, const PathFlows& x) {
  const EdgeVector f = link_flows(net, x);
  const EdgeVector t = net.times(f);
  const double b = beckmann(net, f), dual = dual_value(net, dm, t);
  return {{"wardrop", wardrop_residual(net, x)}, {"beckmann", b}, {"dual_value", dual}, {"gap", b - dual},
          {"demand", demand_residual(dm, x)}};
}

json stochastic_residuals(const Network& net, const DemandMatrix& dm, const PathFlows& x, double gamma_tilde) {
  const EdgeVector t = net.times(link_flows(net, x));
  double fixed_point = 0.0;
  for (const auto& od : x) {
    std::vector<double> cost;
    double low = kInfinity;
    for (const Path& p : od.paths) {
      cost.push_back(path_cost(t, p));
      low = std::min(low, cost.back());
    }
    double total = 0.0;
    for (double& c : cost) total += (c = std::exp(-(c - low) / gamma_tilde));
    for (std::size_t p = 0; p < cost.size(); ++p)
      fixed_point = std::max(fixed_point, std::abs(od.flows[p] - od.demand * cost[p] / total));
  }
  return {{"fixed_point", fixed_point}, {"objective", stochastic_objective(net, x, gamma_tilde)},
          {"demand", demand_residual(dm, x)}};
}

json walras_json(const WalrasReport& w) {
  auto law = [](const LawResidual& r) { return json{{"violation", r.violation}, {"complementarity", r.complementarity}}; };
  return {{"source", law(w.source)}, {"producer_site", law(w.producer_site)}, {"pure_sink", law(w.pure_sink)},
          {"material", law(w.material)}, {"max", w.max()}};
}

json state_json(const MarketState& s, std::size_t rows, std::size_t cols, std::size_t goods) {
  json d = json::array();
  for (std::size_t i = 0; i < rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < cols; ++j)
      row.push_back(std::vector<double>(s.d.begin() + (i * cols + j) * goods, s.d.begin() + (i * cols + j + 1) * goods));
    d.push_back(row);
  }
  return {{"d", d}, {"L", s.L}, {"W", s.W}, {"y", s.y}, {"lambda_l", s.lambda_l}, {"lambda_w", s.lambda_w}};
}

MarketState state_from(const json& j, std::size_t rows, std::size_t cols, std::size_t goods) {
  try {
    MarketState s;
    const auto d = j.at("d").get<std::vector<std::vector<std::vector<double>>>>();
    if (d.size() != rows) throw InputError("solution.state.d: wrong number of rows");
    for (const auto& row : d) {
      if (row.size() != cols) throw InputError("solution.state.d: wrong number of columns");
      for (const auto& v : row) {
        if (v.size() != goods) throw InputError("solution.state.d: wrong number of goods");
        s.d.insert(s.d.end(), v.begin(), v.end());
      }
    }
    s.L = j.at("L").get<std::vector<std::vector<double>>>();
    s.W = j.at("W").get<std::vector<std::vector<double>>>();
    s.y = j.at("y").get<std::vector<double>>();
    s.lambda_l = j.at("lambda_l").get<std::vector<std::vector<double>>>();
    s.lambda_w = j.at("lambda_w").get<std::vector<std::vector<double>>>();
    auto shape = [&](const auto& v, std::size_t n, const char* name) {
      if (v.size() != n) throw InputError(std::string("solution.state.") + name + ": wrong size");
      for (const auto& e : v)
        if (e.size() != goods) throw InputError(std::string("solution.state.") + name + ": wrong number of goods");
    };
    shape(s.L, rows, "L");
    shape(s.W, cols, "W");
    shape(s.lambda_l, rows, "lambda_l");
    shape(s.lambda_w, cols, "lambda_w");
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("solution.state: ") + e.what());
  }
}

MarketInstance market_of(const InstanceFile& inst, const Settings& s) {
  if (!inst.market) throw InputError("market: section required by this command");
  MarketInstance mk = inst.market->data;
  SolveConfig inner;
  inner.tol = 1e-10;
  inner.max_iter = 100000;
  inner.path_budget = s.path_budget;
  mk.transport = transport_of(inst, s.mu, inner);
  if (s.gamma) mk.gamma = *s.gamma;
  mk.validate();
  return mk;
}

const DistributionSection& distribution_of(const InstanceFile& inst) {
  if (!inst.distribution) throw InputError("distribution: section required by this command");
  return *inst.distribution;
}

const DemandMatrix& demands_of(const InstanceFile& inst) {
  if (!inst.demands) throw InputError("demands: section required by this command");
  return *inst.demands;
}

SolveConfig assignment_config(const Settings& s) {
  SolveConfig sc;
  sc.tol = s.tol;
  sc.max_iter = s.max_iter;
  sc.gamma_tilde = s.gamma_tilde;
  sc.path_budget = s.path_budget;
  return sc;
}

DistributionConfig distribution_config(const Settings& s) {
  DistributionConfig dc;
  dc.tol = s.tol;
  dc.max_iter = s.max_iter;
  dc.step = s.step;
  return dc;
}

json matrix_json(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  json out = json::array();
  for (std::size_t i = 0; i < rows; ++i) out.push_back(std::vector<double>(v.begin() + i * cols, v.begin() + (i + 1) * cols));
  return out;
}

struct Outcome {
  json report;
  bool converged = false;
};

Outcome cmd_assign(const InstanceFile& inst, const Settings& s) {
  const Network net = smoothed_network(inst, s.mu);
  const DemandMatrix& dm = demands_of(inst);
  const AssignmentResult r = solve_wardrop(net, dm, assignment_config(s));
  json sol = {{"flow", r.flow}, {"time", r.time}, {"paths", paths_json(r.paths)}, {"od_cost", r.od_cost}};
  return {{{"solution", sol},
           {"residuals", assignment_residuals(net, dm, r.paths)},
           {"solver", {{"iterations", r.iterations}, {"gap", r.gap}, {"residual_bound", r.residual_bound}}}},
          r.converged};
}

Outcome cmd_assign_stochastic(const InstanceFile& inst, const Settings& s) {
  const Network net = smoothed_network(inst, s.mu);
  const DemandMatrix& dm = demands_of(inst);
  const StochasticResult r = solve_stochastic(net, dm, assignment_config(s));
  json sol = {{"flow", r.flow}, {"time", r.time}, {"paths", paths_json(r.paths)}};
  return {{{"solution", sol},
           {"residuals", stochastic_residuals(net, dm, r.paths, s.gamma_tilde)},
           {"solver", {{"iterations", r.iterations}}}},
          r.converged};
}

Outcome cmd_lp_limit(const InstanceFile& inst, const Settings&) {
  if (!inst.network) throw InputError("network: section required by this command");
  const LpLimitResult r = lp_limit(*inst.network, demands_of(inst));
  return {{{"solution", {{"flow", r.flow}, {"time", r.time}}},
           {"residuals",
            {{"objective", r.objective}, {"dual_objective", r.dual_objective}, {"gap", r.objective - r.dual_objective}}},
           {"solver", {{"augmentations", r.augmentations}}}},
          true};
}

Outcome cmd_distribute(const InstanceFile& inst, const Settings& s) {
  const DistributionSection& ds = distribution_of(inst);
  const double gamma = s.gamma.value_or(ds.gamma.value_or(0.0));
  SolveConfig inner;
  inner.tol = 1e-10;
  inner.max_iter = 100000;
  const PotentialModel model(transport_of(inst, s.mu, inner), ds.sources, ds.sinks, ds.total_cap, gamma);
  const DistributionResult r = solve_potential(model, distribution_config(s));
  json sol = {{"d", matrix_json(r.d, r.rows, r.cols)}, {"d0", r.d0}, {"total_cap", r.total_cap},
              {"pair_cost", matrix_json(r.pair_cost, r.rows, r.cols)}, {"objective", r.objective}};
  return {{{"solution", sol},
           {"residuals", {{"equilibrium", r.equilibrium_residual}, {"first_order", r.first_order_residual}, {"gap", r.gap}}},
           {"flags", {{"cap_binds", r.cap_binds}}},
           {"solver", {{"iterations", r.iterations}, {"gamma", gamma}}}},
          r.converged};
}

Outcome cmd_distribute_constrained(const InstanceFile& inst, const Settings& s) {
  const DistributionSection& ds = distribution_of(inst);
  const double gamma = s.gamma.value_or(ds.gamma.value_or(1.0));
  SolveConfig inner;
  inner.tol = 1e-10;
  inner.max_iter = 100000;
  const TransportModel tm = transport_of(inst, s.mu, inner);
  const DistributionResult r = solve_constrained(tm, ds.row_margins, ds.col_margins, gamma, distribution_config(s));
  json sol = {{"d", matrix_json(r.d, r.rows, r.cols)}, {"lambda_l", r.lambda_l}, {"lambda_w", r.lambda_w},
              {"pair_cost", matrix_json(r.pair_cost, r.rows, r.cols)}, {"objective", r.objective}};
  json res = {{"margin", margin_residual(r.rows, r.cols, r.d, ds.row_margins, ds.col_margins)}, {"gap", r.gap}};
  if (inst.costs) {
    const GravityResult g = gravity_sinkhorn(*inst.costs, ds.row_margins, ds.col_margins, gamma, distribution_config(s));
    double diff = 0.0;
    for (std::size_t k = 0; k < g.d.size(); ++k) diff = std::max(diff, std::abs(g.d[k] - r.d[k]));
    res["gravity_max_abs_diff"] = diff;
  }
  return {{{"solution", sol},
           {"residuals", res},
           {"flags", {{"price_bound_active", r.price_bound_active}}},
           {"solver", {{"iterations", r.iterations}, {"gamma", gamma}}}},
          r.converged};
}

json market_report(const MarketInstance& mk, const MarketEquilibrium& eq) {
  json sol = state_json(eq.state, mk.producers.size(), mk.consumers.size(), mk.goods);
  sol["alpha"] = eq.alpha;
  sol["beta"] = eq.beta;
  sol["profit"] = eq.profit;
  sol["surplus"] = eq.surplus;
  return {{"solution", {{"state", sol}}},
          {"residuals", {{"walras", walras_json(eq.walras)}, {"saddle_gap", eq.saddle_gap}}},
          {"flags",
           {{"price_cap", eq.price_cap},
            {"price_cap_active", eq.price_cap_active},
            {"productive", eq.productive},
            {"unrouted_inputs", eq.unrouted_inputs}}},
          {"solver", {{"iterations", eq.iterations}, {"gamma", mk.gamma}}}};
}

MarketConfig market_config(const Settings& s, const Flags& f) {
  MarketConfig cfg;
  cfg.tol = s.tol;
  cfg.max_iter = s.max_iter;
  cfg.step = s.step;
  cfg.price_cap = f.price_cap;
  cfg.allow_unproductive = f.allow_unproductive;
  return cfg;
}

Outcome cmd_market(const InstanceFile& inst, const Settings& s, const Flags& f) {
  const MarketInstance mk = market_of(inst, s);
  const MarketEquilibrium eq = solve_market(mk, market_config(s, f));
  return {market_report(mk, eq), eq.converged};
}

Outcome cmd_full(const InstanceFile& inst, const Settings& s, const Flags& f) {
  FullInstance fi{market_of(inst, s), s.path_budget};
  FullConfig cfg;
  cfg.market = market_config(s, f);
  const FullEquilibrium eq = solve_full(fi, cfg);
  json rep = market_report(fi.market, eq.market);
  const std::size_t cols = fi.market.consumers.size();
  rep["solution"]["t"] = eq.t;
  rep["solution"]["f"] = eq.f;
  rep["solution"]["x"] = paths_json(eq.x);
  rep["solution"]["t_cost"] = matrix_json(eq.t_cost, fi.market.producers.size(), cols);
  rep["solution"]["assignment_cost"] = matrix_json(eq.assignment_cost, fi.market.producers.size(), cols);
  rep["residuals"]["wardrop"] = eq.wardrop_residual;
  rep["residuals"]["cost_mismatch"] = eq.cost_mismatch;
  rep["flags"]["time_cap_active"] = eq.time_cap_active;
  return {rep, eq.market.converged};
}

Outcome cmd_simulate(const InstanceFile& inst, const Settings& s, const Flags& f) {
  DynamicsConfig cfg;
  cfg.kind = f.kind == "imitation_logit" ? DynamicsKind::ImitationLogit : DynamicsKind::Logit;
  cfg.temperature = s.gamma_tilde;
  cfg.step = s.step;
  cfg.horizon = f.horizon.value_or(1000);
  cfg.seed = f.seed;
  cfg.random_start = f.random_start;
  cfg.path_budget = s.path_budget;
  const std::string target = !f.target.empty() ? f.target : inst.demands ? "path" : "corr";
  Trajectory tr;
  if (target == "path") {
    tr = simulate_path_logit(smoothed_network(inst, s.mu), demands_of(inst), cfg);
  } else {
    const DistributionSection& ds = distribution_of(inst);
    SolveConfig inner;
    inner.tol = 1e-10;
    inner.max_iter = 100000;
    const PotentialModel model(transport_of(inst, s.mu, inner), ds.sources, ds.sinks, ds.total_cap,
                               s.gamma.value_or(ds.gamma.value_or(0.0)));
    tr = simulate_corr_logit(model, cfg);
  }
  if (!f.csv.empty()) {
    std::ofstream csv(f.csv, std::ios::binary);
    if (!csv) throw InputError(f.csv + ": cannot write the trajectory");
    csv << tr.csv();
  }
  bool descending = true;
  for (std::size_t k = 1; k < tr.lyapunov.size(); ++k) descending = descending && tr.lyapunov[k] <= tr.lyapunov[k - 1] + 1e-9;
  json final_state;
  for (std::size_t k = 0; k < tr.labels.size(); ++k) final_state[tr.labels[k]] = tr.states.back()[k];
  json sol = {{"target", target}, {"kind", f.kind}, {"steps", tr.states.size() - 1}, {"final_state", final_state},
              {"lyapunov_first", tr.lyapunov.front()}, {"lyapunov_last", tr.lyapunov.back()}};
  if (target == "path") sol["paths"] = paths_json(tr.paths);
  const bool rest = tr.residual.back() <= s.tol;
  return {{{"solution", sol},
           {"residuals", {{"fixed_point", tr.residual.back()}}},
           {"flags", {{"lyapunov_nonincreasing", descending}}}},
          rest};
}

Outcome cmd_swap_check(const InstanceFile& inst, const Settings& s) {
  const DistributionSection& ds = distribution_of(inst);
  const double gamma = s.gamma.value_or(ds.gamma.value_or(1.0));
  SolveConfig inner;
  inner.tol = 1e-10;
  inner.max_iter = 100000;
  const SaddleProblem prob = assemble_constrained(transport_of(inst, s.mu, inner), ds.row_margins, ds.col_margins, gamma);
  SwapCheckConfig cfg;
  cfg.tol = s.tol;
  cfg.max_outer = s.max_iter;
  const SwapCheckResult r = order_swap_check(prob, cfg);
  const double diff = std::abs(r.minmax - r.maxmin);
  return {{{"solution",
            {{"minmax", r.minmax}, {"maxmin", r.maxmin}, {"minmax_lower", r.minmax_lower}, {"maxmin_upper", r.maxmin_upper}}},
           {"residuals", {{"difference", diff}}},
           {"solver", {{"outer_iterations", r.outer_iterations}, {"gamma", gamma}}}},
          r.converged && diff <= 1e-3};
}

Outcome cmd_verify(const InstanceFile& inst, Settings s, const Flags& f) {
  if (f.solution.empty()) throw InputError("--solution: required by verify");
  const json sol = load_json(f.solution);
  if (!sol.is_object() || !sol.contains("command") || !sol["command"].is_string())
    throw InputError("solution.command: missing");
  if (!sol.contains("solution") || !sol["solution"].is_object()) throw InputError("solution.solution: missing");
  const std::string of = sol["command"].get<std::string>();
  const json& body = sol["solution"];
  // Settings the solution was produced with apply unless overridden.
  const json cfg = sol.value("config", json::object());
  if (!f.mu && cfg.contains("mu") && cfg["mu"].is_number()) s.mu = cfg["mu"].get<double>();
  if (!f.gamma_tilde && cfg.contains("gamma_tilde") && cfg["gamma_tilde"].is_number())
    s.gamma_tilde = cfg["gamma_tilde"].get<double>();
  if (!f.gamma && cfg.contains("gamma") && cfg["gamma"].is_number()) s.gamma = cfg["gamma"].get<double>();
  const double tol = s.tol;
  json res;
  bool ok = true;
  if (of == "assign" || of == "assign-stochastic") {
    const Network net = smoothed_network(inst, s.mu);
    const DemandMatrix& dm = demands_of(inst);
    PathFlows x;
    if (body.contains("paths")) {
      x = paths_from(body["paths"], net, "solution.paths");
    } else if (body.contains("flow")) {
      const auto flow = body["flow"].get<std::vector<double>>();
      if (flow.size() != net.edge_count()) throw InputError("solution.flow: one entry per edge required");
      x = decompose(net, dm, flow);
    } else {
      throw InputError("solution.paths: missing (or give solution.flow)");
    }
    if (of == "assign") {
      res = assignment_residuals(net, dm, x);
      ok = res["wardrop"].get<double>() <= tol && res["demand"].get<double>() <= tol;
    } else {
      res = stochastic_residuals(net, dm, x, s.gamma_tilde);
      ok = res["fixed_point"].get<double>() <= tol && res["demand"].get<double>() <= tol;
    }
  } else if (of == "distribute-constrained") {
    const DistributionSection& ds = distribution_of(inst);
    std::vector<double> d;
    try {
      for (const auto& row : body.at("d").get<std::vector<std::vector<double>>>()) d.insert(d.end(), row.begin(), row.end());
    } catch (const json::exception& e) {
      throw InputError(std::string("solution.d: ") + e.what());
    }
    const std::size_t rows = ds.row_margins.size(), cols = ds.col_margins.size();
    if (d.size() != rows * cols) throw InputError("solution.d: shape does not match the margins");
    res = {{"margin", margin_residual(rows, cols, d, ds.row_margins, ds.col_margins)}};
    ok = res["margin"].get<double>() <= tol;
  } else if (of == "market" || of == "full") {
    const MarketInstance mk = market_of(inst, s);
    if (!body.contains("state")) throw InputError("solution.state: missing");
    const MarketState state = state_from(body["state"], mk.producers.size(), mk.consumers.size(), mk.goods);
    const WalrasReport w = walras_residuals(mk, state);
    res["walras"] = walras_json(w);
    ok = w.max() <= tol;
    if (of == "full") {
      const Network& net = *mk.transport.network_ptr();
      if (!body.contains("x")) throw InputError("solution.x: missing");
      const PathFlows x = paths_from(body["x"], net, "solution.x");
      res["wardrop"] = wardrop_residual(net, x);
      ok = ok && res["wardrop"].get<double>() <= tol;
    }
  } else {
    throw InputError("solution.command: verify does not support '" + of + "'");
  }
  return {{{"solution", {{"of", of}, {"tolerance", tol}}}, {"residuals", res}}, ok};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const std::map<std::string, std::size_t> default_iters = {
      {"assign", 20000},  {"assign-stochastic", 20000},      {"lp-limit", 0},    {"distribute", 100000},
      {"distribute-constrained", 100000}, {"market", 200000}, {"full", 200000},  {"simulate", 0},
      {"verify", 0},      {"swap-check", 5000}};
  Flags f;
  CLI::App app{"Transport-economic equilibrium solvers", "transeq"};
  std::vector<std::string> names;
  for (const auto& [name, iters] : default_iters) names.push_back(name);
  app.add_option("command", f.command, "Command to run")->required()->check(CLI::IsMember(names));
  app.add_option("instance", f.instance, "Instance file (JSON)")->required();
  app.add_option("-o,--output", f.output, "Write the report here instead of stdout");
  app.add_option("--solution", f.solution, "Solution file to check (verify)");
  app.add_option("--csv", f.csv, "Write the trajectory CSV here (simulate)");
  app.add_option("--tol", f.tol, "Tolerance");
  app.add_option("--max-iter", f.max_iter, "Iteration cap");
  app.add_option("--gamma", f.gamma, "Entropy weight of the distribution, market and full models");
  app.add_option("--gamma-tilde", f.gamma_tilde, "Route-choice temperature");
  app.add_option("--mu", f.mu, "Smoothing scale for hard_cap edges");
  app.add_option("--step", f.step, "Initial step (saddle solvers) or Euler step (simulate)");
  app.add_option("--seed", f.seed, "Seed for randomised starts");
  app.add_option("--horizon", f.horizon, "Number of steps (simulate)");
  app.add_option("--kind", f.kind, "Dynamics (simulate)")->check(CLI::IsMember({"logit", "imitation_logit"}));
  app.add_option("--target", f.target, "Simulate path flows or correspondences")->check(CLI::IsMember({"path", "corr"}));
  app.add_option("--path-budget", f.path_budget, "Simple paths allowed per pair");
  app.add_option("--price-cap", f.price_cap, "Upper bound on prices (market, full)");
  app.add_flag("--allow-unproductive", f.allow_unproductive, "Solve markets failing the productivity check");
  app.add_flag("--random-start", f.random_start, "Draw the start of the dynamics from --seed");
  app.add_flag("--timing", f.timing, "Add wall time to the report (reports are then not reproducible)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "transeq: " << e.what() << "\n";
    return 1;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    const InstanceFile inst = load_instance(f.instance);
    Settings s;
    s.tol = f.tol.value_or(f.command == "verify" ? 1e-4 : 1e-6);
    s.max_iter = f.max_iter.value_or(default_iters.at(f.command));
    s.step = f.step.value_or(f.command == "simulate" ? 0.5 : 1.0);
    s.mu = f.mu ? f.mu : inst.options.mu;
    s.gamma = f.gamma;
    s.gamma_tilde = f.gamma_tilde.value_or(inst.options.gamma_tilde.value_or(1.0));
    s.path_budget = f.path_budget.value_or(inst.options.path_budget.value_or(64));
    if (!(s.tol > 0.0)) throw InputError("--tol: must be > 0");
    if (s.mu && !(*s.mu > 0.0)) throw InputError("--mu: must be > 0");
    if (!(s.gamma_tilde > 0.0)) throw InputError("--gamma-tilde: must be > 0");
    if (s.gamma && !(*s.gamma >= 0.0)) throw InputError("--gamma: must be >= 0");

    Outcome o;
    if (f.command == "assign") o = cmd_assign(inst, s);
    else if (f.command == "assign-stochastic") o = cmd_assign_stochastic(inst, s);
    else if (f.command == "lp-limit") o = cmd_lp_limit(inst, s);
    else if (f.command == "distribute") o = cmd_distribute(inst, s);
    else if (f.command == "distribute-constrained") o = cmd_distribute_constrained(inst, s);
    else if (f.command == "market") o = cmd_market(inst, s, f);
    else if (f.command == "full") o = cmd_full(inst, s, f);
    else if (f.command == "simulate") o = cmd_simulate(inst, s, f);
    else if (f.command == "swap-check") o = cmd_swap_check(inst, s);
    else o = cmd_verify(inst, s, f);

    json& rep = o.report;
    rep["command"] = f.command;
    rep["instance"] = f.instance;
    rep["format_version"] = kFormatVersion;
    rep["config"] = s.echo(f);
    rep["converged"] = o.converged;
    if (f.timing)
      rep["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string text = rep.dump(2) + "\n";
    if (f.output.empty()) {
      out << text;
    } else {
      std::ofstream file(f.output, std::ios::binary);
      if (!file) throw InputError(f.output + ": cannot write the report");
      file << text;
    }
    if (!o.converged) err << "transeq: " << f.command << " did not meet its tolerances\n";
    return o.converged ? 0 : 2;
  } catch (const InputError& e) {
    err << "transeq: " << e.what() << "\n";
    return 1;
  } catch (const SolverError& e) {
    err << "transeq: solver breakdown: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace transeq::cli
