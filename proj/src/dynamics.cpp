#include "transeq/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "transeq/errors.hpp"

namespace transeq {

void DynamicsConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InputError("dynamics: temperature must be > 0");
  if (!(step > 0.0 && step <= 1.0)) throw InputError("dynamics: step must lie in (0, 1]");
  if (path_budget == 0) throw InputError("dynamics: path_budget must be > 0");
}

std::string Trajectory::csv() const {
  std::string out = "step";
  for (const auto& l : labels) out += "," + l;
  out += ",lyapunov,residual\n";
  char buf[32];
  for (std::size_t s = 0; s < states.size(); ++s) {
    out += std::to_string(s);
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    };
    for (const double v : states[s]) put(v);
    put(lyapunov[s]);
    put(residual[s]);
    out += "\n";
  }
  return out;
}

namespace {

// Logit response mass * softmax(-cost / T) over one block; infinite costs get
// zero weight.
std::vector<double> logit_response(std::span<const double> cost, double mass, double temperature) {
  double low = kInfinity;
  for (const double c : cost) low = std::min(low, c);
  std::vector<double> w(cost.size(), 0.0);
  if (!(low < kInfinity)) return w;
  double total = 0.0;
  for (std::size_t k = 0; k < cost.size(); ++k) {
    w[k] = cost[k] < kInfinity ? std::exp(-(cost[k] - low) / temperature) : 0.0;
    total += w[k];
  }
  for (double& v : w) v *= mass / total;
  return w;
}

// One step on a block of total mass `mass`; returns max |x - response|.
double advance(std::span<double> x, std::span<const double> cost, double mass, const DynamicsConfig& cfg) {
  const auto target = logit_response(cost, mass, cfg.temperature);
  double residual = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) residual = std::max(residual, std::abs(x[k] - target[k]));
  const double h = cfg.step;
  if (cfg.kind == DynamicsKind::Logit) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = (1.0 - h) * x[k] + h * target[k];
  } else {
    // Work in logs relative to the block maximum to avoid underflow.
    std::vector<double> lg(x.size(), -kInfinity);
    double top = -kInfinity;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (x[k] > 0.0 && target[k] > 0.0) lg[k] = (1.0 - h) * std::log(x[k]) + h * std::log(target[k]);
      top = std::max(top, lg[k]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = top > -kInfinity && lg[k] > -kInfinity ? std::exp(lg[k] - top) : 0.0;
      total += x[k];
    }
    for (double& v : x) v = total > 0.0 ? v * mass / total : 0.0;
  }
  return residual;
}

// Uniform split or a seeded random point of each block.
void initial_split(std::span<double> x, double mass, std::mt19937_64* rng) {
  double total = 0.0;
  std::exponential_distribution<double> expo(1.0);
  for (double& v : x) {
    v = rng ? expo(*rng) : 1.0;
    total += v;
  }
  for (double& v : x) v *= mass / total;
}

std::vector<double> flatten(const PathFlows& x) {
  std::vector<double> out;
  for (const auto& od : x) out.insert(out.end(), od.flows.begin(), od.flows.end());
  return out;
}

}  // namespace

Trajectory simulate_path_logit(const Network& network, const DemandMatrix& demands, const DynamicsConfig& cfg,
                               const std::optional<PathFlows>& start) {
  cfg.validate();
  demands.validate(network);
  if (demands.commodities() != 1) throw InputError("dynamics: single-commodity demand required");
  Trajectory tr;
  PathFlows x;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t w = 0; w < demands.size(); ++w) {
    OdPathFlows od;
    od.od = demands.pairs[w];
    od.demand = demands.amounts[w][0];
    od.paths = enumerate_simple_paths(network, od.od.origin, od.od.destination, cfg.path_budget);
    if (od.paths.empty() && od.demand > 0.0) throw InputError("dynamics: " + describe(network, od.od) + " has no path");
    od.flows.assign(od.paths.size(), 0.0);
    if (!od.paths.empty()) initial_split(od.flows, od.demand, cfg.random_start ? &rng : nullptr);
    for (std::size_t p = 0; p < od.paths.size(); ++p)
      tr.labels.push_back("x[" + std::to_string(w) + "][" + std::to_string(p) + "]");
    x.push_back(std::move(od));
  }
  if (start) {
    if (start->size() != x.size()) throw InputError("dynamics: start has the wrong number of pairs");
    for (std::size_t w = 0; w < x.size(); ++w) {
      const auto& s = (*start)[w];
      if (s.paths != x[w].paths) throw InputError("dynamics: start paths differ from the enumeration");
      double total = 0.0;
      for (const double v : s.flows) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("dynamics: start flows must be finite and >= 0");
        total += v;
      }
      if (std::abs(total - x[w].demand) > 1e-9 * (1.0 + x[w].demand))
        throw InputError("dynamics: start flows must sum to the demand");
      x[w].flows = s.flows;
    }
  }
  for (std::size_t k = 0; k <= cfg.horizon; ++k) {
    const EdgeVector times = network.times(link_flows(network, x));
    tr.states.push_back(flatten(x));
    tr.lyapunov.push_back(stochastic_objective(network, x, cfg.temperature));
    double residual = 0.0;
    for (auto& od : x) {
      if (od.paths.empty()) continue;
      std::vector<double> cost;
      for (const Path& p : od.paths) cost.push_back(path_cost(times, p));
      if (k == cfg.horizon) {
        const auto target = logit_response(cost, od.demand, cfg.temperature);
        for (std::size_t p = 0; p < cost.size(); ++p) residual = std::max(residual, std::abs(od.flows[p] - target[p]));
      } else {
        residual = std::max(residual, advance(od.flows, cost, od.demand, cfg));
      }
    }
    tr.residual.push_back(residual);
  }
  tr.paths = std::move(x);
  return tr;
}

Trajectory simulate_corr_logit(const PotentialModel& model, const DynamicsConfig& cfg,
                               const std::optional<std::vector<double>>& start) {
  cfg.validate();
  if (!(model.gamma() > 0.0)) throw InputError("dynamics: correspondence dynamics need gamma > 0");
  DynamicsConfig step_cfg = cfg;
  step_cfg.temperature = model.gamma();
  const std::size_t rows = model.rows(), cols = model.cols();
  const double cap = model.total_cap();
  std::vector<std::size_t> pairs;
  Trajectory tr;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (model.transport().admissible(i, j)) {
        pairs.push_back(i * cols + j);
        tr.labels.push_back("d[" + std::to_string(i) + "][" + std::to_string(j) + "]");
      }
  tr.labels.push_back("d0");
  std::vector<double> x(pairs.size() + 1);
  std::mt19937_64 rng(cfg.seed);
  initial_split(x, cap, cfg.random_start ? &rng : nullptr);
  if (start) {
    if (start->size() != x.size()) throw InputError("dynamics: start must list the admissible pairs and d0");
    double total = 0.0;
    for (const double v : *start) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("dynamics: start entries must be finite and >= 0");
      total += v;
    }
    if (std::abs(total - cap) > 1e-9 * (1.0 + cap)) throw InputError("dynamics: start must sum to the total cap");
    x = *start;
  }
  for (std::size_t k = 0; k <= cfg.horizon; ++k) {
    std::vector<double> d(rows * cols, 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) d[pairs[p]] = x[p];
    const auto ev = model.evaluate(d, x.back());
    tr.states.push_back(x);
    tr.lyapunov.push_back(ev.entropic);
    std::vector<double> cost;
    for (const std::size_t q : pairs) cost.push_back(ev.pair_cost[q]);
    cost.push_back(0.0);
    if (k == cfg.horizon) {
      const auto target = logit_response(cost, cap, step_cfg.temperature);
      double residual = 0.0;
      for (std::size_t p = 0; p < x.size(); ++p) residual = std::max(residual, std::abs(x[p] - target[p]));
      tr.residual.push_back(residual);
    } else {
      tr.residual.push_back(advance(x, cost, cap, step_cfg));
    }
  }
  return tr;
}

}  // namespace transeq
