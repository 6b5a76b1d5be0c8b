#include "transeq/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saddle_detail.hpp"
#include "transeq/errors.hpp"

namespace transeq {

TransportModel TransportModel::fixed(FixedCosts costs) {
  if (costs.cost.size() != costs.rows * costs.cols) throw InputError("fixed costs: size differs from rows x cols");
  for (const double c : costs.cost)
    if (!(c >= 0.0)) throw InputError("fixed costs must be >= 0 (use infinity for missing pairs)");
  TransportModel m;
  m.rows_ = costs.rows;
  m.cols_ = costs.cols;
  m.base_ = std::move(costs.cost);
  return m;
}

TransportModel TransportModel::network(Network net, std::vector<NodeId> origins,
                                       std::vector<NodeId> destinations, SolveConfig inner) {
  if (net.has_hard_caps()) throw InputError("transport network: hard-capacity edges need smoothing first");
  for (const NodeId v : origins)
    if (v >= net.node_count()) throw InputError("transport network: origin node out of range");
  for (const NodeId v : destinations)
    if (v >= net.node_count()) throw InputError("transport network: destination node out of range");
  TransportModel m;
  m.rows_ = origins.size();
  m.cols_ = destinations.size();
  const EdgeVector free_flow = net.free_flow_times();
  m.base_.assign(m.rows_ * m.cols_, kInfinity);
  for (std::size_t i = 0; i < m.rows_; ++i) {
    const ShortestPathTree tree = shortest_path(net, free_flow, origins[i]);
    for (std::size_t j = 0; j < m.cols_; ++j) m.base_[i * m.cols_ + j] = tree.distance[destinations[j]];
  }
  m.net_ = std::move(net);
  m.origins_ = std::move(origins);
  m.destinations_ = std::move(destinations);
  m.inner_ = inner;
  return m;
}

DemandMatrix TransportModel::demand(std::span<const double> mass) const {
  DemandMatrix dm;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) {
      if (origins_[i] == destinations_[j] || !admissible(i, j)) continue;
      dm.pairs.push_back({origins_[i], destinations_[j]});
      dm.amounts.push_back({mass[i * cols_ + j]});
    }
  return dm;
}

TransportModel::Evaluation TransportModel::evaluate(std::span<const double> mass) const {
  if (mass.size() != rows_ * cols_) throw InputError("transport: mass matrix has the wrong size");
  Evaluation out;
  out.cost = base_;
  if (!net_) {
    for (std::size_t k = 0; k < mass.size(); ++k) {
      if (mass[k] == 0.0) continue;
      if (!(base_[k] < kInfinity)) throw InputError("transport: positive mass on a pair without a route");
      out.potential += base_[k] * mass[k];
    }
    return out;
  }
  for (std::size_t k = 0; k < mass.size(); ++k)
    if (mass[k] > 0.0 && !(base_[k] < kInfinity))
      throw InputError("transport: positive mass on a pair without a route");
  const DemandMatrix dm = demand(mass);
  const CostMap cm = cost_map(*net_, dm, inner_);
  out.potential = cm.potential;
  out.inner_gap = cm.assignment.gap;
  std::size_t w = 0;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) {
      const std::size_t k = i * cols_ + j;
      if (origins_[i] == destinations_[j]) out.cost[k] = 0.0;
      else if (admissible(i, j)) out.cost[k] = cm.od_cost[w++];
    }
  return out;
}

double PotentialModel::trade_bound(const std::vector<QuadraticSite>& sources,
                                   const std::vector<QuadraticSite>& sinks, const std::vector<double>& base) {
  const std::size_t rows = sources.size(), cols = sinks.size();
  auto bound = [](double numerator, double beta) {
    if (numerator <= 0.0) return 0.0;
    return beta > 0.0 ? numerator / beta : kInfinity;
  };
  double by_rows = 0.0, by_cols = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double best = kInfinity;
    for (std::size_t j = 0; j < cols; ++j) best = std::min(best, base[i * cols + j] + sinks[j].alpha);
    if (best < kInfinity) by_rows += bound(-(sources[i].alpha + best), sources[i].beta);
  }
  for (std::size_t j = 0; j < cols; ++j) {
    double best = kInfinity;
    for (std::size_t i = 0; i < rows; ++i) best = std::min(best, base[i * cols + j] + sources[i].alpha);
    if (best < kInfinity) by_cols += bound(-(sinks[j].alpha + best), sinks[j].beta);
  }
  return std::min(by_rows, by_cols);
}

PotentialModel::PotentialModel(TransportModel transport, std::vector<QuadraticSite> sources,
                               std::vector<QuadraticSite> sinks, std::optional<double> total_cap, double gamma)
    : transport_(std::move(transport)), sources_(std::move(sources)), sinks_(std::move(sinks)), gamma_(gamma) {
  if (sources_.size() != transport_.rows() || sinks_.size() != transport_.cols())
    throw InputError("distribution: site counts differ from the transport matrix");
  for (const auto& s : sources_)
    if (!(s.beta >= 0.0) || !std::isfinite(s.alpha)) throw InputError("distribution: site beta must be >= 0");
  for (const auto& s : sinks_)
    if (!(s.beta >= 0.0) || !std::isfinite(s.alpha)) throw InputError("distribution: site beta must be >= 0");
  if (!(gamma_ >= 0.0)) throw InputError("distribution: gamma must be >= 0");
  if (total_cap) {
    if (!(*total_cap > 0.0) || !std::isfinite(*total_cap)) throw InputError("distribution: total_cap must be > 0");
    total_cap_ = *total_cap;
  } else {
    const double b = trade_bound(sources_, sinks_, transport_.base_cost());
    if (!(b < kInfinity))
      throw InputError("distribution: site slopes do not bound trade; set total_cap explicitly");
    total_cap_ = 10.0 * std::max(b, 1.0);
  }
}

PotentialModel::Evaluation PotentialModel::evaluate(std::span<const double> d, double d0) const {
  const std::size_t rows = this->rows(), cols = this->cols();
  std::vector<double> out_flow(rows, 0.0), in_flow(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      out_flow[i] += d[i * cols + j];
      in_flow[j] += d[i * cols + j];
    }
  const auto tr = transport_.evaluate(d);
  Evaluation ev;
  ev.smooth = tr.potential;
  for (std::size_t i = 0; i < rows; ++i) ev.smooth += sources_[i].value(out_flow[i]);
  for (std::size_t j = 0; j < cols; ++j) ev.smooth += sinks_[j].value(in_flow[j]);
  ev.pair_cost.resize(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      ev.pair_cost[i * cols + j] = sources_[i].slope(out_flow[i]) + tr.cost[i * cols + j] + sinks_[j].slope(in_flow[j]);
  double entropy = 0.0;
  for (const double x : d)
    if (x > 0.0) entropy += x * std::log(x / total_cap_);
  if (d0 > 0.0) entropy += d0 * std::log(d0 / total_cap_);
  ev.entropic = ev.smooth + gamma_ * entropy;
  return ev;
}

double margin_residual(std::size_t rows, std::size_t cols, std::span<const double> d,
                       const std::vector<double>& row_margin, const std::vector<double>& col_margin) {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += d[i * cols + j];
    worst = std::max(worst, std::abs(s - row_margin[i]));
  }
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += d[i * cols + j];
    worst = std::max(worst, std::abs(s - col_margin[j]));
  }
  return worst;
}

namespace {

// Variables of the potential model: admissible pairs, then d0 last.
struct PotentialState {
  std::vector<std::size_t> pairs;
  std::vector<double> x;

  std::vector<double> matrix(std::size_t size) const {
    std::vector<double> d(size, 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) d[pairs[p]] = x[p];
    return d;
  }
  double d0() const { return x.back(); }
};

std::vector<double> gradient_of(const PotentialState& s, const std::vector<double>& pair_cost) {
  std::vector<double> g(s.x.size(), 0.0);
  for (std::size_t p = 0; p < s.pairs.size(); ++p) g[p] = pair_cost[s.pairs[p]];
  return g;
}

void finish_potential(const PotentialModel& model, const PotentialState& s, const DistributionConfig& cfg,
                      DistributionResult& out) {
  const std::size_t size = model.rows() * model.cols();
  out.rows = model.rows();
  out.cols = model.cols();
  out.d = s.matrix(size);
  out.d0 = s.d0();
  out.total_cap = model.total_cap();
  const auto ev = model.evaluate(out.d, out.d0);
  out.pair_cost = ev.pair_cost;
  out.objective = model.gamma() > 0.0 ? ev.entropic : ev.smooth;
  double floor = 0.0;
  for (const std::size_t k : s.pairs) floor = std::min(floor, ev.pair_cost[k]);
  out.equilibrium_residual = 0.0;
  for (const std::size_t k : s.pairs)
    if (out.d[k] > cfg.flow_eps) out.equilibrium_residual = std::max(out.equilibrium_residual, std::abs(ev.pair_cost[k] - floor));
  out.cap_binds = out.d0 <= cfg.flow_eps;
}

}  // namespace

DistributionResult solve_potential(const PotentialModel& model, const DistributionConfig& cfg) {
  const std::size_t size = model.rows() * model.cols();
  const double cap = model.total_cap();
  PotentialState s;
  for (std::size_t i = 0; i < model.rows(); ++i)
    for (std::size_t j = 0; j < model.cols(); ++j)
      if (model.transport().admissible(i, j)) s.pairs.push_back(i * model.cols() + j);
  const std::size_t n = s.pairs.size() + 1;
  s.x.assign(n, cap / static_cast<double>(n));

  DistributionResult out;
  double step = cfg.step;
  auto ev = model.evaluate(s.matrix(size), s.d0());
  std::vector<double> g = gradient_of(s, ev.pair_cost);
  const double gamma = model.gamma();

  Block simplex;
  simplex.name = "d";
  simplex.set = SetKind::Simplex;
  simplex.geometry = Geometry::Entropy;
  simplex.dim = n;
  simplex.mass = cap;
  simplex.entropy_weight = gamma;
  simplex.entropy_scale = cap;

  for (std::size_t it = 0;; ++it) {
    out.iterations = it;
    if (gamma == 0.0) {
      std::vector<double> v(n);
      for (std::size_t k = 0; k < n; ++k) v[k] = s.x[k] - g[k];
      const auto p = detail::project_simplex(v, cap);
      out.first_order_residual = 0.0;
      for (std::size_t k = 0; k < n; ++k) out.first_order_residual = std::max(out.first_order_residual, std::abs(s.x[k] - p[k]));
    } else {
      std::vector<double> logits(n);
      for (std::size_t k = 0; k < n; ++k) logits[k] = -g[k] / gamma;
      const double top = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (const double l : logits) z += std::exp(l - top);
      out.first_order_residual = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        out.first_order_residual = std::max(out.first_order_residual, std::abs(s.x[k] - cap * std::exp(logits[k] - top) / z));
    }
    if (cfg.record_trace) out.trace.push_back({it, step, out.first_order_residual, out.first_order_residual});
    if (out.first_order_residual <= cfg.tol) {
      out.converged = true;
      break;
    }
    if (it == cfg.max_iter) break;

    for (;;) {
      std::vector<double> next;
      double distance = 0.0;
      if (gamma == 0.0) {
        std::vector<double> v(n);
        for (std::size_t k = 0; k < n; ++k) v[k] = s.x[k] - step * g[k];
        next = detail::project_simplex(v, cap);
        for (std::size_t k = 0; k < n; ++k) distance += 0.5 * (next[k] - s.x[k]) * (next[k] - s.x[k]);
      } else {
        next = detail::prox(simplex, s.x, step, g);
        distance = detail::bregman(simplex, s.x, next);
      }
      PotentialState trial{s.pairs, next};
      const auto ev_next = model.evaluate(trial.matrix(size), trial.d0());
      const std::vector<double> g_next = gradient_of(trial, ev_next.pair_cost);
      double curvature = 0.0;
      for (std::size_t k = 0; k < n; ++k) curvature += (g_next[k] - g[k]) * (next[k] - s.x[k]);
      if (curvature <= distance / step || step < 1e-14) {
        s.x = std::move(next);
        g = g_next;
        step = std::min(2.0 * step, 1e12);
        break;
      }
      step *= 0.5;
    }
  }
  finish_potential(model, s, cfg, out);
  return out;
}

namespace {

struct ConstrainedLayout {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> pairs;  // row-major indices of the d coordinates
  double mass = 0.0;
  double price_bound = 0.0;
};

ConstrainedLayout layout(const TransportModel& transport, const std::vector<double>& row_margin,
                         const std::vector<double>& col_margin, double gamma) {
  const std::size_t rows = transport.rows(), cols = transport.cols();
  if (row_margin.size() != rows || col_margin.size() != cols)
    throw InputError("constrained distribution: margin sizes differ from the transport matrix");
  if (!(gamma > 0.0)) throw InputError("constrained distribution: gamma must be > 0");
  for (const double v : row_margin)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("constrained distribution: margins must be >= 0");
  for (const double v : col_margin)
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("constrained distribution: margins must be >= 0");
  const double sl = std::accumulate(row_margin.begin(), row_margin.end(), 0.0);
  const double sw = std::accumulate(col_margin.begin(), col_margin.end(), 0.0);
  if (!(sl > 0.0) || std::abs(sl - sw) > 1e-9 * std::max(sl, sw))
    throw InputError("constrained distribution: unbalanced margins (sum L != sum W)");
  ConstrainedLayout lay;
  lay.rows = rows;
  lay.cols = cols;
  lay.mass = sl;
  double min_l = kInfinity, min_w = kInfinity;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (row_margin[i] > 0.0 && col_margin[j] > 0.0 && transport.admissible(i, j)) {
        lay.pairs.push_back(i * cols + j);
        min_l = std::min(min_l, row_margin[i]);
        min_w = std::min(min_w, col_margin[j]);
      }
  if (lay.pairs.empty()) throw InputError("constrained distribution: no admissible pair with positive margins");

  std::vector<double> uniform(rows * cols, 0.0);
  for (const std::size_t k : lay.pairs) uniform[k] = lay.mass / static_cast<double>(lay.pairs.size());
  const auto ev = transport.evaluate(uniform);
  double t_max = 0.0;
  for (const std::size_t k : lay.pairs) t_max = std::max(t_max, ev.cost[k]);
  const double spread = std::abs(std::log(lay.mass * lay.mass / (min_l * min_w)));
  lay.price_bound = 10.0 * (1.0 + 2.0 * t_max + gamma * (1.0 + spread));
  return lay;
}

}  // namespace

SaddleProblem assemble_constrained(const TransportModel& transport, const std::vector<double>& row_margin,
                                   const std::vector<double>& col_margin, double gamma) {
  const ConstrainedLayout lay = layout(transport, row_margin, col_margin, gamma);
  const std::size_t rows = lay.rows, cols = lay.cols, np = lay.pairs.size();

  Block d;
  d.name = "d";
  d.side = Side::Min;
  d.set = SetKind::Simplex;
  d.geometry = Geometry::Entropy;
  d.dim = np;
  d.mass = lay.mass;
  d.entropy_weight = gamma;
  d.entropy_scale = lay.mass;
  d.linear = transport.is_fixed();

  Block lambda;
  lambda.name = "lambda";
  lambda.side = Side::Max;
  lambda.set = SetKind::Box;
  lambda.dim = rows + cols;
  lambda.lower.assign(rows + cols, -lay.price_bound);
  lambda.upper.assign(rows + cols, lay.price_bound);

  SaddleProblem p;
  p.blocks = {d, lambda};
  auto matrix = [lay](const std::vector<double>& x) {
    std::vector<double> m(lay.rows * lay.cols, 0.0);
    for (std::size_t k = 0; k < lay.pairs.size(); ++k) m[lay.pairs[k]] = x[k];
    return m;
  };
  p.gradient = [transport, lay, matrix, row_margin, col_margin](const Point& z, Point& g) {
    const std::vector<double> m = matrix(z[0]);
    const auto ev = transport.evaluate(m);
    const std::size_t cols = lay.cols;
    for (std::size_t k = 0; k < lay.pairs.size(); ++k) {
      const std::size_t i = lay.pairs[k] / cols, j = lay.pairs[k] % cols;
      g[0][k] = ev.cost[lay.pairs[k]] - z[1][i] - z[1][lay.rows + j];
    }
    for (std::size_t i = 0; i < lay.rows; ++i) g[1][i] = row_margin[i];
    for (std::size_t j = 0; j < cols; ++j) g[1][lay.rows + j] = col_margin[j];
    for (std::size_t k = 0; k < lay.pairs.size(); ++k) {
      const std::size_t i = lay.pairs[k] / cols, j = lay.pairs[k] % cols;
      g[1][i] -= z[0][k];
      g[1][lay.rows + j] -= z[0][k];
    }
  };
  p.value = [transport, lay, matrix, row_margin, col_margin](const Point& z) {
    const std::vector<double> m = matrix(z[0]);
    double v = transport.evaluate(m).potential;
    std::vector<double> slack(lay.rows + lay.cols);
    for (std::size_t i = 0; i < lay.rows; ++i) slack[i] = row_margin[i];
    for (std::size_t j = 0; j < lay.cols; ++j) slack[lay.rows + j] = col_margin[j];
    for (std::size_t k = 0; k < lay.pairs.size(); ++k) {
      slack[lay.pairs[k] / lay.cols] -= z[0][k];
      slack[lay.rows + lay.pairs[k] % lay.cols] -= z[0][k];
    }
    for (std::size_t k = 0; k < slack.size(); ++k) v += z[1][k] * slack[k];
    return v;
  };
  p.initial = {std::vector<double>(np, lay.mass / static_cast<double>(np)), std::vector<double>(rows + cols, 0.0)};
  return p;
}

DistributionResult solve_constrained(const TransportModel& transport, const std::vector<double>& row_margin,
                                     const std::vector<double>& col_margin, double gamma,
                                     const DistributionConfig& cfg) {
  const ConstrainedLayout lay = layout(transport, row_margin, col_margin, gamma);
  const SaddleProblem problem = assemble_constrained(transport, row_margin, col_margin, gamma);
  SaddleConfig sc;
  sc.tol = cfg.tol;
  sc.max_iter = cfg.max_iter;
  sc.step = cfg.step;
  sc.record_trace = cfg.record_trace;
  const SaddleResult r = mirror_prox(problem, sc);

  DistributionResult out;
  out.rows = lay.rows;
  out.cols = lay.cols;
  out.d.assign(lay.rows * lay.cols, 0.0);
  for (std::size_t k = 0; k < lay.pairs.size(); ++k) out.d[lay.pairs[k]] = r.best[0][k];
  out.lambda_l.assign(r.best[1].begin(), r.best[1].begin() + static_cast<std::ptrdiff_t>(lay.rows));
  out.lambda_w.assign(r.best[1].begin() + static_cast<std::ptrdiff_t>(lay.rows), r.best[1].end());
  const auto ev = transport.evaluate(out.d);
  out.pair_cost = ev.cost;
  out.objective = ev.potential + composite_value(problem.blocks[0], r.best[0]);
  out.margin_residual = margin_residual(lay.rows, lay.cols, out.d, row_margin, col_margin);
  out.gap = r.gap;
  out.iterations = r.iterations;
  out.trace = r.trace;
  for (const double v : r.best[1])
    if (std::abs(v) >= 0.999 * lay.price_bound) out.price_bound_active = true;
  out.converged = r.converged && out.margin_residual <= cfg.tol;
  return out;
}

GravityResult gravity_sinkhorn(const FixedCosts& costs, const std::vector<double>& row_margin,
                               const std::vector<double>& col_margin, double gamma, const DistributionConfig& cfg) {
  const TransportModel transport = TransportModel::fixed(costs);
  const ConstrainedLayout lay = layout(transport, row_margin, col_margin, gamma);
  const kernels::SinkhornProblem problem{costs.cost, costs.rows, costs.cols, row_margin, col_margin, gamma};
  const auto sk = kernels::sinkhorn(problem, cfg.tol, cfg.max_iter);
  GravityResult out;
  out.rows = costs.rows;
  out.cols = costs.cols;
  out.d = sk.plan;
  out.iterations = sk.iterations;
  out.converged = sk.converged;
  out.margin_residual = margin_residual(costs.rows, costs.cols, out.d, row_margin, col_margin);
  for (std::size_t k = 0; k < out.d.size(); ++k) {
    if (out.d[k] <= 0.0) continue;
    out.objective += costs.cost[k] * out.d[k] + gamma * out.d[k] * std::log(out.d[k] / lay.mass);
  }
  return out;
}

}  // namespace transeq
