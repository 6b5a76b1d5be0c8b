#include "transeq/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "saddle_detail.hpp"
#include "transeq/errors.hpp"

namespace transeq {

std::size_t Block::group_count() const {
  if (group_of.empty()) return dim;
  return *std::max_element(group_of.begin(), group_of.end()) + 1;
}

namespace detail {

namespace {

std::vector<double> group_sums(const Block& block, const std::vector<double>& x) {
  std::vector<double> s(block.group_count(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) s[block.group(k)] += x[k];
  return s;
}

double xlogx_scaled(double s, double scale) { return s > 0.0 ? s * std::log(s / scale) : 0.0; }

// Per group: the minimal coordinate of g and its first index.
void group_minima(const Block& block, const std::vector<double>& g, std::vector<double>& m,
                  std::vector<std::size_t>& arg) {
  const std::size_t groups = block.group_count();
  m.assign(groups, std::numeric_limits<double>::infinity());
  arg.assign(groups, 0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const std::size_t grp = block.group(k);
    if (g[k] < m[grp]) {
      m[grp] = g[k];
      arg[grp] = k;
    }
  }
}

double log_sum_exp(const std::vector<double>& v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (top == -std::numeric_limits<double>::infinity()) return top;
  double sum = 0.0;
  for (const double x : v) sum += std::exp(x - top);
  return top + std::log(sum);
}

BlockBest min_best(const Block& block, const std::vector<double>& g) {
  BlockBest out;
  out.point.assign(block.dim, 0.0);
  const double gamma = block.entropy_weight;
  switch (block.set) {
    case SetKind::Box:
      for (std::size_t k = 0; k < block.dim; ++k) {
        out.point[k] = g[k] >= 0.0 ? block.lower[k] : block.upper[k];
        out.value += g[k] * out.point[k];
      }
      return out;
    case SetKind::Simplex: {
      std::vector<double> m;
      std::vector<std::size_t> arg;
      group_minima(block, g, m, arg);
      if (gamma == 0.0) {
        const auto best = std::min_element(m.begin(), m.end()) - m.begin();
        out.point[arg[best]] = block.mass;
        out.value = block.mass * m[best];
        return out;
      }
      std::vector<double> logits(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) logits[i] = -m[i] / gamma;
      const double lz = log_sum_exp(logits);
      for (std::size_t i = 0; i < m.size(); ++i) out.point[arg[i]] = block.mass * std::exp(logits[i] - lz);
      out.value = gamma * block.mass * (std::log(block.mass / block.entropy_scale) - lz);
      return out;
    }
    case SetKind::CappedOrthant: {
      std::vector<double> m;
      std::vector<std::size_t> arg;
      group_minima(block, g, m, arg);
      for (std::size_t i = 0; i < m.size(); ++i) {
        double s = 0.0;
        if (gamma == 0.0) {
          s = m[i] < 0.0 ? block.group_cap[i] : 0.0;
        } else {
          s = std::min(block.group_cap[i], block.entropy_scale * std::exp(-m[i] / gamma - 1.0));
        }
        out.point[arg[i]] = s;
        out.value += m[i] * s + gamma * xlogx_scaled(s, block.entropy_scale);
      }
      return out;
    }
  }
  return out;
}

}  // namespace

BlockBest block_best(const Block& block, const std::vector<double>& g) {
  if (block.side == Side::Min) return min_best(block, g);
  std::vector<double> neg(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) neg[k] = -g[k];
  BlockBest out = min_best(block, neg);
  out.value = -out.value;
  return out;
}

std::vector<double> project_simplex(const std::vector<double>& v, double mass) {
  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - mass) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(0.0, v[k] - theta);
  return out;
}

std::vector<double> prox(const Block& block, const std::vector<double>& z, double step,
                         const std::vector<double>& f) {
  const std::size_t n = block.dim;
  std::vector<double> out(n);
  if (block.geometry == Geometry::Euclidean) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = z[k] - step * f[k];
    switch (block.set) {
      case SetKind::Box:
        for (std::size_t k = 0; k < n; ++k) out[k] = std::clamp(v[k], block.lower[k], block.upper[k]);
        return out;
      case SetKind::Simplex:
        return project_simplex(v, block.mass);
      case SetKind::CappedOrthant: {
        const std::size_t groups = block.group_count();
        std::vector<std::vector<std::size_t>> members(groups);
        for (std::size_t k = 0; k < n; ++k) members[block.group(k)].push_back(k);
        for (std::size_t g = 0; g < groups; ++g) {
          double sum = 0.0;
          for (const std::size_t k : members[g]) sum += std::max(0.0, v[k]);
          if (sum <= block.group_cap[g]) {
            for (const std::size_t k : members[g]) out[k] = std::max(0.0, v[k]);
          } else {
            std::vector<double> sub;
            for (const std::size_t k : members[g]) sub.push_back(v[k]);
            const std::vector<double> p = project_simplex(sub, block.group_cap[g]);
            for (std::size_t i = 0; i < members[g].size(); ++i) out[members[g][i]] = p[i];
          }
        }
        return out;
      }
    }
  }

  // Entropy geometry: multiplicative update inside each group, then an exact
  // one-dimensional solve for the group masses with the composite term.
  const std::size_t groups = block.group_count();
  std::vector<double> logw(n);
  for (std::size_t k = 0; k < n; ++k) logw[k] = std::log(std::max(z[k], kProbFloor)) - step * f[k];
  std::vector<std::vector<double>> parts(groups);
  for (std::size_t k = 0; k < n; ++k) parts[block.group(k)].push_back(logw[k]);
  std::vector<double> log_a(groups);
  for (std::size_t g = 0; g < groups; ++g) log_a[g] = log_sum_exp(parts[g]);

  const double c = step * block.entropy_weight;
  const double log_scale = std::log(block.entropy_scale);
  std::vector<double> log_s(groups);
  if (block.set == SetKind::Simplex) {
    for (std::size_t g = 0; g < groups; ++g) log_s[g] = (log_a[g] + c * log_scale) / (1.0 + c);
    const double lz = log_sum_exp(log_s);
    for (double& ls : log_s) ls += std::log(block.mass) - lz;
  } else {
    for (std::size_t g = 0; g < groups; ++g)
      log_s[g] = std::min((log_a[g] + c * log_scale - c) / (1.0 + c), std::log(block.group_cap[g]));
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t g = block.group(k);
    out[k] = std::exp(logw[k] - log_a[g] + log_s[g]);
  }
  if (block.set == SetKind::CappedOrthant) {
    // Rounding can push a capped group sum a few ulps above its cap.
    std::vector<double> sums = group_sums(block, out);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t g = block.group(k);
      if (sums[g] > block.group_cap[g]) out[k] *= block.group_cap[g] / sums[g];
    }
  }
  return out;
}

double bregman(const Block& block, const std::vector<double>& from, const std::vector<double>& to) {
  double total = 0.0;
  if (block.geometry == Geometry::Euclidean) {
    for (std::size_t k = 0; k < from.size(); ++k) total += 0.5 * (to[k] - from[k]) * (to[k] - from[k]);
    return total;
  }
  for (std::size_t k = 0; k < from.size(); ++k) {
    const double b = std::max(from[k], kProbFloor);
    const double r = (to[k] - b) / b;
    total += b * ((1.0 + r) * std::log1p(r) - r);
  }
  return total;
}

std::vector<double> composite_gradient(const Block& block, const std::vector<double>& x) {
  std::vector<double> out(x.size(), 0.0);
  if (block.entropy_weight == 0.0) return out;
  const std::vector<double> s = group_sums(block, x);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double sg = std::max(s[block.group(k)], kProbFloor);
    out[k] = block.entropy_weight * (std::log(sg / block.entropy_scale) + 1.0);
  }
  return out;
}

double linear_block_gap(const Block& block, const std::vector<double>& x, const std::vector<double>& g) {
  double at = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) at += g[k] * x[k];
  const BlockBest best = block_best(block, g);
  if (block.side == Side::Min) return at + composite_value(block, x) - best.value;
  return best.value - at;
}

}  // namespace detail

double composite_value(const Block& block, const std::vector<double>& x) {
  if (block.entropy_weight == 0.0) return 0.0;
  std::vector<double> s(block.group_count(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k) s[block.group(k)] += x[k];
  double total = 0.0;
  for (const double sg : s)
    if (sg > 0.0) total += sg * std::log(sg / block.entropy_scale);
  return block.entropy_weight * total;
}

bool feasible(const Block& block, const std::vector<double>& x, double slack) {
  if (x.size() != block.dim) return false;
  switch (block.set) {
    case SetKind::Box:
      for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k] < block.lower[k] - slack || x[k] > block.upper[k] + slack) return false;
      return true;
    case SetKind::Simplex: {
      double sum = 0.0;
      for (const double v : x) {
        if (v < -slack) return false;
        sum += v;
      }
      return std::abs(sum - block.mass) <= slack * (1.0 + block.mass);
    }
    case SetKind::CappedOrthant: {
      std::vector<double> s(block.group_count(), 0.0);
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k] < -slack) return false;
        s[block.group(k)] += x[k];
      }
      for (std::size_t g = 0; g < s.size(); ++g)
        if (s[g] > block.group_cap[g] * (1.0 + slack) + slack) return false;
      return true;
    }
  }
  return false;
}

void SaddleProblem::validate() const {
  if (!gradient) throw InputError("saddle problem: missing gradient oracle");
  if (initial.size() != blocks.size()) throw InputError("saddle problem: initial point has wrong block count");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& bl = blocks[b];
    const std::string where = "saddle block '" + bl.name + "': ";
    if (initial[b].size() != bl.dim) throw InputError(where + "initial point has wrong dimension");
    if (!bl.group_of.empty()) {
      if (bl.group_of.size() != bl.dim) throw InputError(where + "group_of has wrong length");
    }
    if (bl.set == SetKind::Box) {
      if (bl.lower.size() != bl.dim || bl.upper.size() != bl.dim) throw InputError(where + "box bounds missing");
      for (std::size_t k = 0; k < bl.dim; ++k)
        if (!(bl.lower[k] <= bl.upper[k]) || !std::isfinite(bl.lower[k]) || !std::isfinite(bl.upper[k]))
          throw InputError(where + "box bounds must be finite with lower <= upper");
      if (bl.geometry == Geometry::Entropy) throw InputError(where + "entropy geometry needs a simplex or capped orthant");
    }
    if (bl.set == SetKind::Simplex && !(bl.mass > 0.0)) throw InputError(where + "simplex mass must be > 0");
    if (bl.set == SetKind::CappedOrthant) {
      if (bl.group_cap.size() != bl.group_count()) throw InputError(where + "one cap per group required");
      for (const double c : bl.group_cap)
        if (!(c > 0.0) || !std::isfinite(c)) throw InputError(where + "group caps must be finite and > 0");
    }
    if (bl.entropy_weight != 0.0) {
      if (bl.side != Side::Min || bl.geometry != Geometry::Entropy || bl.set == SetKind::Box)
        throw InputError(where + "the composite entropy term needs an entropy min block");
      if (!(bl.entropy_weight > 0.0) || !(bl.entropy_scale > 0.0))
        throw InputError(where + "entropy weight and scale must be > 0");
    }
    if (!feasible(bl, initial[b], 1e-9)) throw InputError(where + "initial point is infeasible");
  }
}

namespace {

void evaluate(const SaddleProblem& problem, const Point& z, Point& grad, std::size_t& calls) {
  grad.resize(problem.blocks.size());
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) grad[b].assign(problem.blocks[b].dim, 0.0);
  problem.gradient(z, grad);
  ++calls;
  for (std::size_t b = 0; b < grad.size(); ++b)
    for (std::size_t k = 0; k < grad[b].size(); ++k)
      if (!std::isfinite(grad[b][k])) {
        std::ostringstream msg;
        msg << "saddle oracle returned " << grad[b][k] << " for block '" << problem.blocks[b].name
            << "' coordinate " << k << " at point [";
        for (std::size_t j = 0; j < z[b].size() && j < 8; ++j) msg << (j ? ", " : "") << z[b][j];
        msg << (z[b].size() > 8 ? ", ...]" : "]");
        throw SolverError(msg.str());
      }
}

void signed_operator(const SaddleProblem& problem, Point& grad) {
  for (std::size_t b = 0; b < grad.size(); ++b)
    if (problem.blocks[b].side == Side::Max)
      for (double& v : grad[b]) v = -v;
}

double gap_with(const SaddleProblem& problem, const Point& z, const Point& grad) {
  double total = 0.0;
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    std::optional<double> custom;
    if (problem.block_gap) custom = problem.block_gap(b, z, grad);
    total += custom ? *custom : detail::linear_block_gap(problem.blocks[b], z[b], grad[b]);
  }
  return total;
}

}  // namespace

GapReport best_response_gap(const SaddleProblem& problem, const Point& z) {
  Point grad;
  std::size_t calls = 0;
  evaluate(problem, z, grad, calls);
  GapReport out;
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    std::optional<double> custom;
    if (problem.block_gap) custom = problem.block_gap(b, z, grad);
    out.per_block.push_back(custom ? *custom : detail::linear_block_gap(problem.blocks[b], z[b], grad[b]));
    out.total += out.per_block.back();
  }
  return out;
}

double saddle_value(const SaddleProblem& problem, const Point& z) {
  if (!problem.value) throw InputError("saddle problem: missing value oracle");
  double total = problem.value(z);
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) total += composite_value(problem.blocks[b], z[b]);
  return total;
}

SaddleResult mirror_prox(const SaddleProblem& problem, const SaddleConfig& cfg) {
  problem.validate();
  if (!(cfg.step > 0.0)) throw InputError("saddle step must be > 0");
  const std::size_t nb = problem.blocks.size();

  SaddleResult out;
  Point z = problem.initial;
  Point average = z;
  for (auto& v : average) std::fill(v.begin(), v.end(), 0.0);
  double weight = 0.0;
  double step = cfg.step;

  Point gz, gw, gavg;
  evaluate(problem, z, gz, out.oracle_calls);
  out.gap_last = gap_with(problem, z, gz);
  out.gap_average = out.gap_last;
  out.average = z;
  if (out.gap_last <= cfg.tol) {
    out.converged = true;
    out.last = z;
    out.best = z;
    out.gap = out.gap_last;
    out.best_is_average = false;
    return out;
  }

  Point w(nb), zp(nb), fz(nb), fw(nb);
  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    fz = gz;
    signed_operator(problem, fz);
    for (;;) {
      for (std::size_t b = 0; b < nb; ++b) w[b] = detail::prox(problem.blocks[b], z[b], step, fz[b]);
      evaluate(problem, w, gw, out.oracle_calls);
      fw = gw;
      signed_operator(problem, fw);
      for (std::size_t b = 0; b < nb; ++b) zp[b] = detail::prox(problem.blocks[b], z[b], step, fw[b]);
      if (!cfg.adaptive) break;
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t k = 0; k < z[b].size(); ++k) lhs += (fw[b][k] - fz[b][k]) * (w[b][k] - zp[b][k]);
        rhs += detail::bregman(problem.blocks[b], z[b], w[b]) + detail::bregman(problem.blocks[b], w[b], zp[b]);
      }
      if (step * lhs <= rhs * (1.0 + 1e-12) || step < 1e-14) break;
      step *= 0.5;
    }

    weight += step;
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t k = 0; k < w[b].size(); ++k) average[b][k] += step * w[b][k];
    z = zp;
    out.iterations = it;
    evaluate(problem, z, gz, out.oracle_calls);

    const double used_step = step;
    if (cfg.adaptive) step *= 1.25;

    if (it % cfg.gap_every == 0 || it == cfg.max_iter) {
      Point avg = average;
      for (auto& v : avg)
        for (double& x : v) x /= weight;
      // Keep the averaged simplex blocks on their mass exactly.
      for (std::size_t b = 0; b < nb; ++b) {
        if (problem.blocks[b].set != SetKind::Simplex) continue;
        const double sum = std::accumulate(avg[b].begin(), avg[b].end(), 0.0);
        for (double& x : avg[b]) x *= problem.blocks[b].mass / sum;
      }
      evaluate(problem, avg, gavg, out.oracle_calls);
      out.gap_average = gap_with(problem, avg, gavg);
      out.gap_last = gap_with(problem, z, gz);
      out.average = std::move(avg);
      if (cfg.record_trace) out.trace.push_back({it, used_step, out.gap_average, out.gap_last});
      if (std::min(out.gap_average, out.gap_last) <= cfg.tol) {
        out.converged = true;
        break;
      }
    }
  }
  out.last = z;
  out.best_is_average = out.gap_average <= out.gap_last;
  out.best = out.best_is_average ? out.average : out.last;
  out.gap = std::min(out.gap_average, out.gap_last);
  return out;
}

double monotonicity_violation(const SaddleProblem& problem, std::size_t samples, std::uint64_t seed) {
  problem.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sample = [&]() {
    Point z(problem.blocks.size());
    for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
      const Block& bl = problem.blocks[b];
      z[b].resize(bl.dim);
      switch (bl.set) {
        case SetKind::Box:
          for (std::size_t k = 0; k < bl.dim; ++k) z[b][k] = bl.lower[k] + unit(rng) * (bl.upper[k] - bl.lower[k]);
          break;
        case SetKind::Simplex: {
          double sum = 0.0;
          for (double& x : z[b]) sum += (x = -std::log(1.0 - unit(rng)));
          for (double& x : z[b]) x *= bl.mass / sum;
          break;
        }
        case SetKind::CappedOrthant: {
          std::vector<double> count(bl.group_count(), 0.0);
          for (std::size_t k = 0; k < bl.dim; ++k) count[bl.group(k)] += 1.0;
          for (std::size_t k = 0; k < bl.dim; ++k) z[b][k] = unit(rng) * bl.group_cap[bl.group(k)] / count[bl.group(k)];
          break;
        }
      }
    }
    return z;
  };
  std::size_t calls = 0;
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Point a = sample(), b = sample();
    Point ga, gb;
    evaluate(problem, a, ga, calls);
    evaluate(problem, b, gb, calls);
    signed_operator(problem, ga);
    signed_operator(problem, gb);
    double inner = 0.0;
    for (std::size_t blk = 0; blk < a.size(); ++blk) {
      const auto ca = detail::composite_gradient(problem.blocks[blk], a[blk]);
      const auto cb = detail::composite_gradient(problem.blocks[blk], b[blk]);
      for (std::size_t k = 0; k < a[blk].size(); ++k)
        inner += (ga[blk][k] + ca[k] - gb[blk][k] - cb[k]) * (a[blk][k] - b[blk][k]);
    }
    worst = std::max(worst, -inner);
  }
  return worst;
}

}  // namespace transeq
