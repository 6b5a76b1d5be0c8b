#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "saddle_detail.hpp"
#include "transeq/errors.hpp"
#include "transeq/saddle.hpp"

namespace transeq {

namespace {

// Free coordinates of the outer blocks. Simplex blocks drop their last
// coordinate; fixed box coordinates are dropped.
struct Coordinates {
  struct Slot {
    std::size_t block;
    std::size_t index;
  };
  std::vector<Slot> slots;
  Eigen::VectorXd centre;
  Eigen::VectorXd half_width;
};

Coordinates coordinates(const SaddleProblem& problem, Side outer) {
  Coordinates c;
  std::vector<double> centre, width;
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const Block& bl = problem.blocks[b];
    if (bl.side != outer) continue;
    std::vector<double> count(bl.group_count(), 0.0);
    for (std::size_t k = 0; k < bl.dim; ++k) count[bl.group(k)] += 1.0;
    const std::size_t free = bl.set == SetKind::Simplex ? bl.dim - 1 : bl.dim;
    for (std::size_t k = 0; k < free; ++k) {
      double lo = 0.0, hi = 0.0;
      switch (bl.set) {
        case SetKind::Box:
          lo = bl.lower[k];
          hi = bl.upper[k];
          break;
        case SetKind::Simplex:
          hi = bl.mass;
          break;
        case SetKind::CappedOrthant:
          hi = bl.group_cap[bl.group(k)];
          break;
      }
      if (hi == lo) continue;
      c.slots.push_back({b, k});
      centre.push_back(bl.set == SetKind::Simplex ? bl.mass / static_cast<double>(bl.dim)
                       : bl.set == SetKind::CappedOrthant ? hi / (2.0 * count[bl.group(k)])
                                                          : 0.5 * (lo + hi));
      width.push_back(0.5 * (hi - lo));
    }
  }
  c.centre = Eigen::Map<Eigen::VectorXd>(centre.data(), static_cast<Eigen::Index>(centre.size()));
  c.half_width = Eigen::Map<Eigen::VectorXd>(width.data(), static_cast<Eigen::Index>(width.size()));
  return c;
}

void unpack(const SaddleProblem& problem, const Coordinates& c, const Eigen::VectorXd& xi, Side outer, Point& z) {
  for (std::size_t s = 0; s < c.slots.size(); ++s) z[c.slots[s].block][c.slots[s].index] = xi[static_cast<Eigen::Index>(s)];
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const Block& bl = problem.blocks[b];
    if (bl.side != outer || bl.set != SetKind::Simplex) continue;
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < bl.dim; ++k) sum += z[b][k];
    z[b][bl.dim - 1] = bl.mass - sum;
  }
}

// A violated constraint at xi as a cut normal in reduced coordinates, or an
// empty vector when xi is feasible.
Eigen::VectorXd violated(const SaddleProblem& problem, const Coordinates& c, const Point& z, Side outer) {
  const auto n = static_cast<Eigen::Index>(c.slots.size());
  Eigen::VectorXd cut = Eigen::VectorXd::Zero(n);
  auto slot_of = [&](std::size_t b, std::size_t k) -> Eigen::Index {
    for (std::size_t s = 0; s < c.slots.size(); ++s)
      if (c.slots[s].block == b && c.slots[s].index == k) return static_cast<Eigen::Index>(s);
    return -1;
  };
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const Block& bl = problem.blocks[b];
    if (bl.side != outer) continue;
    for (std::size_t k = 0; k < bl.dim; ++k) {
      const Eigen::Index s = slot_of(b, k);
      const double lo = bl.set == SetKind::Box ? bl.lower[k] : 0.0;
      if (z[b][k] < lo) {
        if (s >= 0) {
          cut[s] = -1.0;
        } else if (bl.set == SetKind::Simplex && k + 1 == bl.dim) {
          // Last simplex coordinate is mass minus the others.
          for (std::size_t j = 0; j + 1 < bl.dim; ++j)
            if (const Eigen::Index sj = slot_of(b, j); sj >= 0) cut[sj] = 1.0;
        } else {
          continue;
        }
        return cut;
      }
      if (bl.set == SetKind::Box && z[b][k] > bl.upper[k] && s >= 0) {
        cut[s] = 1.0;
        return cut;
      }
    }
    if (bl.set == SetKind::CappedOrthant) {
      std::vector<double> sums(bl.group_count(), 0.0);
      for (std::size_t k = 0; k < bl.dim; ++k) sums[bl.group(k)] += z[b][k];
      for (std::size_t g = 0; g < sums.size(); ++g) {
        if (sums[g] <= bl.group_cap[g]) continue;
        for (std::size_t k = 0; k < bl.dim; ++k)
          if (bl.group(k) == g)
            if (const Eigen::Index s = slot_of(b, k); s >= 0) cut[s] = 1.0;
        return cut;
      }
    }
  }
  return Eigen::VectorXd();
}

struct Inner {
  Point z;        // full point with the inner blocks at their best response
  Point grad;     // gradient of K at z
  double value;   // K(z) plus composite terms
  bool converged = true;
};

// Solves the inner problem with the outer blocks of z fixed.
Inner solve_inner(const SaddleProblem& problem, Point z, Side outer, const SwapCheckConfig& cfg, Point& warm) {
  const std::size_t nb = problem.blocks.size();
  Inner out;
  bool all_linear = true;
  for (const Block& bl : problem.blocks)
    if (bl.side != outer && !bl.linear) all_linear = false;

  Point grad(nb);
  for (std::size_t b = 0; b < nb; ++b) grad[b].assign(problem.blocks[b].dim, 0.0);
  if (all_linear) {
    problem.gradient(z, grad);
    for (std::size_t b = 0; b < nb; ++b)
      if (problem.blocks[b].side != outer) z[b] = detail::block_best(problem.blocks[b], grad[b]).point;
  } else {
    SaddleProblem sub;
    std::vector<std::size_t> map;
    for (std::size_t b = 0; b < nb; ++b) {
      if (problem.blocks[b].side == outer) continue;
      map.push_back(b);
      sub.blocks.push_back(problem.blocks[b]);
      sub.initial.push_back(warm[b]);
    }
    sub.gradient = [&](const Point& y, Point& g) {
      Point full = z;
      for (std::size_t i = 0; i < map.size(); ++i) full[map[i]] = y[i];
      Point fg(nb);
      for (std::size_t b = 0; b < nb; ++b) fg[b].assign(problem.blocks[b].dim, 0.0);
      problem.gradient(full, fg);
      for (std::size_t i = 0; i < map.size(); ++i) g[i] = fg[map[i]];
    };
    if (problem.block_gap) {
      sub.block_gap = [&](std::size_t i, const Point& y, const Point& g) -> std::optional<double> {
        Point full = z;
        for (std::size_t j = 0; j < map.size(); ++j) full[map[j]] = y[j];
        Point fg(nb);
        for (std::size_t b = 0; b < nb; ++b) fg[b].assign(problem.blocks[b].dim, 0.0);
        fg[map[i]] = g[i];
        return problem.block_gap(map[i], full, fg);
      };
    }
    SaddleConfig sc;
    sc.tol = cfg.inner_tol;
    sc.max_iter = cfg.inner_max_iter;
    const SaddleResult r = mirror_prox(sub, sc);
    out.converged = r.converged;
    for (std::size_t i = 0; i < map.size(); ++i) {
      z[map[i]] = r.best[i];
      warm[map[i]] = r.best[i];
    }
  }
  problem.gradient(z, grad);
  out.value = saddle_value(problem, z);
  out.z = std::move(z);
  out.grad = std::move(grad);
  return out;
}

struct OuterResult {
  double best = 0.0;   // best outer objective found (in minimisation sense)
  double bound = 0.0;  // certified bound on the optimum (lower, minimisation sense)
  std::size_t iterations = 0;
  bool converged = false;
};

// Minimises sign * phi over the outer blocks, phi(x) = opt_inner K.
OuterResult ellipsoid(const SaddleProblem& problem, Side outer, const SwapCheckConfig& cfg) {
  const double sign = outer == Side::Min ? 1.0 : -1.0;
  const Coordinates c = coordinates(problem, outer);
  const auto n = static_cast<Eigen::Index>(c.slots.size());
  OuterResult out;
  out.best = std::numeric_limits<double>::infinity();
  out.bound = -std::numeric_limits<double>::infinity();

  Point z = problem.initial;
  Point warm = problem.initial;
  Eigen::VectorXd centre = c.centre;
  Eigen::MatrixXd shape = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) shape(i, i) = static_cast<double>(n) * c.half_width[i] * c.half_width[i];
  double lo1 = n == 1 ? c.centre[0] - c.half_width[0] : 0.0;
  double hi1 = n == 1 ? c.centre[0] + c.half_width[0] : 0.0;

  if (n == 0) {
    const Inner in = solve_inner(problem, z, outer, cfg, warm);
    out.best = out.bound = sign * in.value;
    out.iterations = 1;
    out.converged = in.converged;
    return out;
  }

  for (std::size_t it = 0; it < cfg.max_outer; ++it) {
    out.iterations = it + 1;
    if (n == 1) centre[0] = 0.5 * (lo1 + hi1);
    unpack(problem, c, centre, outer, z);
    Eigen::VectorXd g = violated(problem, c, z, outer);
    if (g.size() == 0) {
      const Inner in = solve_inner(problem, z, outer, cfg, warm);
      const double phi = sign * in.value;
      // phi(u) >= K(u, y*) >= phi(x) - (outer block gaps at (x, y*)).
      double gap = 0.0;
      for (std::size_t b = 0; b < problem.blocks.size(); ++b)
        if (problem.blocks[b].side == outer)
          gap += detail::linear_block_gap(problem.blocks[b], in.z[b], in.grad[b]);
      out.best = std::min(out.best, phi);
      g = Eigen::VectorXd::Zero(n);
      for (std::size_t s = 0; s < c.slots.size(); ++s) {
        const Block& bl = problem.blocks[c.slots[s].block];
        const auto cg = detail::composite_gradient(bl, in.z[c.slots[s].block]);
        const std::size_t k = c.slots[s].index;
        double v = in.grad[c.slots[s].block][k] + cg[k];
        if (bl.set == SetKind::Simplex) v -= in.grad[c.slots[s].block][bl.dim - 1] + cg[bl.dim - 1];
        g[static_cast<Eigen::Index>(s)] = sign * v;
      }
      // The current ellipsoid (interval) still holds a minimiser, so the
      // cut also certifies phi(x*) >= phi(x) - max over it of <g, u - x>.
      const double reach = n == 1 ? std::abs(g[0]) * 0.5 * (hi1 - lo1) : std::sqrt(g.dot(shape * g));
      if (in.converged) out.bound = std::max({out.bound, phi - gap, phi - reach});
      if (out.best - out.bound <= cfg.tol) {
        out.converged = true;
        break;
      }
      if (g.norm() == 0.0) break;
    }
    if (n == 1) {
      if (g[0] > 0.0) hi1 = centre[0]; else lo1 = centre[0];
      if (hi1 - lo1 < 1e-15 * (1.0 + std::abs(hi1))) break;
      continue;
    }
    const double scale = std::sqrt(g.dot(shape * g));
    if (!(scale > 1e-300)) break;
    const Eigen::VectorXd pg = shape * g / scale;
    const double nd = static_cast<double>(n);
    centre -= pg / (nd + 1.0);
    shape = (nd * nd / (nd * nd - 1.0)) * (shape - (2.0 / (nd + 1.0)) * pg * pg.transpose());
  }
  return out;
}

}  // namespace

SwapCheckResult order_swap_check(const SaddleProblem& problem, const SwapCheckConfig& cfg) {
  problem.validate();
  if (!problem.value) throw InputError("order swap check needs a value oracle");
  SwapCheckResult out;
  const OuterResult minmax = ellipsoid(problem, Side::Min, cfg);
  const OuterResult maxmin = ellipsoid(problem, Side::Max, cfg);
  out.minmax = minmax.best;
  out.minmax_lower = minmax.bound;
  out.maxmin = -maxmin.best;
  out.maxmin_upper = -maxmin.bound;
  out.outer_iterations = minmax.iterations + maxmin.iterations;
  out.converged = minmax.converged && maxmin.converged;
  return out;
}

}  // namespace transeq
