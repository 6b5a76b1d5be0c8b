#include "transeq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "transeq/errors.hpp"

#ifdef TRANSEQ_HAVE_OPENMP
#include <omp.h>
#endif

namespace transeq::kernels {

namespace {

struct OriginIndex {
  std::vector<NodeId> origins;          // distinct, in order of first appearance
  std::vector<std::size_t> tree_of_pair;
};

OriginIndex index_origins(std::span<const OdPair> pairs, std::size_t node_count) {
  OriginIndex index;
  std::vector<std::size_t> slot(node_count, std::numeric_limits<std::size_t>::max());
  index.tree_of_pair.reserve(pairs.size());
  for (const OdPair& od : pairs) {
    if (slot[od.origin] == std::numeric_limits<std::size_t>::max()) {
      slot[od.origin] = index.origins.size();
      index.origins.push_back(od.origin);
    }
    index.tree_of_pair.push_back(slot[od.origin]);
  }
  return index;
}

AonLoad assemble(const Network& network, std::span<const OdPair> pairs,
                 std::span<const double> demand, const OriginIndex& index,
                 const std::vector<ShortestPathTree>& trees) {
  AonLoad out;
  out.load.assign(network.edge_count(), 0.0);
  out.od_cost.resize(pairs.size());
  out.od_path.resize(pairs.size());
  for (std::size_t w = 0; w < pairs.size(); ++w) {
    const ShortestPathTree& tree = trees[index.tree_of_pair[w]];
    out.od_cost[w] = tree.distance[pairs[w].destination];
    out.od_path[w] = tree.path_to(network, pairs[w].destination);
    if (demand[w] != 0.0) accumulate_path(out.load, out.od_path[w], demand[w]);
  }
  return out;
}

double log_sum_exp(double max_term, double sum_shifted) {
  return max_term + std::log(sum_shifted);
}

// One scaling sweep over rows of the log kernel. Row i is independent of the
// others, so the OpenMP version splits the loop without changing any result.
void scale_rows(const SinkhornProblem& p, std::span<const double> log_v, std::span<double> log_u,
                bool parallel) {
  const auto rows = static_cast<std::ptrdiff_t>(p.rows);
  auto body = [&](std::ptrdiff_t i) {
    if (p.row_mass[i] == 0.0) {
      log_u[i] = -kInfinity;
      return;
    }
    double top = -kInfinity;
    for (std::size_t j = 0; j < p.cols; ++j) {
      const double c = p.cost[i * p.cols + j];
      if (c < kInfinity && log_v[j] > -kInfinity) top = std::max(top, -c / p.gamma + log_v[j]);
    }
    if (top == -kInfinity) throw InputError("sinkhorn: row " + std::to_string(i) + " has no admissible column");
    double sum = 0.0;
    for (std::size_t j = 0; j < p.cols; ++j) {
      const double c = p.cost[i * p.cols + j];
      if (c < kInfinity && log_v[j] > -kInfinity) sum += std::exp(-c / p.gamma + log_v[j] - top);
    }
    log_u[i] = std::log(p.row_mass[i]) - log_sum_exp(top, sum);
  };
  if (parallel) {
#ifdef TRANSEQ_HAVE_OPENMP
    bool failed = false;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      try {
        body(i);
      } catch (...) {
#pragma omp atomic write
        failed = true;
      }
    }
    if (failed) throw InputError("sinkhorn: a row has no admissible column");
    return;
#endif
  }
  for (std::ptrdiff_t i = 0; i < rows; ++i) body(i);
}

void scale_cols(const SinkhornProblem& p, std::span<const double> log_u, std::span<double> log_v,
                bool parallel) {
  const auto cols = static_cast<std::ptrdiff_t>(p.cols);
  auto body = [&](std::ptrdiff_t j) {
    if (p.col_mass[j] == 0.0) {
      log_v[j] = -kInfinity;
      return;
    }
    double top = -kInfinity;
    for (std::size_t i = 0; i < p.rows; ++i) {
      const double c = p.cost[i * p.cols + j];
      if (c < kInfinity && log_u[i] > -kInfinity) top = std::max(top, -c / p.gamma + log_u[i]);
    }
    if (top == -kInfinity) {
      log_v[j] = kInfinity;  // flagged below
      return;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
      const double c = p.cost[i * p.cols + j];
      if (c < kInfinity && log_u[i] > -kInfinity) sum += std::exp(-c / p.gamma + log_u[i] - top);
    }
    log_v[j] = std::log(p.col_mass[j]) - log_sum_exp(top, sum);
  };
  if (parallel) {
#ifdef TRANSEQ_HAVE_OPENMP
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < cols; ++j) body(j);
    return;
#endif
  }
  for (std::ptrdiff_t j = 0; j < cols; ++j) body(j);
}

SinkhornResult run_sinkhorn(const SinkhornProblem& p, double tol, std::size_t max_iter,
                            bool parallel) {
  if (p.cost.size() != p.rows * p.cols || p.row_mass.size() != p.rows ||
      p.col_mass.size() != p.cols)
    throw InputError("sinkhorn: inconsistent dimensions");
  if (!(p.gamma > 0.0)) throw InputError("sinkhorn: gamma must be > 0");

  SinkhornResult out;
  out.log_u.assign(p.rows, 0.0);
  out.log_v.assign(p.cols, 0.0);
  out.plan.assign(p.rows * p.cols, 0.0);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    scale_rows(p, out.log_v, out.log_u, parallel);
    scale_cols(p, out.log_u, out.log_v, parallel);
    for (std::size_t j = 0; j < p.cols; ++j) {
      if (out.log_v[j] == kInfinity)
        throw InputError("sinkhorn: column " + std::to_string(j) + " has no admissible row");
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < p.cols; ++j) {
        const double c = p.cost[i * p.cols + j];
        double value = 0.0;
        if (c < kInfinity && out.log_u[i] > -kInfinity && out.log_v[j] > -kInfinity)
          value = std::exp(out.log_u[i] - c / p.gamma + out.log_v[j]);
        out.plan[i * p.cols + j] = value;
        row += value;
      }
      residual = std::max(residual, std::abs(row - p.row_mass[i]));
    }
    out.iterations = it;
    out.margin_residual = residual;
    if (residual <= tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

bool parallel_available() {
#ifdef TRANSEQ_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

AonLoad all_or_nothing_serial(const Network& network, std::span<const double> t,
                              std::span<const OdPair> pairs, std::span<const double> demand) {
  const OriginIndex index = index_origins(pairs, network.node_count());
  std::vector<ShortestPathTree> trees;
  trees.reserve(index.origins.size());
  for (const NodeId origin : index.origins) trees.push_back(shortest_path(network, t, origin));
  return assemble(network, pairs, demand, index, trees);
}

AonLoad all_or_nothing_parallel(const Network& network, std::span<const double> t,
                                std::span<const OdPair> pairs, std::span<const double> demand) {
#ifdef TRANSEQ_HAVE_OPENMP
  const OriginIndex index = index_origins(pairs, network.node_count());
  std::vector<ShortestPathTree> trees(index.origins.size());
  const auto count = static_cast<std::ptrdiff_t>(index.origins.size());
  // Validation errors are thrown by the serial pre-check so no exception
  // escapes the parallel region.
  if (count > 0) trees[0] = shortest_path(network, t, index.origins[0]);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 1; k < count; ++k) trees[k] = shortest_path(network, t, index.origins[k]);
  return assemble(network, pairs, demand, index, trees);
#else
  return all_or_nothing_serial(network, t, pairs, demand);
#endif
}

AonLoad all_or_nothing(const Network& network, std::span<const double> t,
                       std::span<const OdPair> pairs, std::span<const double> demand) {
  return parallel_available() ? all_or_nothing_parallel(network, t, pairs, demand)
                              : all_or_nothing_serial(network, t, pairs, demand);
}

SinkhornResult sinkhorn_serial(const SinkhornProblem& problem, double tol, std::size_t max_iter) {
  return run_sinkhorn(problem, tol, max_iter, false);
}

SinkhornResult sinkhorn_parallel(const SinkhornProblem& problem, double tol,
                                 std::size_t max_iter) {
  return run_sinkhorn(problem, tol, max_iter, true);
}

SinkhornResult sinkhorn(const SinkhornProblem& problem, double tol, std::size_t max_iter) {
  return run_sinkhorn(problem, tol, max_iter, parallel_available());
}

}  // namespace transeq::kernels
