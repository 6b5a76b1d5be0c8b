#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace transeq {

enum class Side { Min, Max };
enum class SetKind { Simplex, Box, CappedOrthant };
enum class Geometry { Euclidean, Entropy };

// One variable block of a saddle problem.
//
// Simplex: u >= 0, sum u = mass. Box: lower <= u <= upper. CappedOrthant:
// u >= 0 with the sum over each group at most group_cap. Groups default to
// one coordinate each.
//
// Min blocks with entropy geometry may carry the composite term
// entropy_weight * sum_g S_g ln(S_g / entropy_scale), S_g the group sums. It is
// handled exactly by the prox and by the gap, and is not part of the oracle.
struct Block {
  std::string name;
  Side side = Side::Min;
  SetKind set = SetKind::Box;
  Geometry geometry = Geometry::Euclidean;
  std::size_t dim = 0;
  double mass = 1.0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> group_of;
  std::vector<double> group_cap;
  double entropy_weight = 0.0;
  double entropy_scale = 1.0;
  // The objective is affine in this block once the others are fixed.
  bool linear = true;

  std::size_t group_count() const;
  std::size_t group(std::size_t k) const { return group_of.empty() ? k : group_of[k]; }
};

using Point = std::vector<std::vector<double>>;

struct SaddleProblem {
  std::vector<Block> blocks;
  // Writes the partial gradients of the objective K (composite terms
  // excluded) into grad, one vector per block.
  std::function<void(const Point& z, Point& grad)> gradient;
  // K(z) without composite terms. Needed by saddle_value and order_swap_check.
  std::function<double(const Point& z)> value;
  // Optional exact best-response improvement for nonlinear blocks. Returning
  // nullopt falls back to the linearised closed form.
  std::function<std::optional<double>(std::size_t block, const Point& z, const Point& grad)> block_gap;
  Point initial;

  // Throws InputError when blocks, bounds and the initial point disagree.
  void validate() const;
};

struct SaddleConfig {
  double step = 1.0;
  bool adaptive = true;
  std::size_t max_iter = 20000;
  double tol = 1e-6;
  std::size_t gap_every = 1;
  bool record_trace = false;
};

struct TraceRecord {
  std::size_t iteration = 0;
  double step = 0.0;
  double gap_average = 0.0;
  double gap_last = 0.0;
};

struct SaddleResult {
  Point average;
  Point last;
  Point best;  // whichever of average and last has the smaller gap
  double gap_average = 0.0;
  double gap_last = 0.0;
  double gap = 0.0;
  bool best_is_average = true;
  std::size_t iterations = 0;
  std::size_t oracle_calls = 0;
  bool converged = false;
  std::vector<TraceRecord> trace;
};

// Mirror-prox (extragradient) with per-block Bregman prox steps. With
// `adaptive` the step is halved until
//   step <F(w) - F(z), w - z+> <= V_z(w) + V_w(z+)
// and grown by 1.25 after each accepted iteration; otherwise it is fixed.
// The average is weighted by the step sizes.
SaddleResult mirror_prox(const SaddleProblem& problem, const SaddleConfig& cfg);

struct GapReport {
  double total = 0.0;
  std::vector<double> per_block;
};

// Sum over blocks of the best-response improvement at z, with the other
// blocks held fixed. Exact for blocks where the objective is affine
// (composite terms included); otherwise the problem's block_gap or the
// linearised bound.
GapReport best_response_gap(const SaddleProblem& problem, const Point& z);

// K(z) plus the composite terms of the min blocks.
double saddle_value(const SaddleProblem& problem, const Point& z);

double composite_value(const Block& block, const std::vector<double>& x);

struct SwapCheckConfig {
  double tol = 1e-6;
  std::size_t max_outer = 5000;
  double inner_tol = 1e-9;
  std::size_t inner_max_iter = 20000;
};

struct SwapCheckResult {
  double minmax = 0.0;
  double maxmin = 0.0;
  double minmax_lower = 0.0;  // certified bracket [minmax_lower, minmax]
  double maxmin_upper = 0.0;  // certified bracket [maxmin, maxmin_upper]
  std::size_t outer_iterations = 0;
  bool converged = false;
};

// Evaluates min_x max_y K and max_y min_x K separately: the outer variables
// by a central-cut ellipsoid method (bisection in one dimension), the inner
// problem in closed form for linear blocks or by mirror_prox otherwise.
SwapCheckResult order_swap_check(const SaddleProblem& problem, const SwapCheckConfig& cfg = {});

// Largest violation of <F(z) - F(z'), z - z'> >= 0 over random feasible
// pairs, reported as a nonnegative number (0 when no violation was seen).
double monotonicity_violation(const SaddleProblem& problem, std::size_t samples, std::uint64_t seed);

// Exact feasibility test with absolute slack.
bool feasible(const Block& block, const std::vector<double>& x, double slack = 1e-12);

}  // namespace transeq
