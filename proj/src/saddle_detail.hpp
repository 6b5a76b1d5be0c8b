#pragma once

// Block-level primitives shared by the mirror-prox engine and the order-swap
// check.

#include <vector>

#include "transeq/saddle.hpp"

namespace transeq::detail {

inline constexpr double kProbFloor = 1e-300;

struct BlockBest {
  double value = 0.0;
  std::vector<double> point;
};

// Min blocks: min_u <g, u> + composite(u). Max blocks: max_u <g, u>.
BlockBest block_best(const Block& block, const std::vector<double>& g);

// Prox step from z along the signed operator value f (f = +grad on min blocks,
// -grad on max blocks).
std::vector<double> prox(const Block& block, const std::vector<double>& z, double step,
                         const std::vector<double>& f);

double bregman(const Block& block, const std::vector<double>& from, const std::vector<double>& to);

// Gradient of the composite term (floored at the boundary).
std::vector<double> composite_gradient(const Block& block, const std::vector<double>& x);

// Best-response improvement of one block with the linearised objective.
double linear_block_gap(const Block& block, const std::vector<double>& x, const std::vector<double>& g);

std::vector<double> project_simplex(const std::vector<double>& v, double mass);

}  // namespace transeq::detail
