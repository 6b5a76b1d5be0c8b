#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "transeq/market.hpp"
#include "transeq/network.hpp"

namespace transeq::detail {

// Variable layout of the market saddle. Producers without a fixed cost keep
// L in the box U; the others, and all consumers, choose weights over the
// vertices of U (resp. V) with total weight equal to the participation level.
//
// The d block holds one coordinate per (pair, good, route). Without lifting
// each pair has a single placeholder route and the transport potential is
// evaluated directly; with lifting the routes are the simple paths of the
// network and a max block of edge times t replaces the potential.
struct MarketLayout {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t rows = 0, cols = 0, goods = 0, materials = 0;
  std::vector<std::size_t> pairs;  // admissible row-major (i, j) with a producer able to ship
  std::vector<std::size_t> d_offset, route_count;
  std::size_t d_dim = 0;
  bool lifted = false;
  std::vector<std::vector<Path>> routes;  // per pair, lifted only
  EdgeVector t_lower, t_upper;            // lifted only

  std::vector<std::optional<std::size_t>> box_offset;
  std::vector<std::optional<std::size_t>> weight_group;
  std::vector<std::vector<std::vector<double>>> producer_vertices;
  std::vector<std::size_t> producer_start;
  std::vector<std::vector<std::vector<double>>> consumer_vertices;
  std::vector<std::size_t> consumer_start;
  // Weights are measured in units of 1/scale so that the blocks are about as
  // stiff as the prices.
  std::vector<double> producer_scale, consumer_scale;
  std::size_t box_dim = 0, producer_weights = 0, consumer_weights = 0;
  std::size_t price_l = 0, price_w = 0, price_y = 0, price_dim = 0;

  std::size_t bd = npos, bl = npos, bu = npos, bw = npos, bp = npos, bt = npos;
};

// path_budget = 0 keeps the transport potential; otherwise routes are
// enumerated (the transport must be a network model).
MarketLayout market_layout(const MarketInstance& inst, std::size_t path_budget);

SaddleProblem assemble(const MarketInstance& inst, const MarketLayout& lay, double price_cap);

// Reads the market state at a saddle point and evaluates the agents there.
MarketEquilibrium read_equilibrium(const MarketInstance& inst, const MarketLayout& lay, const SaddleResult& r,
                                   double price_cap);

// Aggregate row-major pair masses at z.
std::vector<double> pair_masses(const MarketLayout& lay, const Point& z);

// Upper end of the edge-time box: the largest finite dual time, at most
// 1e6 * max(t_bar, 1).
double time_cap(const CostFunction& cost);

}  // namespace transeq::detail
