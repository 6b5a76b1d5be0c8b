#pragma once

#include <vector>

#include "transeq/network.hpp"

namespace fixtures {

using namespace transeq;

// s -> v twice: constant time 1 and time equal to flow.
inline Network pigou() {
  return Network(2, {{0, 1, Affine{1.0, 0.0}}, {0, 1, Affine{0.0, 1.0}}}, {"s", "v"});
}

// Nodes s, a, b, t. Edges s->a (f), a->t (1), s->b (1), b->t (f), then the
// optional zero-cost a->b link.
inline Network braess(bool with_link) {
  std::vector<Edge> edges{{0, 1, Affine{0.0, 1.0}},
                          {1, 3, Affine{1.0, 0.0}},
                          {0, 2, Affine{1.0, 0.0}},
                          {2, 3, Affine{0.0, 1.0}}};
  if (with_link) edges.push_back({1, 2, Affine{0.0, 0.0}});
  return Network(4, edges, {"s", "a", "b", "t"});
}

inline Network line() {
  return Network(3, {{0, 1, Affine{2.0, 0.0}}, {1, 2, Affine{3.0, 0.0}}}, {"s", "a", "t"});
}

}  // namespace fixtures

#include <random>

#include "transeq/assignment.hpp"

namespace fixtures {

// Connected random graph: a spine 0 -> 1 -> ... -> n-1 plus random chords,
// affine costs with positive slopes.
inline Network random_affine(std::size_t n, std::mt19937_64& rng, double chord_prob = 0.3) {
  std::uniform_real_distribution<double> a(0.5, 2.0), b(0.1, 1.0), coin(0.0, 1.0);
  std::vector<Edge> edges;
  for (NodeId v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1, Affine{a(rng), b(rng)}});
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = 0; v < n; ++v)
      if (u != v && v != u + 1 && coin(rng) < chord_prob) edges.push_back({u, v, Affine{a(rng), b(rng)}});
  return Network(n, edges);
}

inline DemandMatrix one_pair(NodeId o, NodeId d, double amount) {
  return DemandMatrix::single({{o, d}}, {amount});
}

}  // namespace fixtures
