#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace transeq {

using NodeId = std::size_t;
using EdgeId = std::size_t;

// One value per edge, indexed by edge id (flows, times, capacities).
using EdgeVector = std::vector<double>;

// Ordered edge list of a simple directed path.
using Path = std::vector<EdgeId>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr EdgeId kNoEdge = std::numeric_limits<EdgeId>::max();

// tau(f) = a + b f
struct Affine {
  double a = 0.0;
  double b = 0.0;
};

// tau(f) = free_flow * (1 + rho (f / capacity)^power)
struct Bpr {
  double free_flow = 1.0;
  double capacity = 1.0;
  double rho = 0.15;
  double power = 4.0;
};

// Limit object: constant time free_flow below capacity, flow capped at capacity.
struct HardCap {
  double free_flow = 1.0;
  double capacity = 1.0;
};

using CostFunction = std::variant<Affine, Bpr, HardCap>;

// tau(0); the lower end of the dual domain t >= t_bar.
double free_flow_time(const CostFunction& cost);

// Largest finite point of dom sigma*. Affine with b = 0 pins the time at a.
double max_dual_time(const CostFunction& cost);

double edge_tau(const CostFunction& cost, double flow);

// sigma(f) = integral of tau over [0, f].
double edge_sigma(const CostFunction& cost, double flow);

// sigma*(t) = sup_{f >= 0} f t - sigma(f). Returns kInfinity outside the domain.
double edge_sigma_conjugate(const CostFunction& cost, double time);

// Derivative of sigma* at t, i.e. the flow whose time is t (0 below tau(0)).
double edge_flow_at_time(const CostFunction& cost, double time);

bool is_hard_cap(const CostFunction& cost);

struct Edge {
  NodeId tail = 0;
  NodeId head = 0;
  CostFunction cost;
};

struct OdPair {
  NodeId origin = 0;
  NodeId destination = 0;

  friend bool operator==(const OdPair&, const OdPair&) = default;
};

class Network {
 public:
  Network() = default;

  // Throws InputError on self-loops, out-of-range endpoints or invalid cost
  // parameters. Edge order defines edge ids.
  Network(std::size_t node_count, std::vector<Edge> edges,
          std::vector<std::string> node_names = {});

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }

  const Edge& edge(EdgeId e) const { return edges_[e]; }
  const std::vector<Edge>& edges() const { return edges_; }

  // Outgoing edge ids of v in increasing id order.
  std::span<const EdgeId> out_edges(NodeId v) const;

  const std::string& node_name(NodeId v) const { return names_[v]; }
  const std::vector<std::string>& node_names() const { return names_; }

  EdgeVector free_flow_times() const;
  bool has_hard_caps() const;

  // Edge times tau_e(f_e). Throws InputError on negative flow or HardCap edges.
  EdgeVector times(std::span<const double> flow) const;

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::string> names_;
  std::vector<std::size_t> out_offset_;
  std::vector<EdgeId> out_list_;
};

struct ShortestPathTree {
  NodeId origin = 0;
  std::vector<double> distance;  // kInfinity when unreachable
  std::vector<EdgeId> pred_edge;  // kNoEdge at the origin and unreachable nodes

  bool reachable(NodeId v) const { return distance[v] < kInfinity; }
  // Edge list origin -> v; empty when v is the origin or unreachable.
  Path path_to(const Network& network, NodeId v) const;
};

// Dijkstra under nonnegative weights. Among equal-length predecessors the
// smallest edge id wins. Throws InputError on negative or non-finite weights.
ShortestPathTree shortest_path(const Network& network, std::span<const double> weights,
                               NodeId origin);

double path_cost(std::span<const double> weights, const Path& path);

// Checks that consecutive edges chain from origin to destination without
// revisiting a node.
bool is_simple_path(const Network& network, const Path& path, NodeId origin,
                    NodeId destination);

// All simple paths origin -> destination in depth-first, edge-id order.
// Throws PathBudgetError when more than `budget` paths exist.
std::vector<Path> enumerate_simple_paths(const Network& network, NodeId origin,
                                         NodeId destination, std::size_t budget);

// Link flows Theta x induced by path flows.
void accumulate_path(std::span<double> flow, const Path& path, double amount);

// Replaces every HardCap edge by the BPR curve with power 1/mu that tends to it
// as mu -> 0.
Network smooth_capacities(const Network& network, double mu, double rho = 0.15);

std::string describe(const Network& network, const OdPair& od);

}  // namespace transeq
