#include "transeq/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

#include "transeq/errors.hpp"

namespace transeq {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_flow(double flow) {
  if (!(flow >= 0.0) || !std::isfinite(flow)) {
    std::ostringstream msg;
    msg << "edge flow must be finite and nonnegative, got " << flow;
    throw InputError(msg.str());
  }
}

void validate_cost(const CostFunction& cost, EdgeId e) {
  auto fail = [e](const std::string& what) {
    throw InputError("edge " + std::to_string(e) + ": " + what);
  };
  std::visit(Overloaded{
                 [&](const Affine& c) {
                   if (!std::isfinite(c.a) || c.a < 0.0) fail("affine a must be >= 0");
                   if (!std::isfinite(c.b) || c.b < 0.0) fail("affine b must be >= 0");
                 },
                 [&](const Bpr& c) {
                   if (!(c.free_flow > 0.0) || !std::isfinite(c.free_flow))
                     fail("bpr free_flow must be > 0");
                   if (!(c.capacity > 0.0) || !std::isfinite(c.capacity))
                     fail("bpr capacity must be > 0");
                   if (!(c.rho > 0.0) || !std::isfinite(c.rho)) fail("bpr rho must be > 0");
                   if (!(c.power >= 1.0) || !std::isfinite(c.power)) fail("bpr power must be >= 1");
                 },
                 [&](const HardCap& c) {
                   if (!(c.free_flow > 0.0) || !std::isfinite(c.free_flow))
                     fail("hardcap free_flow must be > 0");
                   if (!(c.capacity > 0.0) || !std::isfinite(c.capacity))
                     fail("hardcap capacity must be > 0");
                 },
             },
             cost);
}

}  // namespace

double free_flow_time(const CostFunction& cost) {
  return std::visit(Overloaded{
                        [](const Affine& c) { return c.a; },
                        [](const Bpr& c) { return c.free_flow; },
                        [](const HardCap& c) { return c.free_flow; },
                    },
                    cost);
}

double max_dual_time(const CostFunction& cost) {
  if (const auto* c = std::get_if<Affine>(&cost); c != nullptr && c->b == 0.0) return c->a;
  return kInfinity;
}

bool is_hard_cap(const CostFunction& cost) { return std::holds_alternative<HardCap>(cost); }

double edge_tau(const CostFunction& cost, double flow) {
  check_flow(flow);
  return std::visit(Overloaded{
                        [&](const Affine& c) { return c.a + c.b * flow; },
                        [&](const Bpr& c) {
                          return c.free_flow * (1.0 + c.rho * std::pow(flow / c.capacity, c.power));
                        },
                        [&](const HardCap&) -> double {
                          throw InputError("hard-capacity edges have no finite cost function");
                        },
                    },
                    cost);
}

double edge_sigma(const CostFunction& cost, double flow) {
  check_flow(flow);
  return std::visit(Overloaded{
                        [&](const Affine& c) { return c.a * flow + 0.5 * c.b * flow * flow; },
                        [&](const Bpr& c) {
                          const double ratio = flow / c.capacity;
                          return c.free_flow * (flow + c.rho * c.capacity *
                                                           std::pow(ratio, c.power + 1.0) /
                                                           (c.power + 1.0));
                        },
                        [&](const HardCap&) -> double {
                          throw InputError("hard-capacity edges have no finite cost integral");
                        },
                    },
                    cost);
}

double edge_flow_at_time(const CostFunction& cost, double time) {
  return std::visit(Overloaded{
                        [&](const Affine& c) {
                          if (c.b == 0.0 || time <= c.a) return 0.0;
                          return (time - c.a) / c.b;
                        },
                        [&](const Bpr& c) {
                          if (time <= c.free_flow) return 0.0;
                          const double excess = (time / c.free_flow - 1.0) / c.rho;
                          return c.capacity * std::pow(excess, 1.0 / c.power);
                        },
                        [&](const HardCap& c) { return time > c.free_flow ? c.capacity : 0.0; },
                    },
                    cost);
}

double edge_sigma_conjugate(const CostFunction& cost, double time) {
  return std::visit(Overloaded{
                        [&](const Affine& c) {
                          if (time <= c.a) return 0.0;
                          if (c.b == 0.0) return kInfinity;
                          const double excess = time - c.a;
                          return excess * excess / (2.0 * c.b);
                        },
                        [&](const Bpr& c) {
                          if (time <= c.free_flow) return 0.0;
                          const double f = edge_flow_at_time(cost, time);
                          return f * time - edge_sigma(cost, f);
                        },
                        [&](const HardCap& c) {
                          return time <= c.free_flow ? 0.0 : c.capacity * (time - c.free_flow);
                        },
                    },
                    cost);
}

Network::Network(std::size_t node_count, std::vector<Edge> edges,
                 std::vector<std::string> node_names)
    : node_count_(node_count), edges_(std::move(edges)), names_(std::move(node_names)) {
  if (names_.empty()) {
    names_.reserve(node_count_);
    for (std::size_t v = 0; v < node_count_; ++v) names_.push_back(std::to_string(v));
  }
  if (names_.size() != node_count_) throw InputError("node name count differs from node count");
  std::vector<std::size_t> degree(node_count_ + 1, 0);
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    const Edge& edge = edges_[e];
    if (edge.tail >= node_count_ || edge.head >= node_count_)
      throw InputError("edge " + std::to_string(e) + ": endpoint out of range");
    if (edge.tail == edge.head)
      throw InputError("edge " + std::to_string(e) + ": self-loop at node " + names_[edge.tail]);
    validate_cost(edge.cost, e);
    ++degree[edge.tail + 1];
  }
  out_offset_.assign(node_count_ + 1, 0);
  for (std::size_t v = 0; v < node_count_; ++v) out_offset_[v + 1] = out_offset_[v] + degree[v + 1];
  out_list_.resize(edges_.size());
  std::vector<std::size_t> cursor(out_offset_.begin(), out_offset_.end() - 1);
  for (EdgeId e = 0; e < edges_.size(); ++e) out_list_[cursor[edges_[e].tail]++] = e;
}

std::span<const EdgeId> Network::out_edges(NodeId v) const {
  return {out_list_.data() + out_offset_[v], out_offset_[v + 1] - out_offset_[v]};
}

EdgeVector Network::free_flow_times() const {
  EdgeVector t(edges_.size());
  for (EdgeId e = 0; e < edges_.size(); ++e) t[e] = free_flow_time(edges_[e].cost);
  return t;
}

bool Network::has_hard_caps() const {
  return std::any_of(edges_.begin(), edges_.end(),
                     [](const Edge& e) { return is_hard_cap(e.cost); });
}

EdgeVector Network::times(std::span<const double> flow) const {
  EdgeVector t(edges_.size());
  for (EdgeId e = 0; e < edges_.size(); ++e) t[e] = edge_tau(edges_[e].cost, flow[e]);
  return t;
}

Path ShortestPathTree::path_to(const Network& network, NodeId v) const {
  Path path;
  if (!reachable(v)) return path;
  while (v != origin) {
    const EdgeId e = pred_edge[v];
    path.push_back(e);
    v = network.edge(e).tail;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

ShortestPathTree shortest_path(const Network& network, std::span<const double> weights,
                               NodeId origin) {
  if (weights.size() != network.edge_count())
    throw InputError("weight vector length differs from edge count");
  if (origin >= network.node_count()) throw InputError("origin out of range");
  for (EdgeId e = 0; e < weights.size(); ++e) {
    if (!(weights[e] >= 0.0) || !std::isfinite(weights[e]))
      throw InputError("edge " + std::to_string(e) + ": shortest-path weight must be finite and >= 0");
  }

  ShortestPathTree tree;
  tree.origin = origin;
  tree.distance.assign(network.node_count(), kInfinity);
  tree.pred_edge.assign(network.node_count(), kNoEdge);
  std::vector<char> settled(network.node_count(), 0);

  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  tree.distance[origin] = 0.0;
  heap.emplace(0.0, origin);
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (settled[u]) continue;
    settled[u] = 1;
    for (const EdgeId e : network.out_edges(u)) {
      const NodeId v = network.edge(e).head;
      if (settled[v]) continue;
      const double candidate = d + weights[e];
      if (candidate < tree.distance[v]) {
        tree.distance[v] = candidate;
        tree.pred_edge[v] = e;
        heap.emplace(candidate, v);
      } else if (candidate == tree.distance[v] && e < tree.pred_edge[v]) {
        tree.pred_edge[v] = e;
      }
    }
  }
  return tree;
}

double path_cost(std::span<const double> weights, const Path& path) {
  double total = 0.0;
  for (const EdgeId e : path) total += weights[e];
  return total;
}

bool is_simple_path(const Network& network, const Path& path, NodeId origin,
                    NodeId destination) {
  if (path.empty()) return origin == destination;
  std::vector<char> visited(network.node_count(), 0);
  NodeId at = origin;
  visited[at] = 1;
  for (const EdgeId e : path) {
    if (e >= network.edge_count() || network.edge(e).tail != at) return false;
    at = network.edge(e).head;
    if (visited[at]) return false;
    visited[at] = 1;
  }
  return at == destination;
}

std::vector<Path> enumerate_simple_paths(const Network& network, NodeId origin,
                                         NodeId destination, std::size_t budget) {
  std::vector<Path> paths;
  std::vector<char> on_path(network.node_count(), 0);
  Path current;

  std::function<void(NodeId)> dfs = [&](NodeId u) {
    if (u == destination) {
      if (paths.size() == budget) {
        throw PathBudgetError("more than " + std::to_string(budget) + " simple paths for od pair " +
                              network.node_name(origin) + " -> " +
                              network.node_name(destination));
      }
      paths.push_back(current);
      return;
    }
    on_path[u] = 1;
    for (const EdgeId e : network.out_edges(u)) {
      const NodeId v = network.edge(e).head;
      if (on_path[v]) continue;
      current.push_back(e);
      dfs(v);
      current.pop_back();
    }
    on_path[u] = 0;
  };
  if (origin != destination) dfs(origin);
  return paths;
}

void accumulate_path(std::span<double> flow, const Path& path, double amount) {
  for (const EdgeId e : path) flow[e] += amount;
}

Network smooth_capacities(const Network& network, double mu, double rho) {
  if (!(mu > 0.0 && mu <= 1.0)) throw InputError("mu must lie in (0, 1]");
  std::vector<Edge> edges = network.edges();
  for (Edge& edge : edges) {
    if (const auto* cap = std::get_if<HardCap>(&edge.cost)) {
      edge.cost = Bpr{cap->free_flow, cap->capacity, rho, 1.0 / mu};
    }
  }
  return Network(network.node_count(), std::move(edges), network.node_names());
}

std::string describe(const Network& network, const OdPair& od) {
  return network.node_name(od.origin) + " -> " + network.node_name(od.destination);
}

}  // namespace transeq
