#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

#include "transeq/assignment.hpp"
#include "transeq/errors.hpp"

namespace transeq {

namespace {

struct Arc {
  std::size_t to;
  double cap;
  double cost;
  std::size_t rev;  // index of the paired arc in graph[to]
};

class Residual {
 public:
  explicit Residual(std::size_t n) : graph_(n) {}

  // Returns the position of the forward arc in graph[u].
  std::size_t add(std::size_t u, std::size_t v, double cap, double cost) {
    graph_[u].push_back({v, cap, cost, graph_[v].size()});
    graph_[v].push_back({u, 0.0, -cost, graph_[u].size() - 1});
    return graph_[u].size() - 1;
  }

  std::vector<std::vector<Arc>>& graph() { return graph_; }

 private:
  std::vector<std::vector<Arc>> graph_;
};

}  // namespace

LpLimitResult lp_limit(const Network& network, const DemandMatrix& demands) {
  demands.validate(network);
  for (EdgeId e = 0; e < network.edge_count(); ++e)
    if (!is_hard_cap(network.edge(e).cost))
      throw InputError("edge " + std::to_string(e) + ": the lp limit needs hard-capacity edges");

  const std::size_t n = network.node_count();
  std::vector<double> by_origin(n, 0.0), by_destination(n, 0.0);
  std::vector<NodeId> origins, destinations;
  double total = 0.0;
  for (std::size_t w = 0; w < demands.size(); ++w) {
    const double d = demands.total(w);
    if (d == 0.0) continue;
    const OdPair& od = demands.pairs[w];
    if (by_origin[od.origin] == 0.0) origins.push_back(od.origin);
    if (by_destination[od.destination] == 0.0) destinations.push_back(od.destination);
    by_origin[od.origin] += d;
    by_destination[od.destination] += d;
    total += d;
  }

  LpLimitResult out;
  out.flow.assign(network.edge_count(), 0.0);
  out.time = network.free_flow_times();
  if (total == 0.0) {
    out.dual_objective = dual_value(network, demands, out.time);
    return out;
  }
  if (origins.size() > 1 && destinations.size() > 1)
    throw InputError("lp limit: pairs must share a single origin or a single destination");

  // Positive demand means a single origin or a single destination, so the
  // aggregate is a single-commodity flow between a super source and sink.
  const std::size_t source = n, sink = n + 1;
  Residual residual(n + 2);
  double max_cap = total;
  std::vector<std::size_t> arc_of_edge(network.edge_count());
  for (EdgeId e = 0; e < network.edge_count(); ++e) {
    const auto& cap = std::get<HardCap>(network.edge(e).cost);
    arc_of_edge[e] = residual.add(network.edge(e).tail, network.edge(e).head, cap.capacity, cap.free_flow);
    max_cap = std::max(max_cap, cap.capacity);
  }
  for (const NodeId o : origins) residual.add(source, o, by_origin[o], 0.0);
  for (const NodeId d : destinations) residual.add(d, sink, by_destination[d], 0.0);
  auto& graph = residual.graph();
  const double cap_eps = 1e-12 * max_cap;

  std::vector<double> potential(n + 2, 0.0);
  std::vector<double> dist(n + 2);
  std::vector<std::pair<std::size_t, std::size_t>> pred(n + 2);
  double routed = 0.0;
  while (total - routed > 1e-12 * total) {
    std::fill(dist.begin(), dist.end(), kInfinity);
    std::vector<char> done(n + 2, 0);
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (done[u]) continue;
      done[u] = 1;
      for (std::size_t k = 0; k < graph[u].size(); ++k) {
        const Arc& a = graph[u][k];
        if (a.cap <= cap_eps || done[a.to]) continue;
        const double reduced = std::max(0.0, a.cost + potential[u] - potential[a.to]);
        if (d + reduced < dist[a.to]) {
          dist[a.to] = d + reduced;
          pred[a.to] = {u, k};
          heap.emplace(dist[a.to], a.to);
        }
      }
    }

    if (!(dist[sink] < kInfinity)) {
      double cut = 0.0;
      std::ostringstream edges;
      bool first = true;
      for (EdgeId e = 0; e < network.edge_count(); ++e) {
        const Edge& edge = network.edge(e);
        if (done[edge.tail] && !done[edge.head]) {
          cut += std::get<HardCap>(edge.cost).capacity;
          edges << (first ? "" : ", ") << e << " (" << network.node_name(edge.tail) << " -> "
                << network.node_name(edge.head) << ")";
          first = false;
        }
      }
      for (const NodeId d : destinations)
        if (done[d]) cut += by_destination[d];
      for (const NodeId o : origins)
        if (!done[o]) cut += by_origin[o];
      std::ostringstream msg;
      msg << "lp limit: demand " << total << " exceeds capacity " << cut
          << " of the cut through edges {" << edges.str() << "}";
      throw InfeasibleError(msg.str());
    }

    const double reach = dist[sink];
    for (std::size_t v = 0; v < n + 2; ++v) potential[v] += std::min(dist[v], reach);

    double push = total - routed;
    for (std::size_t v = sink; v != source; v = pred[v].first)
      push = std::min(push, graph[pred[v].first][pred[v].second].cap);
    for (std::size_t v = sink; v != source; v = pred[v].first) {
      Arc& a = graph[pred[v].first][pred[v].second];
      a.cap -= push;
      graph[v][a.rev].cap += push;
    }
    routed += push;
    ++out.augmentations;
  }

  for (EdgeId e = 0; e < network.edge_count(); ++e) {
    const Edge& edge = network.edge(e);
    const Arc& a = graph[edge.tail][arc_of_edge[e]];
    const auto& cap = std::get<HardCap>(edge.cost);
    out.flow[e] = std::clamp(cap.capacity - a.cap, 0.0, cap.capacity);
    out.objective += cap.free_flow * out.flow[e];
    out.time[e] = std::max(cap.free_flow, potential[edge.head] - potential[edge.tail]);
  }
  out.dual_objective = dual_value(network, demands, out.time);
  return out;
}

}  // namespace transeq
