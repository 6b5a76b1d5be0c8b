#include "instance.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "transeq/errors.hpp"

namespace transeq::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw InputError(path + ": " + what); }

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string item(const std::string& path, std::size_t k) { return path + "[" + std::to_string(k) + "]"; }

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path.empty() ? "instance" : path, "expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!keys.count(key)) fail(child(path, key), "unknown field");
}

const json& array_of(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  return j;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

double nonnegative(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (v < 0.0) fail(path, "must be >= 0");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0)) fail(path, "must be > 0");
  return v;
}

std::size_t count(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) fail(path, "expected a nonnegative integer");
  return j.get<std::size_t>();
}

std::vector<double> vector_of(const json& j, const std::string& path, bool require_nonnegative) {
  std::vector<double> out;
  std::size_t k = 0;
  for (const auto& v : array_of(j, path)) {
    out.push_back(require_nonnegative ? nonnegative(v, item(path, k)) : number(v, item(path, k)));
    ++k;
  }
  return out;
}

// Row-major rows x cols matrix given as an array of rows.
std::vector<double> matrix_of(const json& j, const std::string& path, std::size_t rows, std::size_t cols) {
  if (!j.is_array() || j.size() != rows) fail(path, "expected " + std::to_string(rows) + " rows");
  std::vector<double> out;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = vector_of(j[r], item(path, r), false);
    if (row.size() != cols) fail(item(path, r), "expected " + std::to_string(cols) + " entries");
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

struct NodeTable {
  std::vector<std::string> names;

  NodeId resolve(const json& j, const std::string& path) const {
    if (j.is_number_unsigned()) {
      const std::size_t v = j.get<std::size_t>();
      if (v >= names.size()) fail(path, "node index out of range");
      return v;
    }
    if (j.is_string()) {
      for (std::size_t v = 0; v < names.size(); ++v)
        if (names[v] == j.get<std::string>()) return v;
      fail(path, "unknown node '" + j.get<std::string>() + "'");
    }
    fail(path, "expected a node index or name");
  }
};

CostFunction cost_of(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) fail(child(path, "type"), "expected a cost type");
  const std::string type = j["type"].get<std::string>();
  auto get = [&](const char* key, double fallback, bool required) {
    if (!j.contains(key)) {
      if (required) fail(child(path, key), "missing");
      return fallback;
    }
    return nonnegative(j[key], child(path, key));
  };
  if (type == "affine") {
    require_object(j, path, {"type", "a", "b"});
    return Affine{get("a", 0.0, true), get("b", 0.0, false)};
  }
  if (type == "bpr") {
    require_object(j, path, {"type", "free_flow", "capacity", "rho", "power"});
    Bpr c{get("free_flow", 0.0, true), get("capacity", 0.0, true), get("rho", 0.15, false), get("power", 4.0, false)};
    if (!(c.capacity > 0.0)) fail(child(path, "capacity"), "must be > 0");
    if (!(c.power > 0.0)) fail(child(path, "power"), "must be > 0");
    return c;
  }
  if (type == "hard_cap") {
    require_object(j, path, {"type", "free_flow", "capacity"});
    HardCap c{get("free_flow", 0.0, true), get("capacity", 0.0, true)};
    if (!(c.capacity > 0.0)) fail(child(path, "capacity"), "must be > 0");
    return c;
  }
  fail(child(path, "type"), "unknown cost type '" + type + "'");
}

void read_network(const json& j, InstanceFile& out, NodeTable& nodes) {
  const std::string path = "network";
  require_object(j, path, {"nodes", "edges", "origins", "destinations"});
  if (!j.contains("nodes")) fail(child(path, "nodes"), "missing");
  const json& n = j["nodes"];
  if (n.is_number_unsigned()) {
    for (std::size_t v = 0; v < n.get<std::size_t>(); ++v) nodes.names.push_back(std::to_string(v));
  } else if (n.is_array()) {
    std::set<std::string> seen;
    for (std::size_t v = 0; v < n.size(); ++v) {
      if (!n[v].is_string()) fail(item(child(path, "nodes"), v), "expected a node name");
      if (!seen.insert(n[v].get<std::string>()).second) fail(item(child(path, "nodes"), v), "duplicate node name");
      nodes.names.push_back(n[v].get<std::string>());
    }
  } else {
    fail(child(path, "nodes"), "expected a node count or an array of names");
  }
  if (!j.contains("edges")) fail(child(path, "edges"), "missing");
  std::vector<Edge> edges;
  const std::string ep = child(path, "edges");
  for (std::size_t e = 0; e < array_of(j["edges"], ep).size(); ++e) {
    const json& ej = j["edges"][e];
    const std::string p = item(ep, e);
    require_object(ej, p, {"from", "to", "cost"});
    for (const char* key : {"from", "to", "cost"})
      if (!ej.contains(key)) fail(child(p, key), "missing");
    Edge edge{nodes.resolve(ej["from"], child(p, "from")), nodes.resolve(ej["to"], child(p, "to")),
              cost_of(ej["cost"], child(p, "cost"))};
    if (edge.tail == edge.head) fail(p, "self-loop");
    edges.push_back(edge);
  }
  out.network = Network(nodes.names.size(), edges, nodes.names);
  for (const auto* key : {"origins", "destinations"}) {
    if (!j.contains(key)) continue;
    auto& target = std::string(key) == "origins" ? out.origins : out.destinations;
    std::size_t k = 0;
    for (const auto& v : array_of(j[key], child(path, key))) target.push_back(nodes.resolve(v, item(child(path, key), k++)));
  }
}

void read_demands(const json& j, InstanceFile& out, const NodeTable& nodes) {
  if (!out.network) fail("demands", "requires a network section");
  DemandMatrix dm;
  std::size_t commodities = 0;
  for (std::size_t w = 0; w < array_of(j, "demands").size(); ++w) {
    const std::string p = item("demands", w);
    require_object(j[w], p, {"origin", "destination", "amount"});
    for (const char* key : {"origin", "destination", "amount"})
      if (!j[w].contains(key)) fail(child(p, key), "missing");
    OdPair od{nodes.resolve(j[w]["origin"], child(p, "origin")), nodes.resolve(j[w]["destination"], child(p, "destination"))};
    if (od.origin == od.destination) fail(p, "origin equals destination");
    std::vector<double> amount = j[w]["amount"].is_array() ? vector_of(j[w]["amount"], child(p, "amount"), true)
                                                           : std::vector<double>{nonnegative(j[w]["amount"], child(p, "amount"))};
    if (w == 0) commodities = amount.size();
    if (amount.size() != commodities || amount.empty()) fail(child(p, "amount"), "commodity count differs");
    dm.pairs.push_back(od);
    dm.amounts.push_back(amount);
  }
  out.demands = dm;
}

void read_costs(const json& j, InstanceFile& out) {
  const json& rows = array_of(j, "costs");
  FixedCosts fc;
  fc.rows = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string p = item("costs", i);
    array_of(rows[i], p);
    if (i == 0) fc.cols = rows[i].size();
    if (rows[i].size() != fc.cols) fail(p, "rows differ in length");
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      fc.cost.push_back(rows[i][c].is_null() ? kInfinity : nonnegative(rows[i][c], item(p, c)));
  }
  out.costs = fc;
}

QuadraticSite site_of(const json& j, const std::string& path) {
  require_object(j, path, {"alpha", "beta"});
  QuadraticSite s;
  if (j.contains("alpha")) s.alpha = number(j["alpha"], child(path, "alpha"));
  if (j.contains("beta")) s.beta = nonnegative(j["beta"], child(path, "beta"));
  return s;
}

void read_distribution(const json& j, InstanceFile& out) {
  const std::string path = "distribution";
  require_object(j, path, {"sources", "sinks", "total_cap", "gamma", "row_margins", "col_margins"});
  DistributionSection d;
  for (const auto* key : {"sources", "sinks"}) {
    if (!j.contains(key)) continue;
    auto& target = std::string(key) == "sources" ? d.sources : d.sinks;
    std::size_t k = 0;
    for (const auto& s : array_of(j[key], child(path, key))) target.push_back(site_of(s, item(child(path, key), k++)));
  }
  if (j.contains("total_cap")) d.total_cap = positive(j["total_cap"], child(path, "total_cap"));
  if (j.contains("gamma")) d.gamma = nonnegative(j["gamma"], child(path, "gamma"));
  if (j.contains("row_margins")) d.row_margins = vector_of(j["row_margins"], child(path, "row_margins"), true);
  if (j.contains("col_margins")) d.col_margins = vector_of(j["col_margins"], child(path, "col_margins"), true);
  out.distribution = d;
}

void read_market(const json& j, InstanceFile& out) {
  const std::string path = "market";
  require_object(j, path, {"goods", "materials", "producers", "consumers", "b", "gamma"});
  MarketSection ms;
  MarketInstance& mk = ms.data;
  if (!j.contains("goods")) fail(child(path, "goods"), "missing");
  mk.goods = count(j["goods"], child(path, "goods"));
  if (mk.goods == 0) fail(child(path, "goods"), "must be >= 1");
  if (j.contains("materials")) mk.materials = count(j["materials"], child(path, "materials"));
  const std::size_t m = mk.goods, q = mk.materials;
  if (j.contains("b")) mk.b = vector_of(j["b"], child(path, "b"), true);
  if (mk.b.size() != q) fail(child(path, "b"), "expected " + std::to_string(q) + " entries");
  if (j.contains("gamma")) {
    mk.gamma = positive(j["gamma"], child(path, "gamma"));
    ms.has_gamma = true;
  }
  const std::string pp = child(path, "producers");
  if (j.contains("producers"))
    for (std::size_t i = 0; i < array_of(j["producers"], pp).size(); ++i) {
      const json& pj = j["producers"][i];
      const std::string p = item(pp, i);
      require_object(pj, p, {"u_max", "chi", "A", "c", "R", "sink"});
      Producer pr;
      if (!pj.contains("u_max")) fail(child(p, "u_max"), "missing");
      pr.u_max = vector_of(pj["u_max"], child(p, "u_max"), true);
      if (pr.u_max.size() != m) fail(child(p, "u_max"), "expected " + std::to_string(m) + " entries");
      if (pj.contains("chi")) pr.chi = nonnegative(pj["chi"], child(p, "chi"));
      pr.A = pj.contains("A") ? matrix_of(pj["A"], child(p, "A"), m, m) : std::vector<double>(m * m, 0.0);
      pr.c = pj.contains("c") ? vector_of(pj["c"], child(p, "c"), true) : std::vector<double>(m, 0.0);
      if (pr.c.size() != m) fail(child(p, "c"), "expected " + std::to_string(m) + " entries");
      pr.R = pj.contains("R") ? matrix_of(pj["R"], child(p, "R"), q, m) : std::vector<double>(q * m, 0.0);
      if (pj.contains("sink") && !pj["sink"].is_null()) pr.sink = count(pj["sink"], child(p, "sink"));
      mk.producers.push_back(pr);
    }
  const std::string cp = child(path, "consumers");
  if (j.contains("consumers"))
    for (std::size_t k = 0; k < array_of(j["consumers"], cp).size(); ++k) {
      const json& cj = j["consumers"][k];
      const std::string p = item(cp, k);
      require_object(cj, p, {"Q", "sigma_min", "income"});
      for (const char* key : {"Q", "sigma_min", "income"})
        if (!cj.contains(key)) fail(child(p, key), "missing");
      Consumer cn;
      cn.sigma_min = vector_of(cj["sigma_min"], child(p, "sigma_min"), false);
      cn.properties = cn.sigma_min.size();
      cn.Q = matrix_of(cj["Q"], child(p, "Q"), cn.properties, m);
      cn.income = nonnegative(cj["income"], child(p, "income"));
      mk.consumers.push_back(cn);
    }
  out.market = ms;
}

void read_options(const json& j, InstanceFile& out) {
  require_object(j, "options", {"mu", "gamma_tilde", "path_budget"});
  if (j.contains("mu")) out.options.mu = positive(j["mu"], "options.mu");
  if (j.contains("gamma_tilde")) out.options.gamma_tilde = positive(j["gamma_tilde"], "options.gamma_tilde");
  if (j.contains("path_budget")) out.options.path_budget = count(j["path_budget"], "options.path_budget");
}

}  // namespace

InstanceFile parse_instance(const json& doc) {
  require_object(doc, "", {"version", "network", "demands", "costs", "distribution", "market", "options"});
  InstanceFile out;
  if (!doc.contains("version")) fail("version", "missing");
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kFormatVersion)
    fail("version", "unsupported format version (expected " + std::to_string(kFormatVersion) + ")");
  NodeTable nodes;
  if (doc.contains("network")) read_network(doc["network"], out, nodes);
  if (doc.contains("demands")) read_demands(doc["demands"], out, nodes);
  if (doc.contains("costs")) read_costs(doc["costs"], out);
  if (doc.contains("distribution")) read_distribution(doc["distribution"], out);
  if (doc.contains("market")) read_market(doc["market"], out);
  if (doc.contains("options")) read_options(doc["options"], out);
  return out;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

InstanceFile load_instance(const std::string& path) { return parse_instance(load_json(path)); }

Network smoothed_network(const InstanceFile& inst, std::optional<double> mu) {
  if (!inst.network) throw InputError("network: section required by this command");
  if (!inst.network->has_hard_caps()) return *inst.network;
  if (!mu) throw InputError("network: hard_cap edges need a smoothing scale (--mu or options.mu)");
  return smooth_capacities(*inst.network, *mu);
}

TransportModel transport_of(const InstanceFile& inst, std::optional<double> mu, const SolveConfig& inner) {
  if (inst.costs) return TransportModel::fixed(*inst.costs);
  if (!inst.network) throw InputError("costs: a costs matrix or a network is required");
  if (inst.origins.empty()) throw InputError("network.origins: required for this command");
  if (inst.destinations.empty()) throw InputError("network.destinations: required for this command");
  return TransportModel::network(smoothed_network(inst, mu), inst.origins, inst.destinations, inner);
}

}  // namespace transeq::cli
