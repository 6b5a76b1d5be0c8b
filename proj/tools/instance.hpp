#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "transeq/distribution.hpp"
#include "transeq/market.hpp"
#include "transeq/network.hpp"

namespace transeq::cli {

inline constexpr int kFormatVersion = 1;

struct DistributionSection {
  std::vector<QuadraticSite> sources, sinks;
  std::optional<double> total_cap;
  std::optional<double> gamma;
  std::vector<double> row_margins, col_margins;
};

// Market data without the transport, which comes from the network (or the
// fixed costs) of the same file.
struct MarketSection {
  MarketInstance data;
  bool has_gamma = false;
};

struct Options {
  std::optional<double> mu;
  std::optional<double> gamma_tilde;
  std::optional<std::size_t> path_budget;
};

struct InstanceFile {
  int version = kFormatVersion;
  std::optional<Network> network;
  std::vector<NodeId> origins, destinations;
  std::optional<DemandMatrix> demands;
  std::optional<FixedCosts> costs;
  std::optional<DistributionSection> distribution;
  std::optional<MarketSection> market;
  Options options;
};

// Strict reader: unknown keys, wrong types and out-of-domain values raise
// InputError naming the JSON path, e.g. "network.edges[2].cost.b".
InstanceFile parse_instance(const nlohmann::json& doc);

// Parse errors carry the line and column reported by the JSON reader.
InstanceFile load_instance(const std::string& path);
nlohmann::json load_json(const std::string& path);

// Network with HardCap edges replaced when mu is given; InputError when caps
// remain and no mu is available.
Network smoothed_network(const InstanceFile& inst, std::optional<double> mu);

// Fixed costs if present, otherwise the (smoothed) network between origins
// and destinations.
TransportModel transport_of(const InstanceFile& inst, std::optional<double> mu, const SolveConfig& inner);

}  // namespace transeq::cli
