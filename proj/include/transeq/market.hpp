#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "transeq/distribution.hpp"
#include "transeq/saddle.hpp"

namespace transeq {

// A producer at one source row of the transport model.
//
// Goods are indexed 0..m-1 and materials 0..q-1. A is m x m and R is q x m,
// both row-major: producing L uses A L of the goods and R L of the materials.
// U is the box [0, u_max].
struct Producer {
  std::vector<double> u_max;
  double chi = 0.0;
  std::vector<double> A;
  std::vector<double> c;
  std::vector<double> R;
  // Sink column co-located with the producer. Intermediate inputs A L are
  // bought there at that sink's prices.
  std::optional<std::size_t> sink;
};

// A consumer at one sink column. Q is s x m row-major; V = {W >= 0 : Q W >= sigma_min}.
struct Consumer {
  std::size_t properties = 0;
  std::vector<double> Q;
  std::vector<double> sigma_min;
  double income = 0.0;
};

struct MarketInstance {
  std::size_t goods = 0;
  std::size_t materials = 0;
  std::vector<Producer> producers;  // one per transport row
  std::vector<Consumer> consumers;  // one per transport column
  std::vector<double> b;            // material limits
  TransportModel transport = TransportModel::fixed({});
  double gamma = 1e-3;

  // Throws InputError on inconsistent sizes, negative data or an empty V.
  void validate() const;
};

struct ProducerResponse {
  double profit = 0.0;
  std::vector<double> L;
  double alpha = 0.0;
  std::vector<double> margin;  // lambda_L - c - A^T lambda_W - R^T y
};

// lambda_w holds the prices at the producer's own sink (zeros without one).
ProducerResponse producer_best_response(const Producer& p, const std::vector<double>& lambda_l,
                                        const std::vector<double>& lambda_w, const std::vector<double>& y);

struct ConsumerResponse {
  double surplus = 0.0;
  std::vector<double> W;
  double beta = 0.0;
  double cost = 0.0;            // min over V of <lambda_W, W>
  std::vector<double> bundle;   // its minimiser, the full-participation bundle
};

// The cheapest bundle comes from vertex enumeration (goods and properties at
// most 6) or directly when Q is square diagonal.
ConsumerResponse consumer_best_response(const Consumer& cn, const std::vector<double>& lambda_w);

struct ProductivityReport {
  bool ok = false;
  std::vector<std::vector<double>> L;  // witness L_bar per producer
  std::vector<std::vector<double>> W;  // witness W_bar per consumer
  std::vector<double> goods_slack;     // sum L - sum A L - sum W
  std::vector<double> material_slack;  // b - sum R L
  std::string message;
};

// Tests the candidate L_bar = u_max, W_bar = least-norm point of V. A failure
// does not prove the economy unproductive.
ProductivityReport productivity_check(const MarketInstance& inst, double margin_eps = 1e-9);

// Row-major (source, sink, good) masses: index (i * cols + j) * goods + k.
struct MarketState {
  std::vector<double> d;
  std::vector<std::vector<double>> L;
  std::vector<std::vector<double>> W;
  std::vector<double> y;
  std::vector<std::vector<double>> lambda_l;
  std::vector<std::vector<double>> lambda_w;
};

struct LawResidual {
  double violation = 0.0;
  double complementarity = 0.0;
};

// Source balance, producer-site balance, pure-sink balance, material balance.
// Each entry is the largest magnitude over agents (over materials for the last).
struct WalrasReport {
  LawResidual source;
  LawResidual producer_site;
  LawResidual pure_sink;
  LawResidual material;

  double max() const;
};

WalrasReport walras_residuals(const MarketInstance& inst, const MarketState& s);

struct MarketConfig {
  double tol = 1e-6;
  std::size_t max_iter = 200000;
  double step = 1.0;
  bool record_trace = false;
  bool allow_unproductive = false;
  std::optional<double> price_cap;
};

struct MarketEquilibrium {
  MarketState state;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> profit;   // at the reported prices
  std::vector<double> surplus;  // at the reported prices
  WalrasReport walras;
  double saddle_gap = 0.0;
  double price_cap = 0.0;
  bool price_cap_active = false;
  bool productive = true;
  bool unrouted_inputs = false;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<TraceRecord> trace;
};

// Default price cap: 10 (1 + max income + max c + max chi + max free-flow cost).
double default_price_cap(const MarketInstance& inst);

// Blocks: d (pairs x goods, entropy on the pair sums), L, W, then all prices.
SaddleProblem assemble_market(const MarketInstance& inst, double price_cap);

MarketEquilibrium solve_market(const MarketInstance& inst, const MarketConfig& cfg = {});

}  // namespace transeq
