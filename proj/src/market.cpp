#include "transeq/market.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "market_detail.hpp"
#include "transeq/errors.hpp"

namespace transeq {

namespace {

constexpr std::size_t kMaxEnumerated = 6;

bool all_nonnegative(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && std::isfinite(x); });
}

bool any_positive(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
}

// Smallest participation level with L in alpha U.
double participation(const Producer& p, const std::vector<double>& L, std::size_t* arg = nullptr) {
  double best = 0.0;
  for (std::size_t k = 0; k < L.size(); ++k) {
    if (p.u_max[k] <= 0.0) continue;
    const double r = L[k] / p.u_max[k];
    if (r > best) {
      best = r;
      if (arg) *arg = k;
    }
  }
  return best;
}

// Largest participation level with W in beta V, capped at 1.
double satisfaction(const Consumer& cn, std::size_t goods, const std::vector<double>& W, std::size_t* arg = nullptr) {
  double best = 1.0;
  bool below = false;
  for (std::size_t r = 0; r < cn.properties; ++r) {
    if (cn.sigma_min[r] <= 0.0) continue;
    double qw = 0.0;
    for (std::size_t k = 0; k < goods; ++k) qw += cn.Q[r * goods + k] * W[k];
    const double ratio = qw / cn.sigma_min[r];
    if (ratio < best) {
      best = ratio;
      below = true;
      if (arg) *arg = r;
    }
  }
  return below ? std::max(best, 0.0) : 1.0;
}

bool diagonal(const Consumer& cn, std::size_t goods) {
  if (cn.properties != goods) return false;
  for (std::size_t r = 0; r < goods; ++r)
    for (std::size_t k = 0; k < goods; ++k)
      if (r != k && cn.Q[r * goods + k] != 0.0) return false;
  return true;
}

// Vertices of V. Every cheapest bundle at nonnegative prices is one of them.
std::vector<std::vector<double>> bundle_vertices(const Consumer& cn, std::size_t goods) {
  if (diagonal(cn, goods)) {
    std::vector<double> W(goods, 0.0);
    for (std::size_t k = 0; k < goods; ++k)
      if (cn.sigma_min[k] > 0.0) W[k] = cn.sigma_min[k] / cn.Q[k * goods + k];
    return {W};
  }
  const std::size_t s = cn.properties, total = s + goods;
  if (goods > kMaxEnumerated || s > kMaxEnumerated)
    throw InputError("consumer: vertex enumeration supports at most 6 goods and 6 properties unless Q is diagonal");
  std::vector<std::vector<double>> out;
  Eigen::MatrixXd M(goods, goods);
  Eigen::VectorXd rhs(goods);
  for (std::size_t mask = 0; mask < (std::size_t{1} << total); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != goods) continue;
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < total; ++c) {
      if (!(mask >> c & 1)) continue;
      M.row(row).setZero();
      if (c < s) {
        for (std::size_t k = 0; k < goods; ++k) M(row, static_cast<Eigen::Index>(k)) = cn.Q[c * goods + k];
        rhs(row) = cn.sigma_min[c];
      } else {
        M(row, static_cast<Eigen::Index>(c - s)) = 1.0;
        rhs(row) = 0.0;
      }
      ++row;
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd x = lu.solve(rhs);
    std::vector<double> W(goods);
    bool ok = true;
    for (std::size_t k = 0; k < goods && ok; ++k) {
      ok = x(static_cast<Eigen::Index>(k)) >= -1e-12;
      W[k] = std::max(0.0, x(static_cast<Eigen::Index>(k)));
    }
    for (std::size_t r = 0; r < s && ok; ++r) {
      double qw = 0.0;
      for (std::size_t k = 0; k < goods; ++k) qw += cn.Q[r * goods + k] * W[k];
      ok = qw >= cn.sigma_min[r] - 1e-10 * (1.0 + cn.sigma_min[r]);
    }
    if (!ok) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const std::vector<double>& v) {
      for (std::size_t k = 0; k < goods; ++k)
        if (std::abs(v[k] - W[k]) > 1e-9 * (1.0 + std::abs(W[k]))) return false;
      return true;
    });
    if (!seen) out.push_back(std::move(W));
  }
  return out;
}

double vertex_scale(const std::vector<std::vector<double>>& verts) {
  double top = 0.0;
  for (const auto& v : verts)
    for (const double x : v) top = std::max(top, x);
  return top > 0.0 ? top : 1.0;
}

// Nonzero vertices of the box [0, u_max].
std::vector<std::vector<double>> box_vertices(const std::vector<double>& u) {
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (u[k] > 0.0) live.push_back(k);
  if (live.size() > 12) throw InputError("producer: a fixed cost supports at most 12 producible goods");
  std::vector<std::vector<double>> out;
  for (std::size_t mask = 1; mask < (std::size_t{1} << live.size()); ++mask) {
    std::vector<double> v(u.size(), 0.0);
    for (std::size_t b = 0; b < live.size(); ++b)
      if (mask >> b & 1) v[live[b]] = u[live[b]];
    out.push_back(std::move(v));
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Least-norm point of V by projected ascent on the dual, scaled into V.
std::vector<double> least_norm_bundle(const Consumer& cn, std::size_t goods) {
  const std::size_t s = cn.properties;
  double norm2 = 0.0;
  for (const double q : cn.Q) norm2 += q * q;
  std::vector<double> mu(s, 0.0), W(goods, 0.0);
  if (norm2 == 0.0) return W;
  const double step = 1.0 / norm2;
  for (int it = 0; it < 200000; ++it) {
    for (std::size_t k = 0; k < goods; ++k) {
      double v = 0.0;
      for (std::size_t r = 0; r < s; ++r) v += cn.Q[r * goods + k] * mu[r];
      W[k] = std::max(0.0, v);
    }
    double move = 0.0;
    for (std::size_t r = 0; r < s; ++r) {
      double qw = 0.0;
      for (std::size_t k = 0; k < goods; ++k) qw += cn.Q[r * goods + k] * W[k];
      const double next = std::max(0.0, mu[r] + step * (cn.sigma_min[r] - qw));
      move = std::max(move, std::abs(next - mu[r]));
      mu[r] = next;
    }
    if (move <= 1e-15 * (1.0 + *std::max_element(mu.begin(), mu.end()))) break;
  }
  const double beta = satisfaction(cn, goods, W);
  if (beta > 0.0 && beta < 1.0)
    for (double& w : W) w /= beta;
  return W;
}

using Layout = detail::MarketLayout;

// Production plan and participation of producer i at z.
std::vector<double> production(const Layout& lay, std::size_t i, const Point& z, double* alpha = nullptr) {
  std::vector<double> L(lay.goods, 0.0);
  double a = 0.0;
  if (lay.box_offset[i]) {
    for (std::size_t k = 0; k < lay.goods; ++k) L[k] = z[lay.bl][*lay.box_offset[i] + k];
  } else if (lay.weight_group[i]) {
    const auto& verts = lay.producer_vertices[i];
    for (std::size_t t = 0; t < verts.size(); ++t) {
      const double w = z[lay.bu][lay.producer_start[i] + t] / lay.producer_scale[i];
      a += w;
      for (std::size_t k = 0; k < lay.goods; ++k) L[k] += w * verts[t][k];
    }
  }
  if (alpha) *alpha = a;
  return L;
}

std::vector<double> consumption(const Layout& lay, std::size_t j, const Point& z, double* beta = nullptr) {
  std::vector<double> W(lay.goods, 0.0);
  double b = 0.0;
  const auto& verts = lay.consumer_vertices[j];
  for (std::size_t t = 0; t < verts.size(); ++t) {
    const double w = z[lay.bw][lay.consumer_start[j] + t] / lay.consumer_scale[j];
    b += w;
    for (std::size_t k = 0; k < lay.goods; ++k) W[k] += w * verts[t][k];
  }
  if (beta) *beta = b;
  return W;
}

// Prices at producer i's own sink, zeros without one.
std::vector<double> site_prices(const MarketInstance& inst, const Layout& lay, std::size_t i,
                                const std::vector<double>& prices) {
  std::vector<double> out(lay.goods, 0.0);
  if (const auto j = inst.producers[i].sink)
    for (std::size_t k = 0; k < lay.goods; ++k) out[k] = prices[lay.price_w + *j * lay.goods + k];
  return out;
}

std::vector<double> slice(const std::vector<double>& v, std::size_t from, std::size_t n) {
  return {v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(from + n)};
}

std::vector<double> product(const std::vector<double>& M, std::size_t rows, std::size_t cols,
                            const std::vector<double>& x) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < cols; ++k) out[r] += M[r * cols + k] * x[k];
  return out;
}

std::vector<double> margin_of(const Producer& p, std::size_t goods, std::size_t materials,
                              const std::vector<double>& lambda_l, const std::vector<double>& lambda_w,
                              const std::vector<double>& y) {
  std::vector<double> m(goods);
  for (std::size_t k = 0; k < goods; ++k) {
    double v = lambda_l[k] - p.c[k];
    for (std::size_t l = 0; l < goods; ++l) v -= p.A[l * goods + k] * lambda_w[l];
    for (std::size_t r = 0; r < materials; ++r) v -= p.R[r * goods + k] * y[r];
    m[k] = v;
  }
  return m;
}

bool has_inputs(const Producer& p) { return any_positive(p.A); }

}  // namespace

void MarketInstance::validate() const {
  const std::size_t m = goods, q = materials;
  if (m == 0) throw InputError("market: at least one good is required");
  if (b.size() != q) throw InputError("market: b must have one entry per material");
  if (!all_nonnegative(b)) throw InputError("market: material limits must be >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InputError("market: gamma must be > 0");
  if (transport.rows() != producers.size() || transport.cols() != consumers.size())
    throw InputError("market: transport must have one row per producer and one column per consumer");
  std::vector<bool> hosted(consumers.size(), false);
  for (std::size_t i = 0; i < producers.size(); ++i) {
    const Producer& p = producers[i];
    const std::string where = "producer " + std::to_string(i) + ": ";
    if (p.u_max.size() != m || p.c.size() != m || p.A.size() != m * m || p.R.size() != q * m)
      throw InputError(where + "u_max, c, A or R has the wrong size");
    if (!all_nonnegative(p.u_max) || !all_nonnegative(p.c) || !all_nonnegative(p.A) || !all_nonnegative(p.R))
      throw InputError(where + "u_max, c, A and R must be finite and >= 0");
    if (!(p.chi >= 0.0) || !std::isfinite(p.chi)) throw InputError(where + "chi must be >= 0");
    if (p.sink) {
      if (*p.sink >= consumers.size()) throw InputError(where + "sink out of range");
      if (hosted[*p.sink]) throw InputError(where + "another producer already shares its sink");
      hosted[*p.sink] = true;
    }
  }
  for (std::size_t j = 0; j < consumers.size(); ++j) {
    const Consumer& cn = consumers[j];
    const std::string where = "consumer " + std::to_string(j) + ": ";
    if (cn.Q.size() != cn.properties * m || cn.sigma_min.size() != cn.properties)
      throw InputError(where + "Q or sigma_min has the wrong size");
    if (!all_nonnegative(cn.Q) || !all_nonnegative(cn.sigma_min))
      throw InputError(where + "Q and sigma_min must be finite and >= 0");
    if (!(cn.income >= 0.0) || !std::isfinite(cn.income)) throw InputError(where + "income must be >= 0");
    for (std::size_t r = 0; r < cn.properties; ++r) {
      if (cn.sigma_min[r] <= 0.0) continue;
      bool reachable = false;
      for (std::size_t k = 0; k < m; ++k) reachable = reachable || cn.Q[r * m + k] > 0.0;
      if (!reachable) throw InputError(where + "property " + std::to_string(r) + " cannot be satisfied (V is empty)");
    }
    if (!diagonal(cn, m) && (m > kMaxEnumerated || cn.properties > kMaxEnumerated))
      throw InputError(where + "more than 6 goods or properties needs a diagonal Q");
  }
}

ProducerResponse producer_best_response(const Producer& p, const std::vector<double>& lambda_l,
                                        const std::vector<double>& lambda_w, const std::vector<double>& y) {
  const std::size_t m = p.u_max.size(), q = y.size();
  ProducerResponse out;
  out.margin = margin_of(p, m, q, lambda_l, lambda_w, y);
  double gross = 0.0;
  for (std::size_t k = 0; k < m; ++k) gross += p.u_max[k] * std::max(0.0, out.margin[k]);
  out.profit = std::max(0.0, gross - p.chi);
  out.L.assign(m, 0.0);
  if (out.profit > 0.0) {
    out.alpha = 1.0;
    for (std::size_t k = 0; k < m; ++k)
      if (out.margin[k] > 0.0) out.L[k] = p.u_max[k];
  }
  return out;
}

ConsumerResponse consumer_best_response(const Consumer& cn, const std::vector<double>& lambda_w) {
  const std::size_t m = lambda_w.size();
  ConsumerResponse out;
  const auto vertices = bundle_vertices(cn, m);
  out.cost = std::numeric_limits<double>::infinity();
  for (const auto& v : vertices) {
    const double cost = dot(lambda_w, v);
    if (out.bundle.empty() || cost < out.cost - 1e-12 * (1.0 + std::abs(out.cost))) {
      out.cost = cost;
      out.bundle = v;
    }
  }
  out.surplus = std::max(0.0, cn.income - out.cost);
  out.W.assign(m, 0.0);
  if (out.surplus > 0.0) {
    out.beta = 1.0;
    out.W = out.bundle;
  }
  return out;
}

ProductivityReport productivity_check(const MarketInstance& inst, double margin_eps) {
  inst.validate();
  const std::size_t m = inst.goods, q = inst.materials;
  ProductivityReport rep;
  rep.goods_slack.assign(m, 0.0);
  rep.material_slack = inst.b;
  for (const Producer& p : inst.producers) {
    rep.L.push_back(p.u_max);
    const auto inputs = product(p.A, m, m, p.u_max);
    const auto used = product(p.R, q, m, p.u_max);
    for (std::size_t k = 0; k < m; ++k) rep.goods_slack[k] += p.u_max[k] - inputs[k];
    for (std::size_t r = 0; r < q; ++r) rep.material_slack[r] -= used[r];
  }
  for (const Consumer& cn : inst.consumers) {
    rep.W.push_back(least_norm_bundle(cn, m));
    for (std::size_t k = 0; k < m; ++k) rep.goods_slack[k] -= rep.W.back()[k];
  }
  rep.ok = true;
  for (std::size_t k = 0; k < m && rep.ok; ++k)
    if (!(rep.goods_slack[k] >= margin_eps)) {
      rep.ok = false;
      rep.message = "good " + std::to_string(k) + ": output minus inputs and consumption is " +
                    std::to_string(rep.goods_slack[k]) + ", not strictly positive";
    }
  for (std::size_t r = 0; r < q && rep.ok; ++r)
    if (!(rep.material_slack[r] >= margin_eps)) {
      rep.ok = false;
      rep.message = "material " + std::to_string(r) + ": limit minus use is " + std::to_string(rep.material_slack[r]) +
                    ", not strictly positive";
    }
  return rep;
}

double WalrasReport::max() const {
  return std::max({source.violation, source.complementarity, producer_site.violation,
                   producer_site.complementarity, pure_sink.violation, pure_sink.complementarity,
                   material.violation, material.complementarity});
}

WalrasReport walras_residuals(const MarketInstance& inst, const MarketState& s) {
  const std::size_t rows = inst.producers.size(), cols = inst.consumers.size(), m = inst.goods,
                    q = inst.materials;
  if (s.d.size() != rows * cols * m || s.L.size() != rows || s.W.size() != cols || s.y.size() != q ||
      s.lambda_l.size() != rows || s.lambda_w.size() != cols)
    throw InputError("walras residuals: candidate has the wrong shape");
  std::vector<std::vector<double>> out(rows, std::vector<double>(m, 0.0)), in(cols, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const double v = s.d[(i * cols + j) * m + k];
        out[i][k] += v;
        in[j][k] += v;
      }
  WalrasReport rep;
  for (std::size_t i = 0; i < rows; ++i) {
    double inner = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double gap = out[i][k] - s.L[i][k];
      rep.source.violation = std::max(rep.source.violation, gap);
      inner += s.lambda_l[i][k] * gap;
    }
    rep.source.complementarity = std::max(rep.source.complementarity, std::abs(inner));
  }
  std::vector<std::optional<std::size_t>> host(cols);
  for (std::size_t i = 0; i < rows; ++i)
    if (inst.producers[i].sink) host[*inst.producers[i].sink] = i;
  for (std::size_t j = 0; j < cols; ++j) {
    std::vector<double> need = s.W[j];
    LawResidual* law = &rep.pure_sink;
    if (host[j]) {
      const Producer& p = inst.producers[*host[j]];
      const auto inputs = product(p.A, m, m, s.L[*host[j]]);
      for (std::size_t k = 0; k < m; ++k) need[k] += inputs[k];
      law = &rep.producer_site;
    }
    double inner = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double gap = need[k] - in[j][k];
      law->violation = std::max(law->violation, gap);
      inner += s.lambda_w[j][k] * gap;
    }
    law->complementarity = std::max(law->complementarity, std::abs(inner));
  }
  std::vector<double> used(q, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto u = product(inst.producers[i].R, q, m, s.L[i]);
    for (std::size_t r = 0; r < q; ++r) used[r] += u[r];
  }
  for (std::size_t r = 0; r < q; ++r) {
    rep.material.violation = std::max(rep.material.violation, used[r] - inst.b[r]);
    rep.material.complementarity = std::max(rep.material.complementarity, std::abs(s.y[r] * (inst.b[r] - used[r])));
  }
  return rep;
}

double default_price_cap(const MarketInstance& inst) {
  double top = 0.0;
  for (const Consumer& cn : inst.consumers) top = std::max(top, cn.income);
  double cost = 0.0, chi = 0.0;
  for (const Producer& p : inst.producers) {
    for (const double c : p.c) cost = std::max(cost, c);
    chi = std::max(chi, p.chi);
  }
  double travel = 0.0;
  for (const double t : inst.transport.base_cost())
    if (t < kInfinity) travel = std::max(travel, t);
  return 10.0 * (1.0 + top + cost + chi + travel);
}


namespace detail {

double time_cap(const CostFunction& cost) {
  return std::min(max_dual_time(cost), 1e6 * std::max(free_flow_time(cost), 1.0));
}

MarketLayout market_layout(const MarketInstance& inst, std::size_t path_budget) {
  MarketLayout lay;
  lay.rows = inst.producers.size();
  lay.cols = inst.consumers.size();
  lay.goods = inst.goods;
  lay.materials = inst.materials;
  lay.lifted = path_budget > 0;
  const std::size_t m = lay.goods;
  const Network* net = inst.transport.network_ptr();
  if (lay.lifted && !net) throw InputError("full model: the transport must be a network");
  for (std::size_t i = 0; i < lay.rows; ++i) {
    if (!any_positive(inst.producers[i].u_max)) continue;
    for (std::size_t j = 0; j < lay.cols; ++j) {
      if (!inst.transport.admissible(i, j)) continue;
      lay.pairs.push_back(i * lay.cols + j);
      std::size_t count = 1;
      if (lay.lifted) {
        const NodeId o = inst.transport.origins()[i], d = inst.transport.destinations()[j];
        lay.routes.push_back(o == d ? std::vector<Path>{Path{}} : enumerate_simple_paths(*net, o, d, path_budget));
        count = lay.routes.back().size();
      }
      lay.d_offset.push_back(lay.d_dim);
      lay.route_count.push_back(count);
      lay.d_dim += m * count;
    }
  }
  if (lay.lifted)
    for (const Edge& e : net->edges()) {
      lay.t_lower.push_back(free_flow_time(e.cost));
      lay.t_upper.push_back(time_cap(e.cost));
    }
  lay.box_offset.assign(lay.rows, std::nullopt);
  lay.weight_group.assign(lay.rows, std::nullopt);
  lay.producer_vertices.resize(lay.rows);
  lay.producer_start.assign(lay.rows, 0);
  lay.producer_scale.assign(lay.rows, 1.0);
  std::size_t groups = 0;
  for (std::size_t i = 0; i < lay.rows; ++i) {
    const Producer& p = inst.producers[i];
    if (p.chi > 0.0 && any_positive(p.u_max)) {
      lay.producer_vertices[i] = box_vertices(p.u_max);
      lay.weight_group[i] = groups++;
      lay.producer_start[i] = lay.producer_weights;
      lay.producer_weights += lay.producer_vertices[i].size();
      lay.producer_scale[i] = vertex_scale(lay.producer_vertices[i]);
    } else if (p.chi == 0.0) {
      lay.box_offset[i] = lay.box_dim;
      lay.box_dim += m;
    }
  }
  for (const Consumer& cn : inst.consumers) {
    lay.consumer_vertices.push_back(bundle_vertices(cn, m));
    lay.consumer_start.push_back(lay.consumer_weights);
    lay.consumer_weights += lay.consumer_vertices.back().size();
    lay.consumer_scale.push_back(vertex_scale(lay.consumer_vertices.back()));
  }
  lay.price_l = 0;
  lay.price_w = lay.rows * m;
  lay.price_y = lay.price_w + lay.cols * m;
  lay.price_dim = lay.price_y + lay.materials;
  std::size_t next = 0;
  if (lay.d_dim > 0) lay.bd = next++;
  if (lay.box_dim > 0) lay.bl = next++;
  if (lay.producer_weights > 0) lay.bu = next++;
  if (lay.consumer_weights > 0) lay.bw = next++;
  lay.bp = next++;
  if (lay.lifted && !lay.t_lower.empty()) lay.bt = next++;
  return lay;
}

std::vector<double> pair_masses(const MarketLayout& lay, const Point& z) {
  std::vector<double> s(lay.rows * lay.cols, 0.0);
  if (lay.bd == MarketLayout::npos) return s;
  for (std::size_t p = 0; p < lay.pairs.size(); ++p)
    for (std::size_t c = 0; c < lay.goods * lay.route_count[p]; ++c) s[lay.pairs[p]] += z[lay.bd][lay.d_offset[p] + c];
  return s;
}

namespace {

// Per pair and route, the travel cost seen by the d block at z.
std::vector<std::vector<double>> route_costs(const MarketInstance& inst, const MarketLayout& lay, const Point& z) {
  std::vector<std::vector<double>> out(lay.pairs.size());
  if (lay.lifted) {
    for (std::size_t p = 0; p < lay.pairs.size(); ++p)
      for (const Path& route : lay.routes[p])
        out[p].push_back(lay.bt == MarketLayout::npos ? 0.0 : path_cost(z[lay.bt], route));
    return out;
  }
  const auto ev = inst.transport.evaluate(pair_masses(lay, z));
  for (std::size_t p = 0; p < lay.pairs.size(); ++p) out[p] = {ev.cost[lay.pairs[p]]};
  return out;
}

EdgeVector edge_flows(const Network& net, const MarketLayout& lay, const Point& z) {
  EdgeVector f(net.edge_count(), 0.0);
  for (std::size_t p = 0; p < lay.pairs.size(); ++p) {
    const std::size_t rc = lay.route_count[p];
    for (std::size_t k = 0; k < lay.goods; ++k)
      for (std::size_t r = 0; r < rc; ++r) accumulate_path(f, lay.routes[p][r], z[lay.bd][lay.d_offset[p] + k * rc + r]);
  }
  return f;
}

}  // namespace

SaddleProblem assemble(const MarketInstance& inst, const MarketLayout& lay, double price_cap) {
  if (!(price_cap > 0.0) || !std::isfinite(price_cap)) throw InputError("market: price cap must be finite and > 0");
  const std::size_t m = lay.goods;
  SaddleProblem prob;
  if (lay.bd != MarketLayout::npos) {
    Block d;
    d.name = "d";
    d.set = SetKind::CappedOrthant;
    d.geometry = Geometry::Entropy;
    d.dim = lay.d_dim;
    d.entropy_weight = inst.gamma;
    d.entropy_scale = 1.0;
    d.linear = lay.lifted || inst.transport.is_fixed();
    std::vector<double> d0(lay.d_dim);
    for (std::size_t p = 0; p < lay.pairs.size(); ++p) {
      const Producer& pr = inst.producers[lay.pairs[p] / lay.cols];
      double cap = 0.0, top = 0.0;
      for (const double u : pr.u_max) {
        cap += u;
        top = std::max(top, u);
      }
      d.group_cap.push_back(cap);
      const std::size_t rc = lay.route_count[p];
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t r = 0; r < rc; ++r) {
          d.group_of.push_back(p);
          d0[lay.d_offset[p] + k * rc + r] =
              0.5 * (pr.u_max[k] + 1e-3 * top) / (static_cast<double>(lay.cols * rc) * (1.0 + 1e-3 * m));
        }
    }
    prob.blocks.push_back(d);
    prob.initial.push_back(d0);
  }
  if (lay.bl != MarketLayout::npos) {
    Block L;
    L.name = "L";
    L.dim = lay.box_dim;
    for (std::size_t i = 0; i < lay.rows; ++i)
      if (lay.box_offset[i]) {
        L.lower.insert(L.lower.end(), m, 0.0);
        L.upper.insert(L.upper.end(), inst.producers[i].u_max.begin(), inst.producers[i].u_max.end());
      }
    std::vector<double> L0(L.dim);
    for (std::size_t k = 0; k < L.dim; ++k) L0[k] = 0.5 * L.upper[k];
    prob.blocks.push_back(L);
    prob.initial.push_back(L0);
  }
  auto weights = [](const char* name, const std::vector<std::vector<std::vector<double>>>& verts,
                    const std::vector<double>& scale, std::size_t dim) {
    Block w;
    w.name = name;
    w.set = SetKind::CappedOrthant;
    w.dim = dim;
    std::vector<double> w0;
    std::size_t group = 0;
    for (std::size_t a = 0; a < verts.size(); ++a) {
      const auto& vs = verts[a];
      if (vs.empty()) continue;
      for (std::size_t t = 0; t < vs.size(); ++t) {
        w.group_of.push_back(group);
        w0.push_back(0.5 * scale[a] / static_cast<double>(vs.size()));
      }
      w.group_cap.push_back(scale[a]);
      ++group;
    }
    return std::make_pair(w, w0);
  };
  if (lay.bu != MarketLayout::npos) {
    auto [w, w0] = weights("producer weights", lay.producer_vertices, lay.producer_scale, lay.producer_weights);
    prob.blocks.push_back(w);
    prob.initial.push_back(w0);
  }
  if (lay.bw != MarketLayout::npos) {
    auto [w, w0] = weights("consumer weights", lay.consumer_vertices, lay.consumer_scale, lay.consumer_weights);
    prob.blocks.push_back(w);
    prob.initial.push_back(w0);
  }
  Block prices;
  prices.name = "prices";
  prices.side = Side::Max;
  prices.dim = lay.price_dim;
  prices.lower.assign(lay.price_dim, 0.0);
  prices.upper.assign(lay.price_dim, price_cap);
  prob.blocks.push_back(prices);
  prob.initial.push_back(std::vector<double>(lay.price_dim, 0.0));
  if (lay.bt != MarketLayout::npos) {
    Block t;
    t.name = "t";
    t.side = Side::Max;
    t.dim = lay.t_lower.size();
    t.lower = lay.t_lower;
    t.upper = lay.t_upper;
    t.linear = false;
    prob.blocks.push_back(t);
    prob.initial.push_back(lay.t_lower);
  }

  prob.gradient = [inst, lay](const Point& z, Point& g) {
    const std::size_t m = lay.goods, q = lay.materials, cols = lay.cols;
    const std::vector<double>& pr = z[lay.bp];
    std::vector<double>& gp = g[lay.bp];
    const std::vector<double> y = slice(pr, lay.price_y, q);
    if (lay.bd != MarketLayout::npos) {
      const auto cost = route_costs(inst, lay, z);
      for (std::size_t p = 0; p < lay.pairs.size(); ++p) {
        const std::size_t i = lay.pairs[p] / cols, j = lay.pairs[p] % cols, rc = lay.route_count[p];
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t r = 0; r < rc; ++r) {
            const std::size_t idx = lay.d_offset[p] + k * rc + r;
            g[lay.bd][idx] = pr[lay.price_l + i * m + k] - pr[lay.price_w + j * m + k] + cost[p][r];
            gp[lay.price_l + i * m + k] += z[lay.bd][idx];
            gp[lay.price_w + j * m + k] -= z[lay.bd][idx];
          }
      }
    }
    if (lay.bt != MarketLayout::npos) {
      const Network& net = *inst.transport.network_ptr();
      const EdgeVector f = lay.bd == MarketLayout::npos ? EdgeVector(net.edge_count(), 0.0) : edge_flows(net, lay, z);
      for (std::size_t e = 0; e < f.size(); ++e) g[lay.bt][e] = f[e] - edge_flow_at_time(net.edge(e).cost, z[lay.bt][e]);
    }
    for (std::size_t r = 0; r < q; ++r) gp[lay.price_y + r] -= inst.b[r];
    for (std::size_t i = 0; i < lay.rows; ++i) {
      const Producer& p = inst.producers[i];
      const auto margin = margin_of(p, m, q, slice(pr, lay.price_l + i * m, m), site_prices(inst, lay, i, pr), y);
      if (lay.box_offset[i])
        for (std::size_t k = 0; k < m; ++k) g[lay.bl][*lay.box_offset[i] + k] = -margin[k];
      if (lay.weight_group[i]) {
        const auto& verts = lay.producer_vertices[i];
        for (std::size_t t = 0; t < verts.size(); ++t)
          g[lay.bu][lay.producer_start[i] + t] = (p.chi - dot(margin, verts[t])) / lay.producer_scale[i];
      }
      const std::vector<double> Li = production(lay, i, z);
      for (std::size_t k = 0; k < m; ++k) gp[lay.price_l + i * m + k] -= Li[k];
      if (p.sink) {
        const auto inputs = product(p.A, m, m, Li);
        for (std::size_t k = 0; k < m; ++k) gp[lay.price_w + *p.sink * m + k] += inputs[k];
      }
      const auto used = product(p.R, q, m, Li);
      for (std::size_t r = 0; r < q; ++r) gp[lay.price_y + r] += used[r];
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const Consumer& cn = inst.consumers[j];
      const std::vector<double> lw = slice(pr, lay.price_w + j * m, m);
      const auto& verts = lay.consumer_vertices[j];
      for (std::size_t t = 0; t < verts.size(); ++t)
        g[lay.bw][lay.consumer_start[j] + t] = (dot(lw, verts[t]) - cn.income) / lay.consumer_scale[j];
      const std::vector<double> Wj = consumption(lay, j, z);
      for (std::size_t k = 0; k < m; ++k) gp[lay.price_w + j * m + k] += Wj[k];
    }
  };

  prob.value = [inst, lay](const Point& z) {
    const std::size_t m = lay.goods, q = lay.materials, cols = lay.cols;
    const std::vector<double>& pr = z[lay.bp];
    double v = 0.0;
    if (lay.bd != MarketLayout::npos) {
      const auto cost = route_costs(inst, lay, z);
      if (!lay.lifted) v += inst.transport.evaluate(pair_masses(lay, z)).potential;
      for (std::size_t p = 0; p < lay.pairs.size(); ++p) {
        const std::size_t i = lay.pairs[p] / cols, j = lay.pairs[p] % cols, rc = lay.route_count[p];
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t r = 0; r < rc; ++r) {
            const double price = pr[lay.price_l + i * m + k] - pr[lay.price_w + j * m + k];
            v += (price + (lay.lifted ? cost[p][r] : 0.0)) * z[lay.bd][lay.d_offset[p] + k * rc + r];
          }
      }
    }
    if (lay.bt != MarketLayout::npos) {
      const Network& net = *inst.transport.network_ptr();
      for (std::size_t e = 0; e < net.edge_count(); ++e) v -= edge_sigma_conjugate(net.edge(e).cost, z[lay.bt][e]);
    }
    const std::vector<double> y = slice(pr, lay.price_y, q);
    for (std::size_t r = 0; r < q; ++r) v -= y[r] * inst.b[r];
    for (std::size_t i = 0; i < lay.rows; ++i) {
      const Producer& p = inst.producers[i];
      double alpha = 0.0;
      const std::vector<double> Li = production(lay, i, z, &alpha);
      const auto margin = margin_of(p, m, q, slice(pr, lay.price_l + i * m, m), site_prices(inst, lay, i, pr), y);
      v += p.chi * alpha - dot(margin, Li);
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double beta = 0.0;
      const std::vector<double> Wj = consumption(lay, j, z, &beta);
      v += dot(slice(pr, lay.price_w + j * m, m), Wj) - inst.consumers[j].income * beta;
    }
    return v;
  };

  // Each edge time solves a concave one-dimensional problem whose maximiser
  // is tau(f) clipped to the box.
  if (lay.bt != MarketLayout::npos)
    prob.block_gap = [inst, lay](std::size_t b, const Point& z, const Point&) -> std::optional<double> {
      if (b != lay.bt) return std::nullopt;
      const Network& net = *inst.transport.network_ptr();
      const EdgeVector f = lay.bd == MarketLayout::npos ? EdgeVector(net.edge_count(), 0.0) : edge_flows(net, lay, z);
      double gap = 0.0;
      for (std::size_t e = 0; e < f.size(); ++e) {
        const CostFunction& c = net.edge(e).cost;
        const double best_t = std::clamp(edge_tau(c, f[e]), lay.t_lower[e], lay.t_upper[e]);
        const double t = z[lay.bt][e];
        gap += (best_t * f[e] - edge_sigma_conjugate(c, best_t)) - (t * f[e] - edge_sigma_conjugate(c, t));
      }
      return gap;
    };
  return prob;
}

MarketEquilibrium read_equilibrium(const MarketInstance& inst, const MarketLayout& lay, const SaddleResult& r,
                                   double price_cap) {
  const std::size_t m = lay.goods, q = lay.materials;
  const Point& z = r.best;
  const std::vector<double>& pr = z[lay.bp];
  MarketEquilibrium out;
  out.price_cap = price_cap;
  MarketState& s = out.state;
  s.d.assign(lay.rows * lay.cols * m, 0.0);
  if (lay.bd != MarketLayout::npos)
    for (std::size_t p = 0; p < lay.pairs.size(); ++p) {
      const std::size_t rc = lay.route_count[p];
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t r2 = 0; r2 < rc; ++r2) s.d[lay.pairs[p] * m + k] += z[lay.bd][lay.d_offset[p] + k * rc + r2];
    }
  s.y = slice(pr, lay.price_y, q);
  for (std::size_t i = 0; i < lay.rows; ++i) {
    const Producer& p = inst.producers[i];
    double alpha = 0.0;
    s.L.push_back(production(lay, i, z, &alpha));
    s.lambda_l.push_back(slice(pr, lay.price_l + i * m, m));
    out.alpha.push_back(lay.weight_group[i] ? alpha : participation(p, s.L.back()));
    out.profit.push_back(producer_best_response(p, s.lambda_l.back(), site_prices(inst, lay, i, pr), s.y).profit);
  }
  for (std::size_t j = 0; j < lay.cols; ++j) {
    double beta = 0.0;
    s.W.push_back(consumption(lay, j, z, &beta));
    s.lambda_w.push_back(slice(pr, lay.price_w + j * m, m));
    out.beta.push_back(beta);
    out.surplus.push_back(consumer_best_response(inst.consumers[j], s.lambda_w.back()).surplus);
  }
  out.walras = walras_residuals(inst, s);
  out.saddle_gap = r.gap;
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.trace = r.trace;
  for (const double v : pr)
    if (v >= 0.999 * price_cap) out.price_cap_active = true;
  for (const Producer& p : inst.producers) out.unrouted_inputs = out.unrouted_inputs || (has_inputs(p) && !p.sink);
  return out;
}

}  // namespace detail

SaddleProblem assemble_market(const MarketInstance& inst, double price_cap) {
  inst.validate();
  return detail::assemble(inst, detail::market_layout(inst, 0), price_cap);
}

MarketEquilibrium solve_market(const MarketInstance& inst, const MarketConfig& cfg) {
  inst.validate();
  const ProductivityReport prod = productivity_check(inst);
  if (!prod.ok && !cfg.allow_unproductive) throw InputError("market: productivity check failed: " + prod.message);
  const detail::MarketLayout lay = detail::market_layout(inst, 0);
  const double cap = cfg.price_cap.value_or(default_price_cap(inst));
  const SaddleProblem problem = detail::assemble(inst, lay, cap);
  SaddleConfig sc;
  sc.tol = cfg.tol;
  sc.max_iter = cfg.max_iter;
  sc.step = cfg.step;
  sc.record_trace = cfg.record_trace;
  MarketEquilibrium out = detail::read_equilibrium(inst, lay, mirror_prox(problem, sc), cap);
  out.productive = prod.ok;
  return out;
}

}  // namespace transeq
