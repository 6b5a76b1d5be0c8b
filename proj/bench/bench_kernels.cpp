#include <benchmark/benchmark.h>

#include <random>

#include "transeq/kernels.hpp"

using namespace transeq;

namespace {

struct GridCase {
  Network network;
  EdgeVector times;
  std::vector<OdPair> pairs;
  std::vector<double> demand;
};

GridCase make_grid(std::size_t side) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> w(0.5, 3.0);
  std::vector<Edge> edges;
  auto id = [side](std::size_t r, std::size_t c) { return r * side + c; };
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      if (c + 1 < side) {
        edges.push_back({id(r, c), id(r, c + 1), Affine{1, 0.1}});
        edges.push_back({id(r, c + 1), id(r, c), Affine{1, 0.1}});
      }
      if (r + 1 < side) {
        edges.push_back({id(r, c), id(r + 1, c), Affine{1, 0.1}});
        edges.push_back({id(r + 1, c), id(r, c), Affine{1, 0.1}});
      }
    }
  GridCase g{Network(side * side, edges), {}, {}, {}};
  g.times.resize(g.network.edge_count());
  for (double& t : g.times) t = w(rng);
  const std::size_t n = side * side;
  for (std::size_t o = 0; o < n; o += 3)
    for (std::size_t d = 1; d < n; d += 7)
      if (o != d) {
        g.pairs.push_back({o, d});
        g.demand.push_back(1.0);
      }
  return g;
}

void BM_AonSerial(benchmark::State& state) {
  const GridCase g = make_grid(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::all_or_nothing_serial(g.network, g.times, g.pairs, g.demand));
}

void BM_AonParallel(benchmark::State& state) {
  const GridCase g = make_grid(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::all_or_nothing_parallel(g.network, g.times, g.pairs, g.demand));
}

struct SinkCase {
  std::vector<double> cost, rows, cols;
  std::size_t n;
};

SinkCase make_sink(std::size_t n) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SinkCase s{std::vector<double>(n * n), std::vector<double>(n, 1.0), std::vector<double>(n, 1.0), n};
  for (double& c : s.cost) c = u(rng);
  return s;
}

void BM_SinkhornSerial(benchmark::State& state) {
  const SinkCase s = make_sink(static_cast<std::size_t>(state.range(0)));
  const kernels::SinkhornProblem p{s.cost, s.n, s.n, s.rows, s.cols, 0.1};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::sinkhorn_serial(p, 1e-8, 200));
}

void BM_SinkhornParallel(benchmark::State& state) {
  const SinkCase s = make_sink(static_cast<std::size_t>(state.range(0)));
  const kernels::SinkhornProblem p{s.cost, s.n, s.n, s.rows, s.cols, 0.1};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::sinkhorn_parallel(p, 1e-8, 200));
}

}  // namespace

BENCHMARK(BM_AonSerial)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AonParallel)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SinkhornSerial)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SinkhornParallel)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
