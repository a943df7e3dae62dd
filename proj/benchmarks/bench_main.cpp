#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mbgp/batching.hpp"
#include "mbgp/solver.hpp"

using namespace mbgp;

namespace {

Discretization elliptic(std::size_t n) {
  const auto p = ProblemSpec::elliptic();
  return Discretization(p, sample_collocation(p, n, n * 3 / 4, 1), KernelSpec::isotropic(0.2, 2));
}

void BM_EvalOpK(benchmark::State& state) {
  const KernelSpec k = KernelSpec::isotropic(0.2, 2);
  const Point x = make_point({0.1, 0.2}), y = make_point({0.3, 0.25});
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_op_k(k, DiffOp::laplacian(), x, DiffOp::laplacian(), y));
  }
}
BENCHMARK(BM_EvalOpK);

void BM_Gram(benchmark::State& state) {
  const Discretization d = elliptic(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gram(d.kernel, d.functionals));
  state.SetComplexityN(static_cast<long>(d.functionals.size()));
}
BENCHMARK(BM_Gram)->Arg(100)->Arg(400)->Arg(1200)->Unit(benchmark::kMillisecond);

void BM_Knn(benchmark::State& state) {
  const Discretization d = elliptic(static_cast<std::size_t>(state.range(0)));
  const std::vector<Point> pts = d.colloc.all_points();
  const SpatialIndex index(pts);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.knn(d.colloc.point(i), 12, i));
    i = (i + 1) % d.num_points();
  }
}
BENCHMARK(BM_Knn)->Arg(1200)->Arg(10000);

void BM_ProximalStep(benchmark::State& state) {
  const Discretization d = elliptic(1200);
  SolverConfig c;
  c.eta = 1e-13;
  c.gn_tol = 1e-5;
  c.gn_max_iters = 30;
  const SpatialIndex index = make_index(d, c);
  const LatentState st = initial_state(d, c);
  Rng rng(3);
  const auto m = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const Batch b = sample_batch(index, rng, m);
    const BatchSystem sys = assemble_batch(d, b.indices, c);
    benchmark::DoNotOptimize(proximal_step(d, st, sys, c));
  }
}
BENCHMARK(BM_ProximalStep)->Arg(12)->Arg(48)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
