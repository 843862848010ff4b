#include <benchmark/benchmark.h>

#include <random>

#include "arc/kernels.hpp"
#include "arc/objectives.hpp"
#include "test_support.hpp"

namespace {

using MatmulFn = void (*)(const arc::Matrix&, const arc::Matrix&, arc::Matrix&, bool);

arc::Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  arc::Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng);
  return m;
}

// Square-ish product shaped like an attention score: (n x d) * (n x d)^T.
template <MatmulFn F>
void BM_matmul_nt(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const arc::Matrix a = random_matrix(n, 128, 1), b = random_matrix(n, 128, 2);
  arc::Matrix c;
  for (auto _ : state) {
    F(a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * 128);
}

template <MatmulFn F>
void BM_matmul_nn(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const arc::Matrix a = random_matrix(n, 128, 1), b = random_matrix(128, 128, 2);
  arc::Matrix c;
  for (auto _ : state) {
    F(a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * 128 * 128);
}

template <MatmulFn F>
void BM_matmul_tn(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const arc::Matrix a = random_matrix(n, 128, 1), b = random_matrix(n, 128, 2);
  arc::Matrix c;
  for (auto _ : state) {
    F(a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * 128 * 128);
}

BENCHMARK(BM_matmul_nt<arc::kernels::matmul_nt>)->Name("matmul_nt/parallel")->Arg(51)->Arg(101)->Arg(201);
BENCHMARK(BM_matmul_nt<arc::kernels::reference::matmul_nt>)->Name("matmul_nt/reference")->Arg(51)->Arg(101)->Arg(201);
BENCHMARK(BM_matmul_nn<arc::kernels::matmul_nn>)->Name("matmul_nn/parallel")->Arg(51)->Arg(101)->Arg(201);
BENCHMARK(BM_matmul_nn<arc::kernels::reference::matmul_nn>)->Name("matmul_nn/reference")->Arg(51)->Arg(101)->Arg(201);
BENCHMARK(BM_matmul_tn<arc::kernels::matmul_tn>)->Name("matmul_tn/parallel")->Arg(51)->Arg(101)->Arg(201);
BENCHMARK(BM_matmul_tn<arc::kernels::reference::matmul_tn>)->Name("matmul_tn/reference")->Arg(51)->Arg(101)->Arg(201);

// One training step's loss and gradient on a mixed batch.
void BM_total_loss(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  const arc::PolicyModel model(arc::test::small_config(), 1);
  const auto variants = arc::resolve_variant_set("all16");
  std::vector<arc::Instance> batch;
  for (int i = 0; i < 16; ++i) batch.push_back(arc::test::make_instance(variants[i], 20, i));
  arc::LossConfig cfg;
  cfg.parallel = parallel;
  for (auto _ : state) {
    const auto r = arc::total_loss(model, batch, cfg, 3);
    benchmark::DoNotOptimize(r.breakdown.total);
  }
  state.SetLabel(parallel ? "parallel" : "serial");
}
BENCHMARK(BM_total_loss)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
