// Serial reference kernels against their OpenMP counterparts on a synthetic
// examiner design.

#include <random>

#include <benchmark/benchmark.h>

#include "leniency/design.hpp"
#include "leniency/kernels.hpp"
#include "leniency/simulation.hpp"

using namespace leniency;

namespace {

kernels::CompressedDesign design_of_size(int n) {
  SimConfig cfg;
  cfg.n = n;
  cfg.n_cells = std::max(2, n / 200);
  cfg.examiners_per_cell = 8;
  const Population pop = generate(cfg, 0);
  return kernels::compress(encode(pop.data).design);
}

template <bool Parallel>
void BM_factorize(benchmark::State& state) {
  const auto cd = design_of_size(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto blocks = kernels::partition(cd);
    if constexpr (Parallel)
      kernels::parallel::factorize(cd, blocks, kCollinearityTolerance);
    else
      kernels::serial::factorize(cd, blocks, kCollinearityTolerance);
    benchmark::DoNotOptimize(blocks.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_leverage(benchmark::State& state) {
  const auto cd = design_of_size(static_cast<int>(state.range(0)));
  auto blocks = kernels::partition(cd);
  kernels::serial::factorize(cd, blocks, kCollinearityTolerance);
  Eigen::VectorXd full, controls;
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::leverage(cd, blocks, full, controls);
    else
      kernels::serial::leverage(cd, blocks, full, controls);
    benchmark::DoNotOptimize(full.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_project(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto cd = design_of_size(n);
  auto blocks = kernels::partition(cd);
  kernels::serial::factorize(cd, blocks, kCollinearityTolerance);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = nd(rng);
  const Eigen::VectorXd sums = kernels::pattern_sums(cd, v);
  Eigen::VectorXd full, controls;
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::project(cd, blocks, sums, full, controls);
    else
      kernels::serial::project(cd, blocks, sums, full, controls);
    benchmark::DoNotOptimize(full.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_factorize<false>)->Name("factorize/serial")->Arg(4000)->Arg(32000);
BENCHMARK(BM_factorize<true>)->Name("factorize/parallel")->Arg(4000)->Arg(32000);
BENCHMARK(BM_leverage<false>)->Name("leverage/serial")->Arg(4000)->Arg(32000);
BENCHMARK(BM_leverage<true>)->Name("leverage/parallel")->Arg(4000)->Arg(32000);
BENCHMARK(BM_project<false>)->Name("project/serial")->Arg(4000)->Arg(32000);
BENCHMARK(BM_project<true>)->Name("project/parallel")->Arg(4000)->Arg(32000);

BENCHMARK_MAIN();
