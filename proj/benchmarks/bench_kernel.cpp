#include <benchmark/benchmark.h>

#include <complex>
#include <vector>

#include "fixtures.hpp"
#include "gapq/kernel.hpp"

namespace {

using gapq::testing::two_profile_config;

void bm_transform_column(benchmark::State& state) {
  const gapq::ScenarioConfig cfg =
      two_profile_config(500.0, 250.0, 0.9, static_cast<int>(state.range(0)));
  const gapq::ServiceKernel kernel(cfg);
  std::vector<std::complex<double>> col(kernel.count());
  const std::complex<double> s(0.05, 0.02);
  for (auto _ : state) {
    kernel.eval_column(s, 1.3, col.data());
    benchmark::DoNotOptimize(col.data());
  }
  state.SetItemsProcessed(state.iterations() * kernel.count());
}
BENCHMARK(bm_transform_column)->Arg(25)->Arg(100)->Arg(400);

void bm_transform_matrix(benchmark::State& state) {
  const gapq::ScenarioConfig cfg =
      two_profile_config(500.0, 250.0, 0.9, static_cast<int>(state.range(0)));
  const gapq::ServiceKernel kernel(cfg);
  std::vector<std::complex<double>> m(static_cast<std::size_t>(kernel.count()) *
                                      kernel.count());
  const std::complex<double> s(0.05, 0.02);
  for (auto _ : state) {
    kernel.eval_matrix(s, kernel.residual_gaps(), m.data());
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(state.iterations() * kernel.count() * kernel.count());
}
BENCHMARK(bm_transform_matrix)->Arg(25)->Arg(100);

void bm_lag_averaged_column(benchmark::State& state) {
  const gapq::ScenarioConfig cfg = two_profile_config(500.0, 250.0, 0.9, 25);
  const gapq::ServiceKernel kernel(cfg);
  std::vector<std::complex<double>> col(kernel.count());
  const std::complex<double> s(0.05, 0.02);
  for (auto _ : state) {
    kernel.eval_lag_averaged_column(s, 2.7, cfg.batch_rate(), col.data());
    benchmark::DoNotOptimize(col.data());
  }
}
BENCHMARK(bm_lag_averaged_column);

void bm_partial_means(benchmark::State& state) {
  const gapq::ScenarioConfig cfg = two_profile_config(500.0, 250.0, 0.9, 100);
  const gapq::ServiceKernel kernel(cfg);
  std::vector<gapq::Dual<double>> col(kernel.count());
  for (auto _ : state) {
    kernel.eval_column(gapq::Dual<double>::variable(0.0), 1.3, col.data());
    benchmark::DoNotOptimize(col.data());
  }
}
BENCHMARK(bm_partial_means);

}  // namespace
