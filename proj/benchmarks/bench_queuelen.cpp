#include <benchmark/benchmark.h>

#include <complex>

#include "fixtures.hpp"
#include "gapq/queuelen.hpp"
#include "gapq/saturation.hpp"

namespace {

using gapq::testing::two_profile_config;

gapq::ScenarioConfig mid_load(int attempts) {
  gapq::ScenarioConfig cfg = two_profile_config(200.0, 0.0, 0.5, attempts);
  const gapq::CapacityResult cap = gapq::capacity(cfg);
  cfg.minor_batch_rate_per_hour = 0.5 * cap.capacity_veh_per_hour;
  return cfg;
}

void bm_arrivals_matrix(benchmark::State& state) {
  const gapq::ScenarioConfig cfg = mid_load(static_cast<int>(state.range(0)));
  gapq::StationaryQueueSolver solver(cfg);
  const std::complex<double> z(0.4, 0.35);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver.arrivals_matrix(z).data());
  }
}
BENCHMARK(bm_arrivals_matrix)->Arg(14)->Arg(25)->Unit(benchmark::kMicrosecond);

void bm_boundary_solve(benchmark::State& state) {
  const gapq::ScenarioConfig cfg = mid_load(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    gapq::StationaryQueueSolver solver(cfg);
    benchmark::DoNotOptimize(solver.empty_probs().data());
  }
}
BENCHMARK(bm_boundary_solve)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
