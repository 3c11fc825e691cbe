#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "gapq/saturation.hpp"

namespace {

using gapq::testing::two_profile_config;

void bm_saturated_chain(benchmark::State& state) {
  const gapq::ScenarioConfig cfg =
      two_profile_config(500.0, 0.0, 0.9, static_cast<int>(state.range(0)));
  const gapq::ServiceKernel kernel(cfg);
  for (auto _ : state) {
    const gapq::SaturatedChain chain = gapq::build_saturated_chain(kernel);
    benchmark::DoNotOptimize(chain.stationary.data());
  }
}
BENCHMARK(bm_saturated_chain)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void bm_capacity_point(benchmark::State& state) {
  gapq::ScenarioConfig cfg =
      two_profile_config(static_cast<double>(state.range(0)), 0.0, 0.9, 32);
  cfg = gapq::with_attempts(cfg, gapq::attempts_for_defect(cfg));
  for (auto _ : state) {
    const gapq::CapacityResult res = gapq::capacity(cfg);
    benchmark::DoNotOptimize(res.capacity_veh_per_hour);
  }
}
BENCHMARK(bm_capacity_point)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
