#pragma once

#include <random>
#include <vector>

#include "gapq/scenario.hpp"

namespace gapq::testing {

/// Two-profile reference scenario: 90% standard traffic (merge 4 s, first
/// gaps 5/6 s at 40%/60%) and 10% slow traffic (merge 5 s).
inline ScenarioConfig two_profile_config(double q_veh_h, double minor_veh_h,
                                         double alpha, int attempts,
                                         std::vector<double> slow_gaps = {8.0, 9.0},
                                         BatchSizeLaw law = BatchSizeLaw::deterministic(1)) {
  ScenarioConfig cfg;
  cfg.major_flow_veh_per_hour = q_veh_h;
  cfg.minor_batch_rate_per_hour = minor_veh_h / law.mean();
  cfg.batch_size = law;
  cfg.attempts = attempts;
  cfg.gaps_per_attempt = 2;

  DriverProfile standard;
  standard.probability = 0.9;
  standard.merge_time_s = 4.0;
  standard.generator = GapGenerator{{5.0, 6.0}, {0.4, 0.6}, alpha};
  standard.table = generate_impatience_table({5.0, 6.0}, {0.4, 0.6}, alpha, 4.0, attempts);

  DriverProfile slow;
  slow.probability = 0.1;
  slow.merge_time_s = 5.0;
  slow.generator = GapGenerator{slow_gaps, {0.5, 0.5}, alpha};
  slow.table = generate_impatience_table(slow_gaps, {0.5, 0.5}, alpha, 5.0, attempts);

  cfg.profiles = {standard, slow};
  return cfg;
}

/// Variant with the slow profile's first-attempt gaps enlarged to 10/12 s so
/// the limited-reuse condition fails.
inline ScenarioConfig two_profile_wide_config(double q_veh_h, double minor_veh_h,
                                              double alpha, int attempts) {
  return two_profile_config(q_veh_h, minor_veh_h, alpha, attempts, {10.0, 12.0});
}

/// Minimal single-type scenario (one profile, one gap value, one attempt row
/// when attempts == 1).
inline ScenarioConfig single_type_config(double q_veh_h, double minor_veh_h,
                                         double gap_s, double merge_s, int attempts,
                                         double alpha = 1.0) {
  ScenarioConfig cfg;
  cfg.major_flow_veh_per_hour = q_veh_h;
  cfg.minor_batch_rate_per_hour = minor_veh_h;
  cfg.batch_size = BatchSizeLaw::deterministic(1);
  cfg.attempts = attempts;
  cfg.gaps_per_attempt = 1;
  DriverProfile p;
  p.probability = 1.0;
  p.merge_time_s = merge_s;
  p.generator = GapGenerator{{gap_s}, {1.0}, alpha};
  p.table = generate_impatience_table({gap_s}, {1.0}, alpha, merge_s, attempts);
  cfg.profiles = {p};
  return cfg;
}

/// Randomized small scenario for property tests. Dimensions stay tiny so the
/// quadrature and finite-difference oracles remain cheap.
inline ScenarioConfig random_config(std::mt19937& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> profile_count(1, 3);
  std::uniform_int_distribution<int> gap_count(1, 3);
  std::uniform_int_distribution<int> attempt_count(1, 6);

  ScenarioConfig cfg;
  cfg.major_flow_veh_per_hour = 100.0 + 900.0 * unif(rng);
  cfg.minor_batch_rate_per_hour = 50.0 + 150.0 * unif(rng);
  cfg.batch_size = BatchSizeLaw::deterministic(1);
  cfg.attempts = attempt_count(rng);
  cfg.gaps_per_attempt = gap_count(rng);
  const int r_total = profile_count(rng);

  std::vector<double> weights(r_total);
  double wsum = 0.0;
  for (double& w : weights) {
    w = 0.1 + unif(rng);
    wsum += w;
  }
  for (int r = 0; r < r_total; ++r) {
    DriverProfile p;
    p.probability = weights[r] / wsum;
    p.merge_time_s = 1.0 + 4.0 * unif(rng);
    std::vector<double> gaps(cfg.gaps_per_attempt);
    std::vector<double> probs(cfg.gaps_per_attempt);
    double psum = 0.0;
    for (int k = 0; k < cfg.gaps_per_attempt; ++k) {
      gaps[k] = p.merge_time_s + 0.5 + 6.0 * unif(rng);
      probs[k] = 0.1 + unif(rng);
      psum += probs[k];
    }
    for (double& pk : probs) pk /= psum;
    const double alpha = 0.5 + 0.5 * unif(rng);
    p.generator = GapGenerator{gaps, probs, alpha};
    p.table = generate_impatience_table(gaps, probs, alpha, p.merge_time_s, cfg.attempts);
    cfg.profiles.push_back(p);
  }
  // Normalize the last profile so probabilities sum to one exactly.
  double acc = 0.0;
  for (std::size_t r = 0; r + 1 < cfg.profiles.size(); ++r) acc += cfg.profiles[r].probability;
  cfg.profiles.back().probability = 1.0 - acc;
  cfg.validate();
  return cfg;
}

}  // namespace gapq::testing
