// Acceptance suite: exercises the published reference results and the
// analytic/simulation cross-checks end to end. Prints one line per criterion.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gapq/equilibrium.hpp"
#include "gapq/queuelen.hpp"
#include "gapq/saturation.hpp"
#include "gapq/scenario.hpp"
#include "gapq/sim.hpp"
#include "oracles.hpp"

using namespace gapq;
using gapq::testing::adaptive_quadrature_complex;
using Complex = std::complex<double>;

namespace {

struct Harness {
  int failures = 0;

  void run(const std::string& name, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count();
      std::printf("[PASS] %s (%.1f s)\n", name.c_str(), secs);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] %s: %s\n", name.c_str(), e.what());
    }
    std::fflush(stdout);
  }
};

void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// Two-profile scenario with adjustable merge times, first-attempt gaps of
// 5/6 s (standard, 40/60) and slow-profile gaps as given (50/50).
ScenarioConfig scenario(double q_veh_h, double alpha, double merge1, double merge2,
                        std::vector<double> slow_gaps, int attempts) {
  ScenarioConfig cfg;
  cfg.major_flow_veh_per_hour = q_veh_h;
  cfg.minor_batch_rate_per_hour = 0.0;
  cfg.batch_size = BatchSizeLaw::deterministic(1);
  cfg.attempts = attempts;
  cfg.gaps_per_attempt = 2;
  DriverProfile standard;
  standard.probability = 0.9;
  standard.merge_time_s = merge1;
  standard.generator = GapGenerator{{5.0, 6.0}, {0.4, 0.6}, alpha};
  standard.table =
      generate_impatience_table({5.0, 6.0}, {0.4, 0.6}, alpha, merge1, attempts);
  DriverProfile slow;
  slow.probability = 0.1;
  slow.merge_time_s = merge2;
  slow.generator = GapGenerator{slow_gaps, {0.5, 0.5}, alpha};
  slow.table = generate_impatience_table(slow_gaps, {0.5, 0.5}, alpha, merge2, attempts);
  cfg.profiles = {standard, slow};
  return cfg;
}

ScenarioConfig wide_scenario(double q_veh_h, double alpha) {
  return scenario(q_veh_h, alpha, 4.0, 5.0, {10.0, 12.0}, 32);
}

ScenarioConfig narrow_scenario(double q_veh_h, double alpha, double merge1 = 4.0,
                               double merge2 = 5.0) {
  return scenario(q_veh_h, alpha, merge1, merge2, {8.0, 9.0}, 32);
}

double analytic_capacity(const ScenarioConfig& cfg) {
  const ScenarioConfig grown = with_attempts(cfg, attempts_for_defect(cfg));
  return capacity(grown).capacity_veh_per_hour;
}

CapacitySimResult simulated_capacity(const ScenarioConfig& cfg, std::uint64_t seed,
                                     long long horizon = 1'000'000,
                                     int replications = 10) {
  const ScenarioConfig grown = with_attempts(cfg, attempts_for_defect(cfg));
  SimOptions opts;
  opts.seed = seed;
  opts.mode = SimOptions::Mode::Saturated;
  opts.reuse = SimOptions::Reuse::Full;
  opts.warmup_departures = 10'000;
  opts.horizon_departures = horizon;
  opts.replications = replications;
  return simulate_capacity(grown, opts);
}

const std::vector<double> kFlows = {250.0, 500.0, 750.0, 1000.0};
const double kTableApprox[2][4] = {{646.2, 466.4, 328.9, 225.8},
                                   {652.8, 491.0, 377.8, 298.9}};
const double kTableSim[2][4] = {{647.2, 467.7, 330.0, 226.5},
                                {653.7, 491.5, 378.0, 299.0}};
const double kAlphas[2] = {1.0, 0.9};

struct SimTableEntry {
  double value = 0.0;
  double ci = 0.0;
  double analytic = 0.0;
};
SimTableEntry g_sim_table[2][4];
bool g_sim_table_ready = false;

void fill_sim_table() {
  if (g_sim_table_ready) return;
  for (int a = 0; a < 2; ++a) {
    for (int j = 0; j < 4; ++j) {
      const ScenarioConfig cfg = wide_scenario(kFlows[j], kAlphas[a]);
      const CapacitySimResult sim = simulated_capacity(cfg, 20240 + 10 * a + j);
      g_sim_table[a][j].value = sim.capacity_veh_per_hour.value;
      g_sim_table[a][j].ci = sim.capacity_veh_per_hour.ci_half_width;
      g_sim_table[a][j].analytic = analytic_capacity(cfg);
    }
  }
  g_sim_table_ready = true;
}

}  // namespace

int main() {
  Harness h;

  h.run("criterion 1: analytic capacity reproduces the published table to 0.1 veh/h",
        [] {
          for (int a = 0; a < 2; ++a) {
            for (int j = 0; j < 4; ++j) {
              const auto start = std::chrono::steady_clock::now();
              const double cap = analytic_capacity(wide_scenario(kFlows[j], kAlphas[a]));
              const double secs =
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                      .count();
              const double want = kTableApprox[a][j];
              require(std::abs(cap - want) <= 0.1,
                      "alpha " + fmt(kAlphas[a]) + ", q " + fmt(kFlows[j]) + ": got " +
                          fmt(cap) + ", want " + fmt(want) + " +- 0.1");
              require(secs < 10.0, "point took " + fmt(secs) + " s (limit 10 s)");
            }
          }
        });

  h.run("criterion 2: simulated capacity covers the published values, error < 0.5%",
        [] {
          fill_sim_table();
          for (int a = 0; a < 2; ++a) {
            for (int j = 0; j < 4; ++j) {
              const SimTableEntry& e = g_sim_table[a][j];
              const double want = kTableSim[a][j];
              require(std::abs(e.value - want) <= e.ci,
                      "alpha " + fmt(kAlphas[a]) + ", q " + fmt(kFlows[j]) +
                          ": simulated " + fmt(e.value) + " +- " + fmt(e.ci) +
                          " does not cover " + fmt(want));
              const double rel = std::abs(e.analytic - e.value) / e.value;
              require(rel < 0.005, "alpha " + fmt(kAlphas[a]) + ", q " + fmt(kFlows[j]) +
                                       ": relative error " + fmt(rel));
            }
          }
        });

  h.run("criterion 3: analytic capacity never exceeds simulation beyond its CI", [] {
    fill_sim_table();
    for (int a = 0; a < 2; ++a) {
      for (int j = 0; j < 4; ++j) {
        const SimTableEntry& e = g_sim_table[a][j];
        require(e.analytic <= e.value + e.ci,
                "alpha " + fmt(kAlphas[a]) + ", q " + fmt(kFlows[j]) + ": analytic " +
                    fmt(e.analytic) + " above simulated " + fmt(e.value) + " + " +
                    fmt(e.ci));
      }
    }
  });

  h.run("criterion 4: with limited reuse satisfied, analytic lies in the sim CI", [] {
    std::vector<ScenarioConfig> configs;
    for (double alpha : {0.6, 0.8, 0.9, 1.0}) {
      configs.push_back(narrow_scenario(0.0, alpha));
    }
    for (double merge1 : {4.0, 5.0}) {
      for (double merge2 : {5.0, 6.0, 7.0}) {
        if (merge1 == 4.0 && merge2 == 5.0) continue;  // already present (alpha 0.9)
        configs.push_back(narrow_scenario(0.0, 0.9, merge1, merge2));
      }
    }
    int point = 0;
    for (const ScenarioConfig& base : configs) {
      require(check_limited_reuse(base).holds, "scenario unexpectedly violates reuse");
      for (double q : kFlows) {
        ScenarioConfig cfg = base;
        cfg.major_flow_veh_per_hour = q;
        const double analytic = analytic_capacity(cfg);
        const CapacitySimResult sim =
            simulated_capacity(cfg, 515000 + point, 400'000, 10);
        ++point;
        require(std::abs(analytic - sim.capacity_veh_per_hour.value) <=
                    sim.capacity_veh_per_hour.ci_half_width,
                "q " + fmt(q) + ": analytic " + fmt(analytic) + " outside " +
                    fmt(sim.capacity_veh_per_hour.value) + " +- " +
                    fmt(sim.capacity_veh_per_hour.ci_half_width));
      }
    }
  });

  h.run("criterion 5: capacity falls with flow, merge times and patience", [] {
    const std::vector<double> grid = {0.0, 250.0, 500.0, 750.0, 1000.0};

    auto sweep = [&](double alpha, double merge1, double merge2) {
      std::vector<double> caps;
      for (double q : grid) {
        caps.push_back(
            analytic_capacity(scenario(q, alpha, merge1, merge2, {8.0, 9.0}, 32)));
      }
      return caps;
    };

    // Strictly decreasing in the major-road flow.
    const std::vector<double> base = sweep(0.9, 4.0, 5.0);
    for (std::size_t i = 1; i < base.size(); ++i) {
      require(base[i] < base[i - 1], "capacity not strictly decreasing in q");
    }

    // Pointwise decreasing in each merge time (alpha = 0.9).
    std::vector<std::vector<double>> by_merge2;
    for (double merge2 : {5.0, 6.0, 7.0}) by_merge2.push_back(sweep(0.9, 4.0, merge2));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      require(by_merge2[0][i] > by_merge2[1][i] && by_merge2[1][i] > by_merge2[2][i],
              "capacity not decreasing in the slow profile's merge time");
    }
    const std::vector<double> merge1_5 = sweep(0.9, 5.0, 5.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      require(base[i] > merge1_5[i],
              "capacity not decreasing in the standard profile's merge time");
    }

    // Pointwise decreasing in alpha (less impatience, lower capacity) at q > 0.
    std::vector<std::vector<double>> by_alpha;
    for (double alpha : {0.6, 0.8, 0.9, 1.0}) by_alpha.push_back(sweep(alpha, 4.0, 5.0));
    for (std::size_t i = 1; i < grid.size(); ++i) {
      for (std::size_t a = 1; a < by_alpha.size(); ++a) {
        require(by_alpha[a - 1][i] > by_alpha[a][i], "capacity not decreasing in alpha");
      }
    }
  });

  h.run("criterion 6: zero major flow gives the closed-form capacity", [] {
    const double cap = capacity(narrow_scenario(0.0, 0.9)).capacity_veh_per_hour;
    const double want = 3600.0 / 4.1;
    require(std::abs(cap - want) <= 1e-9 * want,
            "got " + fmt(cap) + ", want " + fmt(want));
  });

  h.run("criterion 7: queue-length law at half load passes its property suite", [] {
    ScenarioConfig cfg = scenario(500.0, 0.9, 4.0, 5.0, {8.0, 9.0}, 25);
    const double cap = capacity(cfg).capacity_veh_per_hour;
    cfg.minor_batch_rate_per_hour = 0.5 * cap;

    StationaryQueueSolver solver(cfg);
    const int n = solver.type_count();
    require(solver.roots().interior_count == n - 1,
            "argument principle found " + fmt(solver.roots().interior_count) +
                " interior roots, want " + fmt(n - 1));

    // Unit mass at z -> 1-.
    std::vector<double> samples;
    double step = 1.0 / 128.0;
    for (int m = 0; m < 5; ++m, step *= 0.5) {
      samples.push_back(solver.departure_pgf(Complex(1.0 - step, 0.0)).real());
    }
    for (int k = 1; k < 5; ++k) {
      for (int m = 0; m + k < 5; ++m) {
        const double f = std::pow(2.0, k);
        samples[m] = (f * samples[m + 1] - samples[m]) / (f - 1.0);
      }
    }
    require(std::abs(samples[0] - 1.0) <= 1e-8,
            "departure PGF mass at 1 is " + fmt(samples[0]));

    // Nonnegative table reaching total mass 1 - 1e-6 at an adaptive cutoff.
    int n_max = 64;
    double mass = 0.0;
    std::vector<double> pmf;
    while (n_max <= 4096) {
      pmf = solver.pmf(n_max, Epoch::Departure);
      mass = 0.0;
      for (double p : pmf) {
        require(p >= 0.0, "negative probability in the inverted table");
        mass += p;
      }
      if (mass >= 1.0 - 1e-6) break;
      n_max *= 2;
    }
    require(mass >= 1.0 - 1e-6, "table mass " + fmt(mass) + " at cutoff 4096");
    require(mass <= 1.0 + 1e-8, "table mass " + fmt(mass) + " exceeds one");

    // Arrivals-per-service moment identity.
    const EquilibriumService law(cfg, solver.empty_probs());
    const double lambda = cfg.batch_rate();
    const double target = lambda * cfg.batch_size.mean() * law.mean_service();
    auto a_of_z = [&](double z) {
      return law.service_lst(lambda * (1.0 - cfg.batch_size.pgf(Complex(z, 0.0)))).real();
    };
    std::vector<double> deriv;
    double hh = 1.0 / 64.0;
    for (int m = 0; m < 4; ++m, hh *= 0.5) {
      deriv.push_back((a_of_z(1.0 + hh) - a_of_z(1.0 - hh)) / (2.0 * hh));
    }
    for (int k = 1; k < 4; ++k) {
      for (int m = 0; m + k < 4; ++m) {
        const double f = std::pow(4.0, k);
        deriv[m] = (f * deriv[m + 1] - deriv[m]) / (f - 1.0);
      }
    }
    require(std::abs(deriv[0] - target) <= 1e-8 * std::max(1.0, target),
            "arrivals-per-service " + fmt(deriv[0]) + " vs " + fmt(target));

    // Simulation: distribution distance and empty-queue joint frequencies.
    SimOptions opts;
    opts.mode = SimOptions::Mode::Open;
    opts.reuse = SimOptions::Reuse::Full;
    opts.warmup_departures = 10'000;
    opts.horizon_departures = 100'000;
    opts.replications = 10;
    opts.seed = 7;
    const QueueSimResult sim = simulate_queue(cfg, opts);

    double tv = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k) {
      const double simp = k < sim.pmf_departure.size() ? sim.pmf_departure[k] : 0.0;
      tv += std::abs(simp - pmf[k]);
    }
    require(0.5 * tv <= 0.02, "distribution distance " + fmt(0.5 * tv));

    const Eigen::VectorXd& f0 = solver.empty_probs();
    const double total =
        static_cast<double>(sim.departures_per_replication) * opts.replications;
    for (int t = 0; t < n; ++t) {
      const double p = std::min(std::max(f0(t), 0.0), 1.0);
      const double guard = 3.0 * std::sqrt(p * (1.0 - p) / total) + 3.0 / total;
      require(std::abs(sim.empty_joint_frequency(t) - f0(t)) <=
                  3.0 * sim.empty_joint_frequency_se(t) + guard,
              "empty-queue joint probability at flat type " + fmt(t + 1) +
                  " deviates: analytic " + fmt(f0(t)) + ", simulated " +
                  fmt(sim.empty_joint_frequency(t)));
    }
  });

  h.run("criterion 8: transform-level oracles", [] {
    // Lag-averaged transform vs quadrature at 1e-10.
    std::mt19937 rng(321);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 8; ++rep) {
      const ScenarioConfig rc = gapq::testing::random_config(rng);
      const ServiceKernel rk(rc);
      const double lambda = 0.02 + 0.4 * unif(rng);
      const double ubar = 0.2 + 6.0 * unif(rng);
      const Complex s(unif(rng), unif(rng) - 0.5);
      for (int probe = 0; probe < 2; ++probe) {
        const int flat =
            std::min(1 + static_cast<int>(unif(rng) * rc.type_count()), rc.type_count());
        const TypeIndex t = unflatten(flat, rc);
        const Complex integral = adaptive_quadrature_complex(
            [&](double x) {
              return lambda * std::exp(-lambda * x) * rk.cond_service_lst(t, s, ubar - x);
            },
            0.0, ubar, 1e-14);
        const Complex expected =
            integral + rk.cond_service_lst(t, s, 0.0) * std::exp(-lambda * ubar);
        require(std::abs(rk.lag_averaged_lst(t, s, ubar, lambda) - expected) <= 1e-10,
                "lag-averaged transform misses quadrature");
      }
    }

    // Partial means vs finite differences at relative 1e-6.
    for (int rep = 0; rep < 8; ++rep) {
      const ScenarioConfig rc = gapq::testing::random_config(rng);
      const ServiceKernel rk(rc);
      const double lag = 4.0 * unif(rng);
      for (int probe = 0; probe < 3; ++probe) {
        const int flat =
            std::min(1 + static_cast<int>(unif(rng) * rc.type_count()), rc.type_count());
        const TypeIndex t = unflatten(flat, rc);
        const double exact = rk.partial_mean(t, lag);
        const double fd = -gapq::testing::central_difference(
            [&](double s) { return rk.cond_service_lst(t, s, lag).real(); }, 0.0, 1e-5);
        if (std::abs(exact) > 1e-12) {
          require(std::abs(fd - exact) <= 1e-6 * std::abs(exact),
                  "partial mean off by " + fmt(std::abs(fd - exact) / std::abs(exact)));
        }
      }
    }

    // Telescoping of the served-at probabilities, exactly.
    const ScenarioConfig cfg = narrow_scenario(600.0, 0.8);
    const Eigen::VectorXd success =
        solve_first_attempt_probs(cfg, Eigen::VectorXd::Zero(cfg.type_count()));
    const AttemptProbs probs = attempt_success_probs(cfg, success);
    for (int r = 1; r <= cfg.profile_count(); ++r) {
      for (int i = 1; i < cfg.attempts; ++i) {
        double row = 0.0;
        for (int k = 1; k <= cfg.gaps_per_attempt; ++k) {
          row += cfg.profiles[r - 1].table.probability(i - 1, k - 1) *
                 success(flatten(TypeIndex{i, k, r}, cfg) - 1);
        }
        const int a = flatten(TypeIndex{i, 1, r}, cfg) - 1;
        const int b = flatten(TypeIndex{i + 1, 1, r}, cfg) - 1;
        const double lhs = probs.served_at(b) / success(b);
        const double rhs = probs.served_at(a) / success(a) * (1.0 - row);
        require(std::abs(lhs - rhs) <= 1e-12, "telescoping identity violated");
      }
    }

    // Saturated-mode service mean equals the stationary chain's.
    const ScenarioConfig fine = narrow_scenario(500.0, 0.9);
    const ScenarioConfig grown = with_attempts(fine, 200);
    const ServiceKernel kernel(grown);
    const SaturatedChain chain = build_saturated_chain(kernel);
    const double g = mean_service_saturated(kernel, chain);
    require(std::abs(mean_service_time(grown) - g) <= 1e-10,
            "saturated service mean differs from the chain value");
  });

  if (h.failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", h.failures);
  return 1;
}
