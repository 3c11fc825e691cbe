#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gapq/scenario.hpp"

namespace gapq {

/// One of the named random substreams of a replication. Substreams are
/// deterministic functions of (seed, replication, stream id); draws on one
/// stream never affect another.
class RandomStream {
public:
  RandomStream(std::uint64_t seed, std::uint64_t replication, std::uint64_t stream_id);

  /// Uniform on [0, 1).
  double uniform();
  /// Exponential with the given rate; +infinity when rate == 0.
  double exponential(double rate);
  /// Index in [0, n) drawn according to probs (assumed to sum to 1).
  int discrete(const double* probs, int n);

private:
  std::mt19937_64 engine_;
};

/// The full substream set used by one replication.
struct StreamSet {
  RandomStream major_gaps;      // major-road interarrival times
  RandomStream batch_arrivals;  // minor-road batch interarrival times
  RandomStream batch_sizes;
  RandomStream profiles;
  RandomStream attempt_gaps;  // per-attempt critical-gap draws
};

StreamSet make_streams(std::uint64_t seed, std::uint64_t replication);

struct SimOptions {
  enum class Mode { Saturated, Open };
  enum class Reuse { Full, Limited };

  std::uint64_t seed = 1;
  Mode mode = Mode::Saturated;
  Reuse reuse = Reuse::Full;
  long long warmup_departures = 10'000;
  long long horizon_departures = 1'000'000;
  int replications = 10;
  int queue_histogram_max = 1024;
};

/// Mean over replications with its standard error; ci_half_width = 1.96 * se.
struct SimEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double ci_half_width = 0.0;
  int replications = 0;
};

struct CapacitySimResult {
  SimEstimate capacity_veh_per_hour;
  SimEstimate mean_service_s;
  Eigen::VectorXd type_frequency;     // by flat type, averaged over replications
  Eigen::VectorXd type_frequency_se;  // per-type standard error
  long long departures_per_replication = 0;
  std::vector<double> capacity_by_replication;
};

struct QueueSimResult {
  SimEstimate mean_queue_departure;
  SimEstimate mean_queue_arbitrary;
  SimEstimate mean_service_s;
  std::vector<double> pmf_departure;  // queue length left behind at departures
  std::vector<double> pmf_departure_se;
  std::vector<double> pmf_arbitrary;  // time-averaged system content
  std::vector<double> pmf_arbitrary_se;
  Eigen::VectorXd type_frequency;
  Eigen::VectorXd type_frequency_se;
  Eigen::VectorXd empty_joint_frequency;  // departure left an empty system, by type
  Eigen::VectorXd empty_joint_frequency_se;
  long long departures_per_replication = 0;
};

/// Saturated-queue throughput (veh/h). Reuse::Full plays the physical
/// dynamics where one large major-road gap can serve several vehicles;
/// Reuse::Limited exposes each successor to exactly the residual gap of its
/// predecessor, matching the analytic model's state.
CapacitySimResult simulate_capacity(const ScenarioConfig& cfg, const SimOptions& opts);

/// Open-queue simulation with batch Poisson arrivals. Requires a positive
/// minor-road rate.
QueueSimResult simulate_queue(const ScenarioConfig& cfg, const SimOptions& opts);

/// Deterministic replay harness: a queue of drivers (profiles given in queue
/// order, single-gap-per-attempt tables) is released at time zero against the
/// given absolute major-road passage times. Returns each driver's departure
/// time under full gap reuse. Used to pin down the reuse semantics.
std::vector<double> replay_full_reuse(const ScenarioConfig& cfg,
                                      const std::vector<double>& passage_times,
                                      const std::vector<int>& driver_profiles);

}  // namespace gapq
