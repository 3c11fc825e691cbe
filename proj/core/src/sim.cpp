#include "gapq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gapq/errors.hpp"
#include "gapq/parallel.hpp"

namespace gapq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint32_t lo32(std::uint64_t x) { return static_cast<std::uint32_t>(x); }
std::uint32_t hi32(std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); }

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t replication,
                           std::uint64_t stream_id) {
  std::seed_seq seq{lo32(seed),        hi32(seed),      lo32(replication),
                    hi32(replication), lo32(stream_id), hi32(stream_id)};
  engine_.seed(seq);
}

double RandomStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::exponential(double rate) {
  if (rate <= 0.0) return kInf;
  return -std::log1p(-uniform()) / rate;
}

int RandomStream::discrete(const double* probs, int n) {
  const double u = uniform();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

StreamSet make_streams(std::uint64_t seed, std::uint64_t replication) {
  return StreamSet{RandomStream(seed, replication, 0), RandomStream(seed, replication, 1),
                   RandomStream(seed, replication, 2), RandomStream(seed, replication, 3),
                   RandomStream(seed, replication, 4)};
}

namespace {

int sample_batch_size(const BatchSizeLaw& law, RandomStream& rs) {
  switch (law.kind) {
    case BatchSizeLaw::Kind::Deterministic:
      return law.fixed_size;
    case BatchSizeLaw::Kind::Geometric: {
      if (law.success_prob >= 1.0) return 1;
      const double u = rs.uniform();
      return 1 + static_cast<int>(std::log1p(-u) / std::log1p(-law.success_prob));
    }
    case BatchSizeLaw::Kind::Explicit:
      return 1 + rs.discrete(law.pmf.data(), static_cast<int>(law.pmf.size()));
  }
  return 1;
}

SimEstimate aggregate(const std::vector<double>& values) {
  SimEstimate est;
  est.replications = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  est.value = sum / est.replications;
  if (est.replications > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.value) * (v - est.value);
    est.std_error = std::sqrt(ss / (est.replications - 1.0) / est.replications);
  }
  est.ci_half_width = 1.96 * est.std_error;
  return est;
}

void aggregate_vectors(const std::vector<Eigen::VectorXd>& per_rep, Eigen::VectorXd& mean,
                       Eigen::VectorXd& se) {
  const int reps = static_cast<int>(per_rep.size());
  mean = Eigen::VectorXd::Zero(per_rep[0].size());
  for (const Eigen::VectorXd& v : per_rep) mean += v;
  mean /= reps;
  se = Eigen::VectorXd::Zero(mean.size());
  if (reps > 1) {
    for (const Eigen::VectorXd& v : per_rep) se += (v - mean).cwiseAbs2();
    se = (se / (reps - 1.0) / reps).cwiseSqrt();
  }
}

// Dynamics of one replication. The head-of-queue driver scans the major road
// from its scan-start instant; each attempt is decided at the attempt's start
// against the time remaining to the next major-road passage. Under full reuse
// that time is read off the physical passage stream, so one large gap can
// serve several vehicles. Under limited reuse the first attempt sees the
// predecessor's residual gap (decayed while the system was empty) plus a
// fresh exponential remainder, and later attempts see fresh exponential gaps.
class Replication {
public:
  Replication(const ScenarioConfig& cfg, const SimOptions& opts, std::uint64_t rep)
      : cfg_(cfg),
        opts_(opts),
        streams_(make_streams(opts.seed, rep)),
        q_(cfg.major_rate()) {
    next_passage_ = streams_.major_gaps.exponential(q_);
  }

  struct Departure {
    double time = 0.0;
    double service = 0.0;
    int flat_type0 = 0;
  };

  Departure serve_head(double scan_start, int profile0) {
    const DriverProfile& prof = cfg_.profiles[profile0];
    const GapTable& table = prof.table;
    const int rows = table.attempts;
    double t = scan_start;
    for (int attempt = 1;; ++attempt) {
      const int row = std::min(attempt, rows) - 1;
      const int k =
          streams_.attempt_gaps.discrete(&table.prob[static_cast<std::size_t>(row) * table.gaps],
                                         table.gaps);
      const double gap_needed = table.gap(row, k);
      double available;
      if (opts_.reuse == SimOptions::Reuse::Full) {
        while (next_passage_ <= t) {
          next_passage_ += streams_.major_gaps.exponential(q_);
        }
        available = next_passage_ - t;
      } else if (attempt == 1) {
        available = std::max(lag_expiry_ - t, 0.0) + streams_.major_gaps.exponential(q_);
      } else {
        available = streams_.major_gaps.exponential(q_);
      }

      if (available >= gap_needed) {
        Departure dep;
        dep.time = t + prof.merge_time_s;
        dep.service = dep.time - scan_start;
        dep.flat_type0 = (row * table.gaps + k) * cfg_.profile_count() + profile0;
        lag_expiry_ = dep.time + (gap_needed - prof.merge_time_s);
        return dep;
      }
      // The gap closes when its vehicle passes; the next attempt starts then.
      if (opts_.reuse == SimOptions::Reuse::Full) {
        t = next_passage_;
        next_passage_ += streams_.major_gaps.exponential(q_);
      } else {
        t += available;
      }
    }
  }

  StreamSet& streams() { return streams_; }

private:
  const ScenarioConfig& cfg_;
  const SimOptions& opts_;
  StreamSet streams_;
  double q_;
  double next_passage_ = kInf;
  double lag_expiry_ = 0.0;
};

struct CapacityRepStats {
  double capacity = 0.0;
  double mean_service = 0.0;
  Eigen::VectorXd type_freq;
};

CapacityRepStats run_capacity_replication(const ScenarioConfig& cfg,
                                          const SimOptions& opts, std::uint64_t rep) {
  Replication sim(cfg, opts, rep);
  const long long total = opts.warmup_departures + opts.horizon_departures;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(cfg.type_count());
  std::vector<double> profile_probs(cfg.profile_count());
  for (int r = 0; r < cfg.profile_count(); ++r) {
    profile_probs[r] = cfg.profiles[r].probability;
  }

  double window_start = 0.0;
  double service_sum = 0.0;
  double scan_start = 0.0;
  double last_departure = 0.0;
  for (long long n = 0; n < total; ++n) {
    const int profile0 =
        sim.streams().profiles.discrete(profile_probs.data(), cfg.profile_count());
    const Replication::Departure dep = sim.serve_head(scan_start, profile0);
    scan_start = dep.time;
    last_departure = dep.time;
    if (n == opts.warmup_departures - 1) window_start = dep.time;
    if (n >= opts.warmup_departures) {
      service_sum += dep.service;
      counts[dep.flat_type0] += 1.0;
    }
  }

  CapacityRepStats stats;
  const double elapsed = last_departure - window_start;
  stats.capacity = 3600.0 * static_cast<double>(opts.horizon_departures) / elapsed;
  stats.mean_service = service_sum / static_cast<double>(opts.horizon_departures);
  stats.type_freq = counts / static_cast<double>(opts.horizon_departures);
  return stats;
}

struct QueueRepStats {
  double mean_queue_departure = 0.0;
  double mean_queue_arbitrary = 0.0;
  double mean_service = 0.0;
  Eigen::VectorXd pmf_departure;
  Eigen::VectorXd pmf_arbitrary;
  Eigen::VectorXd type_freq;
  Eigen::VectorXd empty_joint;
};

QueueRepStats run_queue_replication(const ScenarioConfig& cfg, const SimOptions& opts,
                                    std::uint64_t rep) {
  Replication sim(cfg, opts, rep);
  StreamSet& streams = sim.streams();
  const long long total = opts.warmup_departures + opts.horizon_departures;
  const int hist_max = opts.queue_histogram_max;
  const double lambda = cfg.batch_rate();

  std::vector<double> profile_probs(cfg.profile_count());
  for (int r = 0; r < cfg.profile_count(); ++r) {
    profile_probs[r] = cfg.profiles[r].probability;
  }

  Eigen::VectorXd dep_hist = Eigen::VectorXd::Zero(hist_max + 1);
  Eigen::VectorXd time_hist = Eigen::VectorXd::Zero(hist_max + 1);
  Eigen::VectorXd type_counts = Eigen::VectorXd::Zero(cfg.type_count());
  Eigen::VectorXd empty_counts = Eigen::VectorXd::Zero(cfg.type_count());
  double service_sum = 0.0;
  double queue_sum = 0.0;
  double queue_time_integral = 0.0;

  std::deque<int> waiting;  // profiles, sampled at arrival, in queue order
  long long departures = 0;
  long long system_count = 0;
  double next_batch = streams.batch_arrivals.exponential(lambda);
  bool stats_active = opts.warmup_departures == 0;
  double t_last = 0.0;
  double stats_start = 0.0;

  auto advance_to = [&](double t_new) {
    if (stats_active) {
      const double dt = t_new - t_last;
      time_hist[static_cast<int>(std::min<long long>(system_count, hist_max))] += dt;
      queue_time_integral += dt * static_cast<double>(system_count);
    }
    t_last = t_new;
  };
  auto arrive_batch = [&]() {
    const double t_arr = next_batch;
    advance_to(t_arr);
    const int size = sample_batch_size(cfg.batch_size, streams.batch_sizes);
    for (int i = 0; i < size; ++i) {
      waiting.push_back(
          streams.profiles.discrete(profile_probs.data(), cfg.profile_count()));
    }
    system_count += size;
    next_batch = t_arr + streams.batch_arrivals.exponential(lambda);
  };

  double scan_start = 0.0;
  while (departures < total) {
    if (waiting.empty()) {
      arrive_batch();
      scan_start = t_last;
    }
    const int head_profile = waiting.front();
    waiting.pop_front();
    const Replication::Departure dep = sim.serve_head(scan_start, head_profile);
    while (next_batch <= dep.time) arrive_batch();
    advance_to(dep.time);
    system_count -= 1;

    ++departures;
    if (stats_active) {
      dep_hist[static_cast<int>(std::min<long long>(system_count, hist_max))] += 1.0;
      queue_sum += static_cast<double>(system_count);
      service_sum += dep.service;
      type_counts[dep.flat_type0] += 1.0;
      if (system_count == 0) empty_counts[dep.flat_type0] += 1.0;
    } else if (departures == opts.warmup_departures) {
      stats_active = true;
      stats_start = dep.time;
      t_last = dep.time;
    }
    scan_start = dep.time;
  }

  QueueRepStats stats;
  const double horizon = static_cast<double>(opts.horizon_departures);
  const double observed_time = t_last - stats_start;
  stats.mean_queue_departure = queue_sum / horizon;
  stats.mean_queue_arbitrary = queue_time_integral / observed_time;
  stats.mean_service = service_sum / horizon;
  stats.pmf_departure = dep_hist / horizon;
  stats.pmf_arbitrary = time_hist / observed_time;
  stats.type_freq = type_counts / horizon;
  stats.empty_joint = empty_counts / horizon;
  return stats;
}

}  // namespace

CapacitySimResult simulate_capacity(const ScenarioConfig& cfg, const SimOptions& opts) {
  cfg.validate();
  if (opts.replications < 1) throw ComputationError("replications must be >= 1");

  std::vector<CapacityRepStats> reps(opts.replications);
  parallel_for(static_cast<std::size_t>(opts.replications), [&](std::size_t i) {
    reps[i] = run_capacity_replication(cfg, opts, static_cast<std::uint64_t>(i + 1));
  });

  CapacitySimResult out;
  std::vector<double> caps, services;
  std::vector<Eigen::VectorXd> freqs;
  for (const CapacityRepStats& r : reps) {
    caps.push_back(r.capacity);
    services.push_back(r.mean_service);
    freqs.push_back(r.type_freq);
  }
  out.capacity_veh_per_hour = aggregate(caps);
  out.mean_service_s = aggregate(services);
  aggregate_vectors(freqs, out.type_frequency, out.type_frequency_se);
  out.departures_per_replication = opts.horizon_departures;
  out.capacity_by_replication = std::move(caps);
  return out;
}

QueueSimResult simulate_queue(const ScenarioConfig& cfg, const SimOptions& opts) {
  cfg.validate();
  if (opts.replications < 1) throw ComputationError("replications must be >= 1");
  if (cfg.batch_rate() <= 0.0) {
    throw ComputationError("open-queue simulation requires a positive minor-road rate");
  }

  std::vector<QueueRepStats> reps(opts.replications);
  parallel_for(static_cast<std::size_t>(opts.replications), [&](std::size_t i) {
    reps[i] = run_queue_replication(cfg, opts, static_cast<std::uint64_t>(i + 1));
  });

  QueueSimResult out;
  std::vector<double> mq, ma, ms;
  std::vector<Eigen::VectorXd> dep_pmf, arb_pmf, type_freq, empty_joint;
  for (const QueueRepStats& r : reps) {
    mq.push_back(r.mean_queue_departure);
    ma.push_back(r.mean_queue_arbitrary);
    ms.push_back(r.mean_service);
    dep_pmf.push_back(r.pmf_departure);
    arb_pmf.push_back(r.pmf_arbitrary);
    type_freq.push_back(r.type_freq);
    empty_joint.push_back(r.empty_joint);
  }
  out.mean_queue_departure = aggregate(mq);
  out.mean_queue_arbitrary = aggregate(ma);
  out.mean_service_s = aggregate(ms);

  Eigen::VectorXd mean, se;
  aggregate_vectors(dep_pmf, mean, se);
  out.pmf_departure.assign(mean.data(), mean.data() + mean.size());
  out.pmf_departure_se.assign(se.data(), se.data() + se.size());
  aggregate_vectors(arb_pmf, mean, se);
  out.pmf_arbitrary.assign(mean.data(), mean.data() + mean.size());
  out.pmf_arbitrary_se.assign(se.data(), se.data() + se.size());
  aggregate_vectors(type_freq, out.type_frequency, out.type_frequency_se);
  aggregate_vectors(empty_joint, out.empty_joint_frequency, out.empty_joint_frequency_se);
  out.departures_per_replication = opts.horizon_departures;
  return out;
}

std::vector<double> replay_full_reuse(const ScenarioConfig& cfg,
                                      const std::vector<double>& passage_times,
                                      const std::vector<int>& driver_profiles) {
  cfg.validate();
  if (cfg.gaps_per_attempt != 1) {
    throw ComputationError("replay requires deterministic per-attempt gaps");
  }
  std::vector<double> departures;
  departures.reserve(driver_profiles.size());
  std::size_t next_idx = 0;
  double scan_start = 0.0;
  for (int profile : driver_profiles) {
    const DriverProfile& prof = cfg.profiles[profile - 1];
    double t = scan_start;
    for (int attempt = 1;; ++attempt) {
      const int row = std::min(attempt, prof.table.attempts) - 1;
      const double needed = prof.table.gap(row, 0);
      while (next_idx < passage_times.size() && passage_times[next_idx] <= t) ++next_idx;
      const double available =
          next_idx < passage_times.size() ? passage_times[next_idx] - t : kInf;
      if (available >= needed) {
        t += prof.merge_time_s;
        break;
      }
      t = passage_times[next_idx];
      ++next_idx;
    }
    departures.push_back(t);
    scan_start = t;
  }
  return departures;
}

}  // namespace gapq
