#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gapq/errors.hpp"
#include "gapq/kernel.hpp"
#include "gapq/scenario.hpp"

namespace gapq {

struct SaturationOptions {
  TailMode tail = TailMode::Truncate;
  double defect_warn = 1e-8;   // record a warning above this row defect
  double defect_error = 1e-6;  // refuse to proceed above this row defect
};

/// Customer-type chain of a never-empty queue: entry (source, target) is the
/// probability-weighted transform value at s=0 with the source's residual gap
/// as lag, rows renormalized to account for the attempt-horizon defect.
struct SaturatedChain {
  Eigen::MatrixXd kernel;      // row = source type, column = target type
  Eigen::VectorXd stationary;  // left fixed point, nonnegative, sums to 1
  double max_defect = 0.0;     // largest row defect before renormalization
  bool defect_warning = false;
};

struct CapacityResult {
  double flow_veh_per_hour = 0.0;      // major-road flow this was computed at
  double mean_queuer_service_s = 0.0;  // g
  double capacity_veh_per_hour = 0.0;  // 3600 / g
  double defect = 0.0;
  bool exact = true;  // limited-reuse condition held, value is exact
};

/// Smallest attempt horizon (doubling from the configured one, capped) whose
/// worst-case defect is below `target`. Only generator-backed profiles can
/// grow; otherwise the configured horizon is returned unchanged.
int attempts_for_defect(const ScenarioConfig& cfg, double target = 1e-13,
                        int cap = 4096);

SaturatedChain build_saturated_chain(const ServiceKernel& kernel,
                                     const SaturationOptions& opts = {});

/// Stationary mean service time of a queuer (seconds), conditional per row on
/// merging within the modeled attempts.
double mean_service_saturated(const ServiceKernel& kernel, const SaturatedChain& chain);

CapacityResult capacity(const ScenarioConfig& cfg, const SaturationOptions& opts = {});

/// One capacity per major-road flow value (veh/h); points evaluated
/// concurrently.
std::vector<CapacityResult> capacity_sweep(const ScenarioConfig& cfg,
                                           const std::vector<double>& flows_veh_per_hour,
                                           const SaturationOptions& opts = {});

}  // namespace gapq
