#pragma once

#include <complex>

#include <Eigen/Dense>

#include "gapq/errors.hpp"
#include "gapq/kernel.hpp"
#include "gapq/scenario.hpp"

namespace gapq {

/// Per-type attempt probabilities, indexed by flat type.
struct AttemptProbs {
  Eigen::VectorXd success;    // attempt succeeds given reached, with that gap
  Eigen::VectorXd served_at;  // driver is served at that attempt with that gap
  Eigen::VectorXd type_prob;  // served_at * gap probability * profile probability
};

/// Success probabilities of every (attempt, gap, profile) type. Attempts >= 2
/// face fresh exponential major-road gaps (closed form); first attempts see
/// the equilibrium mixture of predecessor residual gaps, found from a linear
/// system that takes the empty-queue joint probabilities f0 as input (pass
/// zeros for a saturated queue).
Eigen::VectorXd solve_first_attempt_probs(const ScenarioConfig& cfg,
                                          const Eigen::VectorXd& f0);

AttemptProbs attempt_success_probs(const ScenarioConfig& cfg,
                                   const Eigen::VectorXd& success);

struct StabilityReport {
  double rho = 0.0;
  bool stable = true;
};

/// rho = offered vehicle rate times the saturated mean service time.
StabilityReport stability_margin(const ScenarioConfig& cfg,
                                 TailMode tail = TailMode::Truncate);

/// Equilibrium service-time law: conditional transforms by (predecessor,
/// current) type pair, the unconditional transform, and its mean.
class EquilibriumService {
public:
  /// An empty (size-zero) f0 selects saturated mode.
  explicit EquilibriumService(const ScenarioConfig& cfg,
                              Eigen::VectorXd f0 = Eigen::VectorXd(),
                              TailMode tail = TailMode::Truncate);

  const ScenarioConfig& config() const { return kernel_.config(); }
  const ServiceKernel& service_kernel() const { return kernel_; }
  const AttemptProbs& attempt_probs() const { return probs_; }
  /// Probability that an arrival finds the system empty, given its
  /// predecessor's type (f0 over the type law; zero for unreachable types).
  const Eigen::VectorXd& empty_fraction() const { return fbar_; }

  /// Partial LST of a customer's service time jointly with its type being
  /// `target`, given its predecessor's type `source`.
  std::complex<double> service_lst_given_pred(const TypeIndex& source,
                                              const TypeIndex& target,
                                              std::complex<double> s) const;

  /// Unconditional service-time LST; at s=0 it equals one minus the overall
  /// attempt-horizon defect.
  std::complex<double> service_lst(std::complex<double> s) const;

  double mass() const;          // service_lst(0)
  double mean_service() const;  // -d/ds service_lst at 0, exact differentiation

private:
  template <class S>
  S weighted_total(const S& s) const;

  ServiceKernel kernel_;
  Eigen::VectorXd f0_;
  AttemptProbs probs_;
  Eigen::VectorXd fbar_;
};

/// Convenience: mean service time of the equilibrium law (seconds).
double mean_service_time(const ScenarioConfig& cfg,
                         const Eigen::VectorXd& f0 = Eigen::VectorXd(),
                         TailMode tail = TailMode::Truncate);

}  // namespace gapq
