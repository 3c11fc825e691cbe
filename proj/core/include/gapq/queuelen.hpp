#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gapq/errors.hpp"
#include "gapq/kernel.hpp"
#include "gapq/scenario.hpp"

namespace gapq {

/// E[z^B] of the batch-size law.
std::complex<double> batch_pgf(const BatchSizeLaw& law, std::complex<double> z);

enum class Epoch { Departure, Arbitrary };

struct QueueOptions {
  TailMode tail = TailMode::Truncate;
  double defect_warn = 1e-8;
  double defect_error = 1e-6;

  // Root finding inside the unit disk.
  int fixed_point_max_iter = 300;
  double fixed_point_tol = 1e-11;
  int newton_max_iter = 80;
  double root_merge_tol = 1e-8;
  double null_space_tol = 1e-8;
  int contour_nodes = 1 << 14;
  double contour_radius_gap = 1e-8;
  int restart_rounds = 3;

  // Normalization of the empty-queue vector at z -> 1.
  double richardson_h0 = 1.0 / 64.0;
  int richardson_levels = 5;

  // Transform inversion.
  int inversion_nodes = 1 << 14;
  double inversion_radius = 0.99;
  double aliasing_bound = 1e-10;

  bool check_stability = true;
};

/// Determinant roots of the queue-length system inside the closed unit disk.
/// The boundary root z = 1 is listed first with multiplicity one; all other
/// entries are interior.
struct RootSet {
  std::vector<std::complex<double>> roots;
  std::vector<int> multiplicity;
  int interior_count = 0;  // with multiplicity; excludes z = 1
};

/// Solves the stationary queue-length problem for one scenario: the linear
/// system in the partial generating functions, the boundary (empty-queue)
/// vector, and the queue-length laws at departure and arbitrary epochs.
class StationaryQueueSolver {
public:
  explicit StationaryQueueSolver(const ScenarioConfig& cfg, QueueOptions opts = {});

  const ScenarioConfig& config() const { return kernel_.config(); }
  const ServiceKernel& kernel() const { return kernel_; }
  int type_count() const { return kernel_.count(); }
  double max_defect() const { return max_defect_; }
  double load() const { return rho_; }

  /// Queued-customer transition PGF matrix, orientation [target, source],
  /// exactly as the transforms define it (no defect renormalization).
  Eigen::MatrixXcd arrivals_matrix(std::complex<double> z) const;
  /// Exceptional (arrived-to-empty-queue) counterpart.
  Eigen::MatrixXcd exceptional_matrix(std::complex<double> z) const;

  const RootSet& roots();
  /// Joint probabilities f0[t] = P(departure leaves an empty system, type t).
  const Eigen::VectorXd& empty_probs();

  std::complex<double> departure_pgf(std::complex<double> z);
  std::complex<double> arbitrary_pgf(std::complex<double> z);
  std::vector<double> pmf(int n_max, Epoch epoch);
  double mean_queue(Epoch epoch);

private:
  Eigen::MatrixXcd renormalized_arrivals(std::complex<double> z) const;
  Eigen::MatrixXcd renormalized_exceptional(std::complex<double> z) const;
  // d/dz of renormalized_arrivals.
  Eigen::MatrixXcd arrivals_derivative(std::complex<double> z) const;
  Eigen::VectorXcd partial_pgfs(std::complex<double> z, const Eigen::VectorXd& f0) const;

  std::complex<double> log_det_phase(std::complex<double> z) const;
  double contour_winding() const;
  void find_roots();
  void solve_boundary();
  void ensure_inversion_nodes();

  ServiceKernel kernel_;
  QueueOptions opts_;
  std::vector<double> lags_;
  Eigen::VectorXd column_renorm_;       // 1 / (1 - defect) per source
  Eigen::VectorXd column_renorm_star_;  // exceptional counterpart
  double max_defect_ = 0.0;
  double rho_ = 0.0;

  std::optional<RootSet> roots_;
  std::optional<Eigen::VectorXd> f0_;
  std::vector<std::complex<double>> inversion_values_;  // departure PGF samples
  int inversion_nodes_used_ = 0;
};

// Convenience wrappers for one-shot use.
RootSet find_unit_disk_roots(const ScenarioConfig& cfg, QueueOptions opts = {});
Eigen::VectorXd solve_empty_probs(const ScenarioConfig& cfg, QueueOptions opts = {});
std::complex<double> queue_pgf(const ScenarioConfig& cfg, std::complex<double> z,
                               QueueOptions opts = {});
std::complex<double> arbitrary_epoch_pgf(const ScenarioConfig& cfg,
                                         std::complex<double> z, QueueOptions opts = {});
std::vector<double> queue_pmf(const ScenarioConfig& cfg, int n_max, Epoch epoch,
                              QueueOptions opts = {});
double mean_queue_length(const ScenarioConfig& cfg, Epoch epoch, QueueOptions opts = {});

}  // namespace gapq
