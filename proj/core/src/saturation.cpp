#include "gapq/saturation.hpp"

#include <cmath>
#include <sstream>

#include "gapq/parallel.hpp"

namespace gapq {

namespace {

// Left fixed point of a row-stochastic matrix: solve (K^T - I) pi = 0 with the
// normalization sum(pi) = 1 substituted for one equation. Falls back to power
// iteration for very large systems.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& k) {
  const Eigen::Index n = k.rows();
  Eigen::VectorXd pi;
  if (n <= 3000) {
    Eigen::MatrixXd a = k.transpose() - Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    pi = a.partialPivLu().solve(b);
  } else {
    pi = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (int iter = 0; iter < 20000; ++iter) {
      Eigen::VectorXd next = k.transpose() * pi;
      next /= next.sum();
      const double delta = (next - pi).lpNorm<Eigen::Infinity>();
      pi.swap(next);
      if (delta < 1e-14) break;
    }
  }

  double min_entry = pi.minCoeff();
  if (min_entry < -1e-10) {
    std::ostringstream os;
    os << "stationary distribution has negative entry " << min_entry;
    throw ComputationError(os.str());
  }
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();

  const double residual = (k.transpose() * pi - pi).lpNorm<Eigen::Infinity>();
  if (residual > 1e-10) {
    std::ostringstream os;
    os << "stationary distribution residual " << residual << " exceeds 1e-10";
    throw ComputationError(os.str());
  }
  return pi;
}

}  // namespace

int attempts_for_defect(const ScenarioConfig& cfg, double target, int cap) {
  const double q = cfg.major_rate();
  if (q <= 0.0) return cfg.attempts;
  bool growable = true;
  for (const DriverProfile& p : cfg.profiles) growable = growable && p.generator.has_value();
  if (!growable) return cfg.attempts;

  // Smallest horizon whose zero-lag probability of failing every attempt is
  // below target, walking the impatience recursion row by row.
  int attempts = cfg.attempts;
  for (const DriverProfile& p : cfg.profiles) {
    const GapGenerator& gen = *p.generator;
    const int m = static_cast<int>(gen.base_gaps_s.size());
    std::vector<double> gaps = gen.base_gaps_s;
    double fail_all = 1.0;
    for (int k = 0; k < m; ++k) fail_all -= gen.base_probs[k] * std::exp(-q * gaps[k]);
    int rows = 1;
    while (fail_all > target && rows < cap) {
      for (int k = 0; k < m; ++k) {
        gaps[k] = gen.alpha * (gaps[k] - p.merge_time_s) + p.merge_time_s;
      }
      double succeed = 0.0;
      for (int k = 0; k < m; ++k) succeed += gen.base_probs[k] * std::exp(-q * gaps[k]);
      fail_all *= 1.0 - succeed;
      ++rows;
    }
    attempts = std::max(attempts, rows);
  }
  return std::min(attempts, cap);
}

SaturatedChain build_saturated_chain(const ServiceKernel& kernel,
                                     const SaturationOptions& opts) {
  const int n = kernel.count();
  const std::vector<double>& lags = kernel.residual_gaps();

  SaturatedChain chain;
  // eval_matrix is column-major [target, source]; the chain is row = source.
  Eigen::MatrixXd by_target(n, n);
  kernel.eval_matrix(0.0, lags, by_target.data());
  chain.kernel = by_target.transpose();

  chain.max_defect = 0.0;
  for (int s = 0; s < n; ++s) {
    const double mass = chain.kernel.row(s).sum();
    const double defect = 1.0 - mass;
    chain.max_defect = std::max(chain.max_defect, defect);
    if (defect > opts.defect_error) {
      std::ostringstream os;
      os << "attempt-horizon defect " << defect << " exceeds " << opts.defect_error
         << "; increase attempts";
      throw ComputationError(os.str());
    }
    chain.kernel.row(s) /= mass;
  }
  chain.defect_warning = chain.max_defect > opts.defect_warn;
  chain.stationary = stationary_distribution(chain.kernel);
  return chain;
}

double mean_service_saturated(const ServiceKernel& kernel, const SaturatedChain& chain) {
  const int n = kernel.count();
  const std::vector<double>& lags = kernel.residual_gaps();

  std::vector<Dual<double>> duals(static_cast<std::size_t>(n) * n);
  kernel.eval_matrix(Dual<double>::variable(0.0), lags, duals.data());

  double g = 0.0;
  for (int s = 0; s < n; ++s) {
    double mean_sum = 0.0;   // sum over targets of the partial service means
    double mass_sum = 0.0;
    for (int t = 0; t < n; ++t) {
      const Dual<double>& e = duals[static_cast<std::size_t>(s) * n + t];
      mean_sum -= e.d;
      mass_sum += e.v;
    }
    g += chain.stationary(s) * mean_sum / mass_sum;
  }
  return g;
}

CapacityResult capacity(const ScenarioConfig& cfg, const SaturationOptions& opts) {
  ServiceKernel kernel(cfg, opts.tail);
  SaturatedChain chain = build_saturated_chain(kernel, opts);
  CapacityResult out;
  out.flow_veh_per_hour = cfg.major_flow_veh_per_hour;
  out.mean_queuer_service_s = mean_service_saturated(kernel, chain);
  out.capacity_veh_per_hour = 3600.0 / out.mean_queuer_service_s;
  out.defect = chain.max_defect;
  out.exact = check_limited_reuse(cfg).holds;
  return out;
}

std::vector<CapacityResult> capacity_sweep(const ScenarioConfig& cfg,
                                           const std::vector<double>& flows_veh_per_hour,
                                           const SaturationOptions& opts) {
  std::vector<CapacityResult> out(flows_veh_per_hour.size());
  parallel_for(flows_veh_per_hour.size(), [&](std::size_t i) {
    ScenarioConfig point = cfg;
    point.major_flow_veh_per_hour = flows_veh_per_hour[i];
    out[i] = capacity(point, opts);
  });
  return out;
}

}  // namespace gapq
