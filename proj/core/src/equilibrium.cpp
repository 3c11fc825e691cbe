#include "gapq/equilibrium.hpp"

#include <cmath>
#include <sstream>

#include "gapq/saturation.hpp"

namespace gapq {

namespace {

// E[e^{-q T}] for the gap law of one attempt row.
double row_gap_lst(const GapTable& t, int attempt0, double q) {
  double acc = 0.0;
  for (int k = 0; k < t.gaps; ++k) {
    acc += t.probability(attempt0, k) * std::exp(-q * t.gap(attempt0, k));
  }
  return acc;
}

}  // namespace

Eigen::VectorXd solve_first_attempt_probs(const ScenarioConfig& cfg,
                                          const Eigen::VectorXd& f0) {
  cfg.validate();
  const int n_types = cfg.type_count();
  const int m = cfg.gaps_per_attempt;
  const int n_prof = cfg.profile_count();
  const int dim = m * n_prof;
  const double q = cfg.major_rate();
  const double lambda = cfg.batch_rate();

  const bool has_f0 = f0.size() > 0 && f0.lpNorm<Eigen::Infinity>() > 0.0;
  if (f0.size() > 0 && f0.size() != n_types) {
    throw ComputationError("empty-queue vector has the wrong length");
  }
  if (has_f0 && lambda <= 0.0) {
    throw ComputationError(
        "nonzero empty-queue probabilities require a positive minor-road rate");
  }

  auto first_gap = [&](int k0, int r0) { return cfg.profiles[r0].table.gap(0, k0); };
  auto idx = [&](int k0, int r0) { return k0 * n_prof + r0; };

  // Rejection chains prod_{m=2}^{i-1}(1 - E[e^{-q T_m}]) per profile.
  std::vector<std::vector<double>> chain(n_prof);
  for (int r0 = 0; r0 < n_prof; ++r0) {
    chain[r0].assign(cfg.attempts + 1, 1.0);
    for (int i = 3; i <= cfg.attempts; ++i) {
      chain[r0][i] =
          chain[r0][i - 1] * (1.0 - row_gap_lst(cfg.profiles[r0].table, i - 2, q));
    }
  }

  // c[(k,r), r0]: probability-weighted later-attempt contribution of
  // predecessor profile r0 to the balance of first-attempt type (k, r).
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(dim, n_prof);
  for (int r = 0; r < n_prof; ++r) {
    for (int k = 0; k < m; ++k) {
      const double u1 = first_gap(k, r);
      for (int r0 = 0; r0 < n_prof; ++r0) {
        const DriverProfile& pred = cfg.profiles[r0];
        double acc = 0.0;
        for (int i = 2; i <= cfg.attempts; ++i) {
          for (int l = 0; l < m; ++l) {
            const double u = pred.table.gap(i - 1, l);
            const double v = u1 - u + pred.merge_time_s;
            acc += pred.table.probability(i - 1, l) *
                   std::exp(-q * (u + std::max(v, 0.0))) * chain[r0][i];
          }
        }
        c(idx(k, r), r0) = pred.probability * acc;
      }
    }
  }

  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  for (int r = 0; r < n_prof; ++r) {
    for (int k = 0; k < m; ++k) {
      const int row = idx(k, r);
      const double u1 = first_gap(k, r);
      for (int r0 = 0; r0 < n_prof; ++r0) {
        const DriverProfile& pred = cfg.profiles[r0];
        for (int l1 = 0; l1 < m; ++l1) {
          const double v = u1 - first_gap(l1, r0) + pred.merge_time_s;
          lhs(row, idx(l1, r0)) +=
              pred.table.probability(0, l1) *
              (c(row, r0) - pred.probability * std::exp(-q * std::max(v, 0.0)));
        }
        rhs(row) += c(row, r0);
      }

      if (has_f0) {
        for (int flat0 = 0; flat0 < n_types; ++flat0) {
          const TypeIndex t = unflatten(flat0 + 1, cfg);
          const DriverProfile& pred = cfg.profiles[t.profile - 1];
          const double u = pred.table.gap(t.attempt - 1, t.gap - 1);
          const double v = u1 - u + pred.merge_time_s;
          const double v_pos = std::max(v, 0.0);
          const double v_neg = std::max(-v, 0.0);
          const double coef =
              1.0 - std::exp(-lambda * v_neg) - std::exp(-q * v_pos) +
              lambda / (lambda + q) * std::exp(-(lambda + q) * v_neg - q * v) +
              q / (lambda + q) *
                  std::exp(-lambda * (u - pred.merge_time_s) - q * u1);
          rhs(row) += coef * f0(flat0);
        }
      }
    }
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
  const Eigen::VectorXd p1 = lu.solve(rhs);
  const double residual = (lhs * p1 - rhs).lpNorm<Eigen::Infinity>();
  if (!(residual < 1e-12 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))) {
    std::ostringstream os;
    os << "first-attempt system residual " << residual;
    throw ComputationError(os.str());
  }

  Eigen::VectorXd success(n_types);
  for (int flat0 = 0; flat0 < n_types; ++flat0) {
    const TypeIndex t = unflatten(flat0 + 1, cfg);
    if (t.attempt == 1) {
      double p = p1(idx(t.gap - 1, t.profile - 1));
      if (p < -1e-10 || p > 1.0 + 1e-10) {
        std::ostringstream os;
        os << "first-attempt success probability " << p << " outside [0,1]"
           << " (type " << flat0 + 1 << ", residual " << residual << ")";
        throw ComputationError(os.str());
      }
      success(flat0) = std::clamp(p, 0.0, 1.0);
    } else {
      success(flat0) =
          std::exp(-q * cfg.profiles[t.profile - 1].table.gap(t.attempt - 1, t.gap - 1));
    }
  }
  return success;
}

AttemptProbs attempt_success_probs(const ScenarioConfig& cfg,
                                   const Eigen::VectorXd& success) {
  const int n_types = cfg.type_count();
  AttemptProbs out;
  out.success = success;
  out.served_at.resize(n_types);
  out.type_prob.resize(n_types);

  for (int r0 = 0; r0 < cfg.profile_count(); ++r0) {
    const DriverProfile& prof = cfg.profiles[r0];
    double reach = 1.0;  // probability every earlier attempt failed
    for (int i = 1; i <= cfg.attempts; ++i) {
      double row_success = 0.0;
      for (int k = 1; k <= cfg.gaps_per_attempt; ++k) {
        const int flat0 = flatten(TypeIndex{i, k, r0 + 1}, cfg) - 1;
        out.served_at(flat0) = success(flat0) * reach;
        out.type_prob(flat0) =
            out.served_at(flat0) * prof.table.probability(i - 1, k - 1) *
            prof.probability;
        row_success += prof.table.probability(i - 1, k - 1) * success(flat0);
      }
      reach *= 1.0 - row_success;
    }
  }
  return out;
}

StabilityReport stability_margin(const ScenarioConfig& cfg, TailMode tail) {
  SaturationOptions opts;
  opts.tail = tail;
  const CapacityResult cap = capacity(cfg, opts);
  StabilityReport report;
  report.rho = cfg.vehicle_rate() * cap.mean_queuer_service_s;
  report.stable = report.rho < 1.0;
  return report;
}

EquilibriumService::EquilibriumService(const ScenarioConfig& cfg, Eigen::VectorXd f0,
                                       TailMode tail)
    : kernel_(cfg, tail) {
  const int n = kernel_.count();
  if (f0.size() == 0) f0 = Eigen::VectorXd::Zero(n);
  if (f0.size() != n) throw ComputationError("empty-queue vector has the wrong length");
  f0_ = std::move(f0);

  probs_ = attempt_success_probs(cfg, solve_first_attempt_probs(cfg, f0_));

  fbar_.resize(n);
  for (int t = 0; t < n; ++t) {
    const double tp = probs_.type_prob(t);
    if (tp < 1e-14) {
      fbar_(t) = 0.0;  // unreachable predecessor type
      continue;
    }
    const double fb = f0_(t) / tp;
    if (fb < -1e-8 || fb > 1.0 + 1e-8) {
      std::ostringstream os;
      os << "empty fraction " << fb << " outside [0,1] at flat type " << t + 1
         << "; empty-queue vector and type law are inconsistent";
      throw ComputationError(os.str());
    }
    fbar_(t) = std::clamp(fb, 0.0, 1.0);
  }
}

std::complex<double> EquilibriumService::service_lst_given_pred(
    const TypeIndex& source, const TypeIndex& target, std::complex<double> s) const {
  const int src = flatten(source, config()) - 1;
  const int tgt = flatten(target, config()) - 1;
  if (probs_.type_prob(src) < 1e-14) return {0.0, 0.0};

  const double lag = kernel_.residual_gap(src);
  std::vector<std::complex<double>> col(kernel_.count());
  kernel_.eval_column(s, lag, col.data());
  std::complex<double> value = col[tgt] * (1.0 - fbar_(src));
  if (fbar_(src) > 0.0) {
    kernel_.eval_lag_averaged_column(s, lag, config().batch_rate(), col.data());
    value += col[tgt] * fbar_(src);
  }
  return value;
}

template <class S>
S EquilibriumService::weighted_total(const S& s) const {
  const int n = kernel_.count();
  std::vector<S> col(n);
  S total{0.0};
  for (int src = 0; src < n; ++src) {
    const double w = probs_.type_prob(src);
    if (w < 1e-14) continue;
    const double lag = kernel_.residual_gap(src);
    kernel_.eval_column(s, lag, col.data());
    S conditional{0.0};
    for (int t = 0; t < n; ++t) conditional += col[t];
    conditional = conditional * (1.0 - fbar_(src));
    if (fbar_(src) > 0.0) {
      kernel_.eval_lag_averaged_column(s, lag, config().batch_rate(), col.data());
      S averaged{0.0};
      for (int t = 0; t < n; ++t) averaged += col[t];
      conditional += averaged * fbar_(src);
    }
    total += w * conditional;
  }
  return total;
}

std::complex<double> EquilibriumService::service_lst(std::complex<double> s) const {
  return weighted_total(s);
}

double EquilibriumService::mass() const { return weighted_total(0.0); }

double EquilibriumService::mean_service() const {
  return -weighted_total(Dual<double>::variable(0.0)).d;
}

double mean_service_time(const ScenarioConfig& cfg, const Eigen::VectorXd& f0,
                         TailMode tail) {
  return EquilibriumService(cfg, f0, tail).mean_service();
}

}  // namespace gapq
