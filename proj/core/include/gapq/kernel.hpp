#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "gapq/dual.hpp"
#include "gapq/scenario.hpp"

namespace gapq {

/// How to account for drivers that have not merged after the last modeled
/// attempt. Truncate drops that probability mass (callers renormalize and
/// report it); Saturate lets every attempt past the last one reuse the last
/// row's gap law, which closes the mass exactly.
enum class TailMode { Truncate, Saturate };

/// Evaluator for the conditional service-time transforms of a merging vehicle.
///
/// A vehicle that starts scanning with a residual gap of `lag` seconds left by
/// its predecessor either accepts immediately at its first attempt (service
/// equals its merge time) or waits through rejected major-road gaps until some
/// attempt succeeds. cond_service_lst(t, s, lag) is the transform
/// E[e^{-s*service}; type = t | lag], defective in the type dimension.
///
/// All per-type outputs are indexed by the flat type index (flatten() - 1).
class ServiceKernel {
public:
  explicit ServiceKernel(ScenarioConfig cfg, TailMode tail = TailMode::Truncate);

  const ScenarioConfig& config() const { return cfg_; }
  TailMode tail_mode() const { return tail_; }
  int count() const { return type_count_; }

  /// Residual gap left behind by a departure of the given flat type (0-based).
  double residual_gap(int flat0) const { return residual_[flat0]; }
  const std::vector<double>& residual_gaps() const { return residual_; }

  std::complex<double> cond_service_lst(const TypeIndex& target, std::complex<double> s,
                                        double lag) const;

  /// Exponentially weighted average of cond_service_lst over an arrival that
  /// occurred a Exp(batch_rate) time after the predecessor left, with the
  /// residual gap capped at max_lag. Exact piecewise closed form.
  std::complex<double> lag_averaged_lst(const TypeIndex& target, std::complex<double> s,
                                        double max_lag, double batch_rate) const;

  /// -d/ds cond_service_lst at s = 0 (exact forward-mode derivative):
  /// E[service; type = target | lag] in seconds.
  double partial_mean(const TypeIndex& target, double lag) const;

  /// Probability that a driver of the given profile (1-based) fails every
  /// modeled attempt, given the residual gap available at scan start.
  double mass_defect(int profile, double lag) const;

  /// Sum over all types of cond_service_lst(., 0, lag); equals one minus the
  /// profile-weighted mass defect.
  double column_mass(double lag) const;

  /// Same, for the lag-averaged transform.
  double lag_averaged_column_mass(double max_lag, double batch_rate) const;

  /// Fill out[0..count) with cond_service_lst(t, s, lag) for every type.
  template <class S>
  void eval_column(const S& s, double lag, S* out) const;

  /// Fill out[0..count) with the lag-averaged transform for every type.
  template <class S>
  void eval_lag_averaged_column(const S& s, double max_lag, double batch_rate,
                                S* out) const;

  /// Column-major [target, source] matrix of cond_service_lst with one column
  /// per source lag. out must hold count()*lags.size() entries.
  template <class S>
  void eval_matrix(const S& s, const std::vector<double>& lags, S* out) const;

  template <class S>
  void eval_lag_averaged_matrix(const S& s, const std::vector<double>& lags,
                                double batch_rate, S* out) const;

private:
  struct ProfileData {
    double probability = 0.0;
    double merge_time = 0.0;
    std::vector<double> first_gaps_sorted;   // ascending
    std::vector<double> first_probs_sorted;  // aligned with first_gaps_sorted
  };

  // Per-evaluation, s-dependent shared terms for one profile.
  template <class S>
  struct SharedTerms {
    S merge_lst;                 // e^{-s * merge_time}
    std::vector<S> attempt_weight;  // [j0] for j0 >= 1: (q/(s+q))^{j0} * prod of
                                    // rejection transforms of attempts 2..j0
    S first_fail_at_zero;        // 1 - sum_k p1k e^{-(s+q) u1k}
    std::vector<S> first_decay_sorted;  // p1k * e^{-(s+q) u1k}, sorted-gap order
  };

  template <class S>
  S attempt_gap_lst(int profile0, int attempt0, const S& s_plus_q) const;

  template <class S>
  SharedTerms<S> make_shared_terms(int profile0, const S& s) const;

  template <class S>
  void eval_column_with(const std::vector<SharedTerms<S>>& shared, const S& s,
                        double lag, S* out) const;

  template <class S>
  void eval_lag_averaged_column_with(const std::vector<SharedTerms<S>>& shared,
                                     const S& s, double max_lag, double batch_rate,
                                     S* out) const;

  int flat0(int attempt0, int gap0, int profile0) const {
    return (attempt0 * gaps_ + gap0) * profile_count_ + profile0;
  }

  ScenarioConfig cfg_;
  TailMode tail_;
  int attempts_ = 0;
  int gaps_ = 0;
  int profile_count_ = 0;
  int type_count_ = 0;
  double major_rate_ = 0.0;
  std::vector<ProfileData> pdata_;
  std::vector<double> residual_;  // per flat type
};

// --- template implementation -------------------------------------------------

template <class S>
S ServiceKernel::attempt_gap_lst(int profile0, int attempt0,
                                          const S& s_plus_q) const {
  using std::exp;
  const GapTable& t = cfg_.profiles[profile0].table;
  S acc{0.0};
  for (int k = 0; k < gaps_; ++k) {
    acc += t.probability(attempt0, k) * exp(-s_plus_q * t.gap(attempt0, k));
  }
  return acc;
}

template <class S>
ServiceKernel::SharedTerms<S> ServiceKernel::make_shared_terms(int profile0,
                                                               const S& s) const {
  using std::exp;
  const double q = major_rate_;
  const ProfileData& pd = pdata_[profile0];
  SharedTerms<S> out;
  out.merge_lst = exp(-s * pd.merge_time);
  const S s_plus_q = s + q;

  out.first_decay_sorted.resize(gaps_);
  S first_sum{0.0};
  for (int k = 0; k < gaps_; ++k) {
    out.first_decay_sorted[k] =
        pd.first_probs_sorted[k] * exp(-s_plus_q * pd.first_gaps_sorted[k]);
    first_sum += out.first_decay_sorted[k];
  }
  out.first_fail_at_zero = 1.0 - first_sum;

  out.attempt_weight.assign(attempts_, S{0.0});
  if (q > 0.0) {
    const S ratio = q / s_plus_q;
    S w = ratio;  // attempt 2: one rejected first gap already accounted separately
    for (int j0 = 1; j0 < attempts_; ++j0) {
      out.attempt_weight[j0] = w;
      if (j0 + 1 < attempts_) {
        w = w * ratio * (1.0 - attempt_gap_lst(profile0, j0, s_plus_q));
      }
    }
    if (tail_ == TailMode::Saturate && attempts_ >= 2) {
      const S reuse =
          ratio * (1.0 - attempt_gap_lst(profile0, attempts_ - 1, s_plus_q));
      out.attempt_weight[attempts_ - 1] =
          out.attempt_weight[attempts_ - 1] / (1.0 - reuse);
    }
  }
  return out;
}

template <class S>
void ServiceKernel::eval_column_with(const std::vector<SharedTerms<S>>& shared,
                                     const S& s, double lag, S* out) const {
  using std::exp;
  const double q = major_rate_;
  for (int r0 = 0; r0 < profile_count_; ++r0) {
    const ProfileData& pd = pdata_[r0];
    const SharedTerms<S>& sh = shared[r0];
    const GapTable& t = cfg_.profiles[r0].table;

    // First attempt: the vehicle merges immediately iff the available gap
    // (lag plus the exponential remainder) covers its sampled critical gap.
    for (int k = 0; k < gaps_; ++k) {
      const double u = t.gap(0, k);
      const double excess = std::max(u - lag, 0.0);
      out[flat0(0, k, r0)] = pd.probability * t.probability(0, k) *
                             std::exp(-q * excess) * sh.merge_lst;
    }
    if (attempts_ == 1) continue;

    // Later attempts: reject the first gap, then fresh exponential gaps.
    const S s_plus_q = s + q;
    S first_fail{0.0};
    if (q > 0.0) {
      // 1 - E[e^{-(s+q) max(T1 - lag, 0)}]
      double covered = 0.0;
      S decaying{0.0};
      for (int k = 0; k < gaps_; ++k) {
        if (pd.first_gaps_sorted[k] <= lag) {
          covered += pd.first_probs_sorted[k];
        } else {
          decaying += sh.first_decay_sorted[k];
        }
      }
      first_fail = (1.0 - covered) - exp(s_plus_q * lag) * decaying;
    }
    const S scan_head = first_fail * exp(-s * lag) * sh.merge_lst;
    for (int j0 = 1; j0 < attempts_; ++j0) {
      const S w = sh.attempt_weight[j0];
      for (int k = 0; k < gaps_; ++k) {
        out[flat0(j0, k, r0)] = (q > 0.0)
                                    ? pd.probability * t.probability(j0, k) *
                                          std::exp(-q * t.gap(j0, k)) * scan_head * w
                                    : S{0.0};
      }
    }
  }
}

template <class S>
void ServiceKernel::eval_lag_averaged_column_with(
    const std::vector<SharedTerms<S>>& shared, const S& s, double max_lag,
    double batch_rate, S* out) const {
  using std::exp;
  const double q = major_rate_;
  const double lam = batch_rate;
  const double ubar = max_lag;
  const double tail_weight = std::exp(-lam * ubar);

  // exp(-lam*ubar) * integral over [a,b] of exp(c*w) dw, stable for large lam.
  auto piece = [&](const S& c, double a, double b) -> S {
    const double len = b - a;
    return exp(c * b - lam * ubar) * len * expm1_over_x(-c * len);
  };

  for (int r0 = 0; r0 < profile_count_; ++r0) {
    const ProfileData& pd = pdata_[r0];
    const SharedTerms<S>& sh = shared[r0];
    const GapTable& t = cfg_.profiles[r0].table;
    const S s_plus_q = s + q;

    // First-attempt types: value is merge_lst times the success probability,
    // which rises as exp(q*w) until the sampled gap is fully covered.
    for (int k = 0; k < gaps_; ++k) {
      const double u = t.gap(0, k);
      const S coeff = pd.probability * t.probability(0, k) * sh.merge_lst;
      const double cut = std::min(u, ubar);
      S integral = std::exp(-q * u) * piece(S{lam + q}, 0.0, cut);
      if (ubar > u) integral += piece(S{lam}, u, ubar);
      out[flat0(0, k, r0)] = coeff * (lam * integral + tail_weight * std::exp(-q * u));
    }
    if (attempts_ == 1) continue;
    if (q <= 0.0) {
      for (int j0 = 1; j0 < attempts_; ++j0)
        for (int k = 0; k < gaps_; ++k) out[flat0(j0, k, r0)] = S{0.0};
      continue;
    }

    // Later-attempt types share, per profile, the integral of the first-attempt
    // failure factor: on each interval between sorted first-attempt gaps the
    // integrand is a_const * e^{(lam-s)w} - b_const * e^{(lam+q)w}.
    S int_const{0.0};
    S int_decay{0.0};
    double covered = 0.0;
    S decaying{0.0};
    for (int k = 0; k < gaps_; ++k) decaying += sh.first_decay_sorted[k];
    double a = 0.0;
    for (int k = 0; k <= gaps_ && a < ubar; ++k) {
      const double b = (k < gaps_) ? std::min(pd.first_gaps_sorted[k], ubar) : ubar;
      if (b > a) {
        int_const += (1.0 - covered) * piece(S{lam} - s, a, b);
        int_decay += decaying * piece(S{lam + q}, a, b);
        a = b;
      }
      if (k < gaps_ && pd.first_gaps_sorted[k] <= ubar) {
        covered += pd.first_probs_sorted[k];
        decaying -= sh.first_decay_sorted[k];
      }
    }
    const S scan_integral = int_const - int_decay;
    const S head = lam * scan_integral + tail_weight * sh.first_fail_at_zero;
    for (int j0 = 1; j0 < attempts_; ++j0) {
      const S w = sh.attempt_weight[j0] * sh.merge_lst;
      for (int k = 0; k < gaps_; ++k) {
        out[flat0(j0, k, r0)] = pd.probability * t.probability(j0, k) *
                                std::exp(-q * t.gap(j0, k)) * head * w;
      }
    }
  }
}

template <class S>
void ServiceKernel::eval_column(const S& s, double lag, S* out) const {
  std::vector<SharedTerms<S>> shared;
  shared.reserve(profile_count_);
  for (int r0 = 0; r0 < profile_count_; ++r0) shared.push_back(make_shared_terms(r0, s));
  eval_column_with(shared, s, lag, out);
}

template <class S>
void ServiceKernel::eval_lag_averaged_column(const S& s, double max_lag,
                                             double batch_rate, S* out) const {
  std::vector<SharedTerms<S>> shared;
  shared.reserve(profile_count_);
  for (int r0 = 0; r0 < profile_count_; ++r0) shared.push_back(make_shared_terms(r0, s));
  eval_lag_averaged_column_with(shared, s, max_lag, batch_rate, out);
}

template <class S>
void ServiceKernel::eval_matrix(const S& s, const std::vector<double>& lags,
                                S* out) const {
  std::vector<SharedTerms<S>> shared;
  shared.reserve(profile_count_);
  for (int r0 = 0; r0 < profile_count_; ++r0) shared.push_back(make_shared_terms(r0, s));
  for (std::size_t c = 0; c < lags.size(); ++c) {
    eval_column_with(shared, s, lags[c], out + c * static_cast<std::size_t>(type_count_));
  }
}

template <class S>
void ServiceKernel::eval_lag_averaged_matrix(const S& s, const std::vector<double>& lags,
                                             double batch_rate, S* out) const {
  std::vector<SharedTerms<S>> shared;
  shared.reserve(profile_count_);
  for (int r0 = 0; r0 < profile_count_; ++r0) shared.push_back(make_shared_terms(r0, s));
  for (std::size_t c = 0; c < lags.size(); ++c) {
    eval_lag_averaged_column_with(shared, s, lags[c], batch_rate,
                                  out + c * static_cast<std::size_t>(type_count_));
  }
}

}  // namespace gapq
