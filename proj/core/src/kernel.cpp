#include "gapq/kernel.hpp"

#include <numeric>
#include <stdexcept>

namespace gapq {

ServiceKernel::ServiceKernel(ScenarioConfig cfg, TailMode tail)
    : cfg_(std::move(cfg)), tail_(tail) {
  cfg_.validate();
  attempts_ = cfg_.attempts;
  gaps_ = cfg_.gaps_per_attempt;
  profile_count_ = cfg_.profile_count();
  type_count_ = cfg_.type_count();
  major_rate_ = cfg_.major_rate();
  if (tail_ == TailMode::Saturate && attempts_ < 2) {
    throw std::invalid_argument("saturating tail requires at least two attempts");
  }

  pdata_.resize(profile_count_);
  for (int r0 = 0; r0 < profile_count_; ++r0) {
    const DriverProfile& prof = cfg_.profiles[r0];
    ProfileData& pd = pdata_[r0];
    pd.probability = prof.probability;
    pd.merge_time = prof.merge_time_s;
    std::vector<int> order(gaps_);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return prof.table.gap(0, a) < prof.table.gap(0, b);
    });
    pd.first_gaps_sorted.resize(gaps_);
    pd.first_probs_sorted.resize(gaps_);
    for (int k = 0; k < gaps_; ++k) {
      pd.first_gaps_sorted[k] = prof.table.gap(0, order[k]);
      pd.first_probs_sorted[k] = prof.table.probability(0, order[k]);
    }
  }

  residual_.resize(type_count_);
  for (int flat = 1; flat <= type_count_; ++flat) {
    residual_[flat - 1] = cfg_.residual_gap(unflatten(flat, cfg_));
  }
}

std::complex<double> ServiceKernel::cond_service_lst(const TypeIndex& target,
                                                     std::complex<double> s,
                                                     double lag) const {
  std::vector<std::complex<double>> col(type_count_);
  eval_column(s, lag, col.data());
  return col[flatten(target, cfg_) - 1];
}

std::complex<double> ServiceKernel::lag_averaged_lst(const TypeIndex& target,
                                                     std::complex<double> s,
                                                     double max_lag,
                                                     double batch_rate) const {
  std::vector<std::complex<double>> col(type_count_);
  eval_lag_averaged_column(s, max_lag, batch_rate, col.data());
  return col[flatten(target, cfg_) - 1];
}

double ServiceKernel::partial_mean(const TypeIndex& target, double lag) const {
  std::vector<Dual<double>> col(type_count_);
  eval_column(Dual<double>::variable(0.0), lag, col.data());
  return -col[flatten(target, cfg_) - 1].d;
}

double ServiceKernel::mass_defect(int profile, double lag) const {
  if (profile < 1 || profile > profile_count_) {
    throw std::out_of_range("profile index out of range");
  }
  if (tail_ == TailMode::Saturate) return 0.0;
  const double q = major_rate_;
  if (q <= 0.0) return 0.0;
  const int r0 = profile - 1;
  const ProfileData& pd = pdata_[r0];

  double first_success = 0.0;
  for (int k = 0; k < gaps_; ++k) {
    first_success += pd.first_probs_sorted[k] *
                     std::exp(-q * std::max(pd.first_gaps_sorted[k] - lag, 0.0));
  }
  double defect = 1.0 - first_success;
  for (int attempt0 = 1; attempt0 < attempts_; ++attempt0) {
    defect *= 1.0 - attempt_gap_lst(r0, attempt0, q);
  }
  return defect;
}

double ServiceKernel::column_mass(double lag) const {
  double mass = 1.0;
  for (int r = 1; r <= profile_count_; ++r) {
    mass -= pdata_[r - 1].probability * mass_defect(r, lag);
  }
  return mass;
}

double ServiceKernel::lag_averaged_column_mass(double max_lag, double batch_rate) const {
  std::vector<double> col(type_count_);
  eval_lag_averaged_column(0.0, max_lag, batch_rate, col.data());
  double mass = 0.0;
  for (double v : col) mass += v;
  return mass;
}

}  // namespace gapq
