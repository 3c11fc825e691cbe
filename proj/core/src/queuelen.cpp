#include "gapq/queuelen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gapq/parallel.hpp"
#include "gapq/saturation.hpp"

namespace gapq {

using Complex = std::complex<double>;

std::complex<double> batch_pgf(const BatchSizeLaw& law, std::complex<double> z) {
  return law.pgf(z);
}

namespace {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

// Polynomial Richardson extrapolation of f(h) -> f(0) from h, h/2, h/4, ...
// `order` is the power of h in the leading error term (1 for one-sided
// expansions, 2 for central differences).
double richardson_limit(const std::vector<double>& samples, int order) {
  std::vector<double> t = samples;
  const int n = static_cast<int>(t.size());
  for (int k = 1; k < n; ++k) {
    const double factor = std::pow(2.0, order * k);
    for (int m = 0; m + k < n; ++m) {
      t[m] = (factor * t[m + 1] - t[m]) / (factor - 1.0);
    }
  }
  return t[0];
}

}  // namespace

StationaryQueueSolver::StationaryQueueSolver(const ScenarioConfig& cfg, QueueOptions opts)
    : kernel_(cfg, opts.tail), opts_(opts), lags_(kernel_.residual_gaps()) {
  const int n = kernel_.count();
  const double lambda = cfg.batch_rate();

  column_renorm_.resize(n);
  column_renorm_star_.resize(n);
  max_defect_ = 0.0;
  for (int s = 0; s < n; ++s) {
    const double mass = kernel_.column_mass(lags_[s]);
    const double mass_star = lambda > 0.0
                                 ? kernel_.lag_averaged_column_mass(lags_[s], lambda)
                                 : mass;
    max_defect_ = std::max(max_defect_, 1.0 - mass);
    max_defect_ = std::max(max_defect_, 1.0 - mass_star);
    column_renorm_[s] = 1.0 / mass;
    column_renorm_star_[s] = 1.0 / mass_star;
  }
  if (max_defect_ > opts_.defect_error) {
    std::ostringstream os;
    os << "attempt-horizon defect " << max_defect_ << " exceeds " << opts_.defect_error
       << "; increase attempts";
    throw ComputationError(os.str());
  }

  SaturationOptions sat_opts;
  sat_opts.tail = opts_.tail;
  sat_opts.defect_warn = opts_.defect_warn;
  sat_opts.defect_error = opts_.defect_error;
  const SaturatedChain chain = build_saturated_chain(kernel_, sat_opts);
  const double g = mean_service_saturated(kernel_, chain);
  rho_ = cfg.vehicle_rate() * g;
  if (opts_.check_stability && rho_ >= 1.0) {
    std::ostringstream os;
    os << "offered minor-road load rho = " << rho_ << " >= 1";
    throw InstabilityError(rho_, os.str());
  }
}

Eigen::MatrixXcd StationaryQueueSolver::arrivals_matrix(Complex z) const {
  const int n = kernel_.count();
  const Complex s = config().batch_rate() * (1.0 - batch_pgf(config().batch_size, z));
  Eigen::MatrixXcd m(n, n);
  kernel_.eval_matrix(s, lags_, m.data());
  return m;
}

Eigen::MatrixXcd StationaryQueueSolver::exceptional_matrix(Complex z) const {
  const int n = kernel_.count();
  const double lambda = config().batch_rate();
  const Complex s = lambda * (1.0 - batch_pgf(config().batch_size, z));
  Eigen::MatrixXcd m(n, n);
  kernel_.eval_lag_averaged_matrix(s, lags_, lambda, m.data());
  return m;
}

Eigen::MatrixXcd StationaryQueueSolver::renormalized_arrivals(Complex z) const {
  Eigen::MatrixXcd m = arrivals_matrix(z);
  for (int s = 0; s < m.cols(); ++s) m.col(s) *= column_renorm_[s];
  return m;
}

Eigen::MatrixXcd StationaryQueueSolver::renormalized_exceptional(Complex z) const {
  Eigen::MatrixXcd m = exceptional_matrix(z);
  for (int s = 0; s < m.cols(); ++s) m.col(s) *= column_renorm_star_[s];
  return m;
}

Eigen::MatrixXcd StationaryQueueSolver::arrivals_derivative(Complex z) const {
  const int n = kernel_.count();
  const double lambda = config().batch_rate();
  const Complex s = lambda * (1.0 - batch_pgf(config().batch_size, z));
  const Complex ds_dz = -lambda * config().batch_size.pgf_derivative(z);

  std::vector<Dual<Complex>> dual(static_cast<std::size_t>(n) * n);
  kernel_.eval_matrix(Dual<Complex>::variable(s), lags_, dual.data());
  Eigen::MatrixXcd out(n, n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) {
      out(r, c) = dual[static_cast<std::size_t>(c) * n + r].d * ds_dz * column_renorm_[c];
    }
  }
  return out;
}

Eigen::VectorXcd StationaryQueueSolver::partial_pgfs(Complex z,
                                                     const Eigen::VectorXd& f0) const {
  const int n = kernel_.count();
  const Complex bz = batch_pgf(config().batch_size, z);
  const Eigen::MatrixXcd m = renormalized_arrivals(z);
  const Eigen::MatrixXcd mstar = renormalized_exceptional(z);
  Eigen::MatrixXcd a = -m;
  a.diagonal().array() += z;
  const Eigen::VectorXcd b = (bz * mstar - m) * f0.cast<Complex>();
  return a.partialPivLu().solve(b);
}

std::complex<double> StationaryQueueSolver::log_det_phase(Complex z) const {
  Eigen::MatrixXcd a = -renormalized_arrivals(z);
  a.diagonal().array() += z;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  Complex log_det(0.0, 0.0);
  const auto& diag = lu.matrixLU().diagonal();
  for (int i = 0; i < diag.size(); ++i) log_det += std::log(diag(i));
  if (lu.permutationP().determinant() < 0) log_det += Complex(0.0, M_PI);
  return log_det;
}

double StationaryQueueSolver::contour_winding() const {
  const double radius = 1.0 - opts_.contour_radius_gap;
  const int nodes = opts_.contour_nodes;

  std::vector<double> theta(nodes + 1);
  std::vector<double> phase(nodes + 1);
  for (int i = 0; i <= nodes; ++i) theta[i] = 2.0 * M_PI * i / nodes;
  parallel_for(static_cast<std::size_t>(nodes), [&](std::size_t i) {
    phase[i] = log_det_phase(std::polar(radius, theta[i])).imag();
  });
  phase[nodes] = phase[0];

  // Sum wrapped phase increments, bisecting arcs whose jump is ambiguous.
  double total = 0.0;
  long long extra = 0;
  const long long extra_cap = 1 << 17;
  struct Arc {
    double t0, t1, p0, p1;
    int depth;
  };
  std::vector<Arc> stack;
  for (int i = 0; i < nodes; ++i) {
    stack.push_back({theta[i], theta[i + 1], phase[i], phase[i + 1], 0});
    while (!stack.empty()) {
      const Arc arc = stack.back();
      stack.pop_back();
      const double jump = wrap_angle(arc.p1 - arc.p0);
      if (std::abs(jump) < M_PI / 2.0 || arc.depth >= 48) {
        total += jump;
        continue;
      }
      if (++extra > extra_cap) {
        throw ComputationError("contour winding did not resolve; too many refinements");
      }
      const double tm = 0.5 * (arc.t0 + arc.t1);
      const double pm = log_det_phase(std::polar(radius, tm)).imag();
      stack.push_back({tm, arc.t1, pm, arc.p1, arc.depth + 1});
      stack.push_back({arc.t0, tm, arc.p0, pm, arc.depth + 1});
    }
  }
  return total / (2.0 * M_PI);
}

void StationaryQueueSolver::find_roots() {
  const int n = kernel_.count();
  const int interior_target = n - 1;

  // Stage 1: candidates from per-branch eigenvalue fixed points z = mu_b(A(z)).
  std::vector<Complex> candidates(n, Complex(0.0, 0.0));
  std::vector<char> usable(n, 1);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b) {
    Complex z(0.0, 0.0);
    for (int iter = 0; iter < opts_.fixed_point_max_iter; ++iter) {
      Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(renormalized_arrivals(z), false);
      std::vector<Complex> mu(eig.eigenvalues().data(),
                              eig.eigenvalues().data() + n);
      std::sort(mu.begin(), mu.end(), [](Complex a, Complex b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (ma != mb) return ma > mb;
        return std::arg(a) < std::arg(b);
      });
      const Complex next = mu[b];
      const double step = std::abs(next - z);
      z = next;
      if (std::abs(z) > 1.5) {
        usable[b] = 0;
        break;
      }
      if (step < opts_.fixed_point_tol) break;
    }
    candidates[b] = z;
  });

  // Newton polish on det(zI - A(z)) using the logarithmic derivative.
  auto polish = [&](Complex z) -> std::optional<Complex> {
    for (int iter = 0; iter < opts_.newton_max_iter; ++iter) {
      Eigen::MatrixXcd a = -renormalized_arrivals(z);
      a.diagonal().array() += z;
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
      Eigen::MatrixXcd rhs = -arrivals_derivative(z);
      rhs.diagonal().array() += 1.0;
      const Complex dlog = lu.solve(rhs).trace();
      if (!std::isfinite(dlog.real()) || !std::isfinite(dlog.imag()) ||
          std::abs(dlog) < 1e-300) {
        return std::nullopt;
      }
      const Complex step = 1.0 / dlog;
      z -= step;
      if (std::abs(z) > 2.0) return std::nullopt;
      if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(z))) return z;
    }
    return std::nullopt;
  };

  auto is_interior = [&](Complex z) {
    return std::abs(z) <= 1.0 - opts_.contour_radius_gap &&
           std::abs(z - 1.0) > 1e-9;
  };

  std::vector<Complex> distinct;
  auto merge_candidate = [&](Complex z) {
    for (const Complex& r : distinct) {
      if (std::abs(r - z) < opts_.root_merge_tol) return;
    }
    distinct.push_back(z);
  };

  // The transition matrix is usually rank-deficient (few distinct functional
  // directions across source lags), which makes z = 0 an exact root of high
  // multiplicity; snap near-zero candidates onto it.
  auto snap = [&](Complex z) {
    if (std::abs(z) < 1e-10) return Complex(0.0, 0.0);
    if (std::abs(z.imag()) < 1e-12) return Complex(z.real(), 0.0);
    return z;
  };

  std::vector<std::optional<Complex>> polished(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t b) {
    if (usable[b]) polished[b] = polish(candidates[b]);
  });
  for (const auto& p : polished) {
    if (p && is_interior(*p)) {
      merge_candidate(snap(*p));
      merge_candidate(snap(std::conj(*p)));
    }
  }

  // Multiplicity from the null-space dimension at each root.
  auto nullity_of = [&](Complex z) {
    Eigen::MatrixXcd a = -renormalized_arrivals(z);
    a.diagonal().array() += z;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
    const auto& sv = svd.singularValues();
    int nullity = 0;
    for (int i = 0; i < sv.size(); ++i) {
      if (sv(i) < opts_.null_space_tol * std::max(1.0, sv(0))) ++nullity;
    }
    return nullity;
  };

  const double winding = contour_winding();
  const int contour_count = static_cast<int>(std::lround(winding));
  if (std::abs(winding - contour_count) > 1e-3) {
    std::ostringstream os;
    os << "argument-principle winding " << winding << " is not close to an integer";
    throw ComputationError(os.str());
  }

  auto total_multiplicity = [&](std::vector<int>& mult) {
    mult.resize(distinct.size());
    int total = 0;
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      mult[i] = nullity_of(distinct[i]);
      if (mult[i] == 0) mult[i] = 1;  // polished root, singular beyond SVD tol
      total += mult[i];
    }
    return total;
  };

  std::vector<int> mult;
  int total = total_multiplicity(mult);

  std::mt19937 restart_rng(0x5eed);
  for (int round = 0; round < opts_.restart_rounds && total < contour_count; ++round) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Complex> starts;
    for (int i = 0; i < 4 * n; ++i) {
      const double r = std::sqrt(unif(restart_rng)) * (1.0 - 1e-6);
      const double a = 2.0 * M_PI * unif(restart_rng);
      starts.push_back(std::polar(r, a));
    }
    std::vector<std::optional<Complex>> found(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) { found[i] = polish(starts[i]); });
    for (const auto& p : found) {
      if (p && is_interior(*p)) {
        merge_candidate(snap(*p));
        merge_candidate(snap(std::conj(*p)));
      }
    }
    total = total_multiplicity(mult);
  }

  if (total != contour_count || contour_count != interior_target) {
    std::ostringstream os;
    os << "root count mismatch: found " << total << " interior roots (with "
       << "multiplicity), contour count " << contour_count << ", expected "
       << interior_target;
    throw ComputationError(os.str());
  }

  RootSet rs;
  rs.roots.push_back(Complex(1.0, 0.0));
  rs.multiplicity.push_back(1);
  std::vector<std::size_t> order(distinct.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (distinct[a].real() != distinct[b].real()) {
      return distinct[a].real() < distinct[b].real();
    }
    return distinct[a].imag() < distinct[b].imag();
  });
  for (std::size_t i : order) {
    rs.roots.push_back(distinct[i]);
    rs.multiplicity.push_back(mult[i]);
  }
  rs.interior_count = total;
  roots_ = std::move(rs);
}

const RootSet& StationaryQueueSolver::roots() {
  if (!roots_) find_roots();
  return *roots_;
}

void StationaryQueueSolver::solve_boundary() {
  const int n = kernel_.count();
  const RootSet& rs = roots();

  std::vector<Eigen::RowVectorXd> rows;
  rows.reserve(n - 1);
  for (std::size_t i = 1; i < rs.roots.size(); ++i) {  // skip z = 1
    const Complex z = rs.roots[i];
    if (z.imag() < -1e-10) continue;  // conjugate partner carries these rows
    const bool is_real_root = std::abs(z.imag()) <= 1e-10;
    const int mult = rs.multiplicity[i];

    Eigen::MatrixXcd a = -renormalized_arrivals(z);
    a.diagonal().array() += z;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeFullU);
    // Solvability of the linear system at the singular point requires the
    // left null vectors u to annihilate (B(z) A*(z) - A(z)) f0. Rewriting
    // with u^H A(z) = z u^H and dividing the condition by z keeps it
    // meaningful at the structural root z = 0, where B(0) = 0 would
    // otherwise make it vacuous.
    const Complex b_over_z = config().batch_size.pgf_over_z(z);
    const Eigen::MatrixXcd mstar = renormalized_exceptional(z);

    for (int m = 0; m < mult; ++m) {
      const Eigen::VectorXcd u = svd.matrixU().col(n - 1 - m);
      Eigen::RowVectorXcd row = b_over_z * (u.adjoint() * mstar) - u.adjoint();
      if (is_real_root) {
        // Strip the arbitrary global phase so the row is genuinely real.
        int pivot = 0;
        row.cwiseAbs().maxCoeff(&pivot);
        const Complex ph = row(pivot) / std::abs(row(pivot));
        row /= ph;
        Eigen::RowVectorXd real_row = row.real();
        rows.emplace_back(real_row / real_row.norm());
      } else {
        Eigen::RowVectorXd re = row.real();
        Eigen::RowVectorXd im = row.imag();
        rows.emplace_back(re / re.norm());
        rows.emplace_back(im / im.norm());
      }
    }
  }

  if (static_cast<int>(rows.size()) != n - 1) {
    std::ostringstream os;
    os << "boundary system has " << rows.size() << " conditions, expected " << n - 1;
    throw ComputationError(os.str());
  }

  Eigen::VectorXd f0;
  if (rows.empty()) {
    f0 = Eigen::VectorXd::Ones(n);  // scalar case: normalization alone
  } else {
    Eigen::MatrixXd w(n - 1, n);
    for (int i = 0; i < n - 1; ++i) w.row(i) = rows[i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (n >= 2 && sv(n - 2) < 1e-10 * sv(0)) {
      throw ComputationError(
          "boundary system rank deficiency is not one; root set is suspect");
    }
    f0 = svd.matrixV().col(n - 1);
  }
  if (f0.sum() < 0.0) f0 = -f0;

  // Scale so the departure-epoch PGF has unit total mass at z -> 1-.
  std::vector<double> samples(opts_.richardson_levels);
  double h = opts_.richardson_h0;
  for (int m = 0; m < opts_.richardson_levels; ++m, h *= 0.5) {
    samples[m] = partial_pgfs(Complex(1.0 - h, 0.0), f0).sum().real();
  }
  const double limit = richardson_limit(samples, 1);
  if (!(limit > 0.0)) {
    throw ComputationError("normalization limit of the partial PGFs is not positive");
  }
  f0 /= limit;

  for (int i = 0; i < n; ++i) {
    if (f0(i) < -1e-12) {
      std::ostringstream os;
      os << "empty-queue probability " << f0(i) << " at flat type " << i + 1
         << " is negative beyond tolerance";
      throw ComputationError(os.str());
    }
    f0(i) = std::max(f0(i), 0.0);
  }
  f0_ = std::move(f0);
}

const Eigen::VectorXd& StationaryQueueSolver::empty_probs() {
  if (!f0_) solve_boundary();
  return *f0_;
}

std::complex<double> StationaryQueueSolver::departure_pgf(Complex z) {
  if (std::abs(z - 1.0) < 1e-9) return {1.0, 0.0};
  // z = 0 is a structural determinant root; the zeroth coefficient of every
  // partial PGF is the corresponding empty-queue probability itself.
  if (std::abs(z) < 1e-8) return {empty_probs().sum(), 0.0};
  return partial_pgfs(z, empty_probs()).sum();
}

std::complex<double> StationaryQueueSolver::arbitrary_pgf(Complex z) {
  if (std::abs(z - 1.0) < 1e-9) return {1.0, 0.0};
  const Complex bz = batch_pgf(config().batch_size, z);
  const double mean_b = config().batch_size.mean();
  return departure_pgf(z) * mean_b * (1.0 - z) / (1.0 - bz);
}

void StationaryQueueSolver::ensure_inversion_nodes() {
  int k = opts_.inversion_nodes;
  const double rho = opts_.inversion_radius;
  while (std::pow(rho, k) / (1.0 - std::pow(rho, k)) > opts_.aliasing_bound) {
    k *= 2;
    if (k > (1 << 20)) {
      throw ComputationError("transform inversion aliasing bound unreachable");
    }
  }
  if (inversion_nodes_used_ == k && !inversion_values_.empty()) return;

  empty_probs();  // force the boundary solve before parallel evaluation
  inversion_values_.assign(k / 2 + 1, Complex(0.0, 0.0));
  parallel_for(inversion_values_.size(), [&](std::size_t m) {
    const Complex z = std::polar(rho, 2.0 * M_PI * static_cast<double>(m) / k);
    inversion_values_[m] = partial_pgfs(z, *f0_).sum();
  });
  inversion_nodes_used_ = k;
}

std::vector<double> StationaryQueueSolver::pmf(int n_max, Epoch epoch) {
  ensure_inversion_nodes();
  const int k = inversion_nodes_used_;
  const double rho = opts_.inversion_radius;
  const double mean_b = config().batch_size.mean();

  std::vector<Complex> values(inversion_values_.size());
  for (std::size_t m = 0; m < values.size(); ++m) {
    values[m] = inversion_values_[m];
    if (epoch == Epoch::Arbitrary) {
      const Complex z = std::polar(rho, 2.0 * M_PI * static_cast<double>(m) / k);
      values[m] *= mean_b * (1.0 - z) / (1.0 - batch_pgf(config().batch_size, z));
    }
  }

  std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
  parallel_for(out.size(), [&](std::size_t ni) {
    const double angle = -2.0 * M_PI * static_cast<double>(ni) / k;
    double acc = values[0].real();
    for (int m = 1; m < k / 2; ++m) {
      acc += 2.0 * (values[m] * std::polar(1.0, angle * m)).real();
    }
    acc += (values[k / 2] * std::polar(1.0, angle * (k / 2))).real();
    out[ni] = acc / (static_cast<double>(k) * std::pow(rho, static_cast<double>(ni)));
  });

  for (std::size_t ni = 0; ni < out.size(); ++ni) {
    if (out[ni] < -1e-10) {
      std::ostringstream os;
      os << "inverted pmf entry " << out[ni] << " at n = " << ni
         << " is negative beyond tolerance";
      throw ComputationError(os.str());
    }
    out[ni] = std::max(out[ni], 0.0);
  }
  return out;
}

double StationaryQueueSolver::mean_queue(Epoch epoch) {
  empty_probs();
  const double h0 = std::min(opts_.richardson_h0, (1.0 - rho_) / 8.0);
  const int levels = 4;
  std::vector<double> samples(levels);
  double h = h0;
  for (int m = 0; m < levels; ++m, h *= 0.5) {
    const Complex up = epoch == Epoch::Departure ? departure_pgf(Complex(1.0 + h, 0.0))
                                                 : arbitrary_pgf(Complex(1.0 + h, 0.0));
    const Complex dn = epoch == Epoch::Departure ? departure_pgf(Complex(1.0 - h, 0.0))
                                                 : arbitrary_pgf(Complex(1.0 - h, 0.0));
    samples[m] = (up.real() - dn.real()) / (2.0 * h);
  }
  return richardson_limit(samples, 2);
}

RootSet find_unit_disk_roots(const ScenarioConfig& cfg, QueueOptions opts) {
  StationaryQueueSolver solver(cfg, opts);
  return solver.roots();
}

Eigen::VectorXd solve_empty_probs(const ScenarioConfig& cfg, QueueOptions opts) {
  StationaryQueueSolver solver(cfg, opts);
  return solver.empty_probs();
}

std::complex<double> queue_pgf(const ScenarioConfig& cfg, std::complex<double> z,
                               QueueOptions opts) {
  StationaryQueueSolver solver(cfg, opts);
  return solver.departure_pgf(z);
}

std::complex<double> arbitrary_epoch_pgf(const ScenarioConfig& cfg,
                                         std::complex<double> z, QueueOptions opts) {
  StationaryQueueSolver solver(cfg, opts);
  return solver.arbitrary_pgf(z);
}

std::vector<double> queue_pmf(const ScenarioConfig& cfg, int n_max, Epoch epoch,
                              QueueOptions opts) {
  StationaryQueueSolver solver(cfg, opts);
  return solver.pmf(n_max, epoch);
}

double mean_queue_length(const ScenarioConfig& cfg, Epoch epoch, QueueOptions opts) {
  StationaryQueueSolver solver(cfg, opts);
  return solver.mean_queue(epoch);
}

}  // namespace gapq
