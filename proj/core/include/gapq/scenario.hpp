#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gapq {

/// Thrown when a configuration document is malformed or violates a model
/// invariant. `key_path` points at the offending entry (e.g. "profiles[1].gaps").
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const { return key_path_; }

private:
  std::string key_path_;
};

/// Distribution of the number of vehicles arriving together on the minor road.
/// Support always starts at 1.
struct BatchSizeLaw {
  enum class Kind { Deterministic, Geometric, Explicit };

  Kind kind = Kind::Deterministic;
  int fixed_size = 1;              // Deterministic
  double success_prob = 1.0;       // Geometric on {1,2,...}
  std::vector<double> pmf;         // Explicit: pmf[n-1] = P(size = n)

  static BatchSizeLaw deterministic(int n);
  static BatchSizeLaw geometric(double success_prob);
  static BatchSizeLaw explicit_pmf(std::vector<double> pmf);

  double mean() const;
  /// Generating function E[z^B], finite for |z| <= 1 (and a neighbourhood of 1).
  std::complex<double> pgf(std::complex<double> z) const;
  double pgf(double z) const { return pgf(std::complex<double>(z, 0.0)).real(); }
  std::complex<double> pgf_derivative(std::complex<double> z) const;
  /// pgf(z) / z, stable at z = 0 (support starts at 1, so the ratio is entire).
  std::complex<double> pgf_over_z(std::complex<double> z) const;

  void validate(const std::string& key_path) const;
};

/// Critical-gap table of one driver profile: `attempts` rows, one per attempt,
/// each row a discrete law over `gaps` candidate gap values (seconds).
struct GapTable {
  int attempts = 0;
  int gaps = 0;
  std::vector<double> gap_s;  // row-major [attempt][gap]
  std::vector<double> prob;

  double gap(int attempt0, int gap0) const { return gap_s[attempt0 * gaps + gap0]; }
  double probability(int attempt0, int gap0) const { return prob[attempt0 * gaps + gap0]; }
  double& gap_ref(int attempt0, int gap0) { return gap_s[attempt0 * gaps + gap0]; }
  double& prob_ref(int attempt0, int gap0) { return prob[attempt0 * gaps + gap0]; }
};

/// Geometric relaxation of critical gaps towards the merge time on successive
/// attempts; `alpha = 1` keeps every row equal to the base row.
struct GapGenerator {
  std::vector<double> base_gaps_s;
  std::vector<double> base_probs;
  double alpha = 1.0;
};

struct DriverProfile {
  double probability = 1.0;
  double merge_time_s = 1.0;
  GapTable table;
  // Retained when the table came from a generator, so the table can be
  // re-expanded for a different attempt horizon.
  std::optional<GapGenerator> generator;
};

/// One customer type: profile `profile` succeeded at attempt `attempt` having
/// sampled gap candidate `gap`. All fields 1-based.
struct TypeIndex {
  int attempt = 1;
  int gap = 1;
  int profile = 1;

  friend bool operator==(const TypeIndex&, const TypeIndex&) = default;
};

/// Full model instance. Rates are stored in the interface unit (per hour) and
/// exposed per second; everything else is seconds.
struct ScenarioConfig {
  double major_flow_veh_per_hour = 0.0;
  double minor_batch_rate_per_hour = 0.0;
  BatchSizeLaw batch_size;
  int attempts = 1;          // N
  int gaps_per_attempt = 1;  // M
  std::vector<DriverProfile> profiles;

  double major_rate() const { return major_flow_veh_per_hour / 3600.0; }      // veh/s
  double batch_rate() const { return minor_batch_rate_per_hour / 3600.0; }    // batches/s
  double vehicle_rate() const { return batch_rate() * batch_size.mean(); }    // veh/s

  int profile_count() const { return static_cast<int>(profiles.size()); }
  int type_count() const { return attempts * gaps_per_attempt * profile_count(); }

  /// Residual gap u - merge_time left behind by a departing vehicle of the
  /// given type (seconds).
  double residual_gap(const TypeIndex& t) const {
    const DriverProfile& p = profiles[t.profile - 1];
    return p.table.gap(t.attempt - 1, t.gap - 1) - p.merge_time_s;
  }

  void validate() const;  // throws ConfigError
};

// --- type index flattening -------------------------------------------------

/// (i,k,r) -> (i-1)*M*R + (k-1)*R + r, a bijection onto {1..N*M*R}.
int flatten(const TypeIndex& t, const ScenarioConfig& cfg);
TypeIndex unflatten(int flat, const ScenarioConfig& cfg);

// --- operations ------------------------------------------------------------

/// Parse a JSON configuration document. Unknown keys are rejected; every model
/// invariant is checked. Rates in the document are per hour.
ScenarioConfig parse_config(const std::string& text);

/// Inverse of parse_config up to formatting; parse(serialize(cfg)) == cfg.
std::string serialize_config(const ScenarioConfig& cfg);

/// Expand a base gap row into an `attempts`-row table where each next row
/// contracts towards the merge time by factor alpha. Probabilities are
/// attempt-independent.
GapTable generate_impatience_table(const std::vector<double>& base_gaps_s,
                                   const std::vector<double>& base_probs,
                                   double alpha, double merge_time_s, int attempts);

/// Rebuild the config for a different attempt horizon. Generator-backed
/// profiles are re-expanded; explicit tables can only shrink.
ScenarioConfig with_attempts(const ScenarioConfig& cfg, int attempts);

/// Result of the limited-gap-reuse check. When `holds`, the residual gap left
/// by any departure is never large enough to cover a successor's entire
/// first-attempt critical gap, and the analytic capacity is exact.
struct ReuseReport {
  bool holds = true;
  // (first-attempt type whose gap is too small, leaving type) pairs.
  std::vector<std::pair<TypeIndex, TypeIndex>> violations;
};

ReuseReport check_limited_reuse(const ScenarioConfig& cfg);

}  // namespace gapq
