#include "gapq/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gapq {

using nlohmann::json;

namespace {

constexpr double kProbTol = 1e-12;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end()) {
      throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
  }
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ConfigError(path.empty() ? key : path + "." + key, "missing key");
  }
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) {
    throw ConfigError(path + "." + key, "expected a number");
  }
  return v.get<double>();
}

int require_int(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer()) {
    throw ConfigError(path + "." + key, "expected an integer");
  }
  return v.get<int>();
}

std::vector<double> require_number_array(const json& obj, const char* key,
                                         const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_array() || v.empty()) {
    throw ConfigError(path + "." + key, "expected a non-empty array of numbers");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number()) {
      throw ConfigError(path + "." + key, "expected a non-empty array of numbers");
    }
    out.push_back(e.get<double>());
  }
  return out;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

// --- BatchSizeLaw ------------------------------------------------------------

BatchSizeLaw BatchSizeLaw::deterministic(int n) {
  BatchSizeLaw law;
  law.kind = Kind::Deterministic;
  law.fixed_size = n;
  return law;
}

BatchSizeLaw BatchSizeLaw::geometric(double success_prob) {
  BatchSizeLaw law;
  law.kind = Kind::Geometric;
  law.success_prob = success_prob;
  return law;
}

BatchSizeLaw BatchSizeLaw::explicit_pmf(std::vector<double> pmf) {
  BatchSizeLaw law;
  law.kind = Kind::Explicit;
  law.pmf = std::move(pmf);
  return law;
}

double BatchSizeLaw::mean() const {
  switch (kind) {
    case Kind::Deterministic:
      return static_cast<double>(fixed_size);
    case Kind::Geometric:
      return 1.0 / success_prob;
    case Kind::Explicit: {
      double m = 0.0;
      for (std::size_t n = 0; n < pmf.size(); ++n) m += pmf[n] * static_cast<double>(n + 1);
      return m;
    }
  }
  return 1.0;
}

std::complex<double> BatchSizeLaw::pgf(std::complex<double> z) const {
  switch (kind) {
    case Kind::Deterministic: {
      std::complex<double> out(1.0, 0.0);
      for (int n = 0; n < fixed_size; ++n) out *= z;
      return out;
    }
    case Kind::Geometric:
      // sum_{n>=1} (1-p)^{n-1} p z^n
      return success_prob * z / (1.0 - (1.0 - success_prob) * z);
    case Kind::Explicit: {
      std::complex<double> out(0.0, 0.0);
      std::complex<double> zn(1.0, 0.0);
      for (double pn : pmf) {
        zn *= z;
        out += pn * zn;
      }
      return out;
    }
  }
  return {1.0, 0.0};
}

std::complex<double> BatchSizeLaw::pgf_derivative(std::complex<double> z) const {
  switch (kind) {
    case Kind::Deterministic: {
      std::complex<double> out(static_cast<double>(fixed_size), 0.0);
      for (int n = 1; n < fixed_size; ++n) out *= z;
      return out;
    }
    case Kind::Geometric: {
      const std::complex<double> den = 1.0 - (1.0 - success_prob) * z;
      return success_prob / (den * den);
    }
    case Kind::Explicit: {
      std::complex<double> out(0.0, 0.0);
      std::complex<double> zn(1.0, 0.0);
      for (std::size_t n = 0; n < pmf.size(); ++n) {
        out += pmf[n] * static_cast<double>(n + 1) * zn;
        zn *= z;
      }
      return out;
    }
  }
  return {0.0, 0.0};
}

std::complex<double> BatchSizeLaw::pgf_over_z(std::complex<double> z) const {
  switch (kind) {
    case Kind::Deterministic: {
      std::complex<double> out(1.0, 0.0);
      for (int n = 1; n < fixed_size; ++n) out *= z;
      return out;
    }
    case Kind::Geometric:
      return success_prob / (1.0 - (1.0 - success_prob) * z);
    case Kind::Explicit: {
      std::complex<double> out(0.0, 0.0);
      std::complex<double> zn(1.0, 0.0);
      for (double pn : pmf) {
        out += pn * zn;
        zn *= z;
      }
      return out;
    }
  }
  return {1.0, 0.0};
}

void BatchSizeLaw::validate(const std::string& key_path) const {
  switch (kind) {
    case Kind::Deterministic:
      if (fixed_size < 1) throw ConfigError(key_path, "batch size must be >= 1");
      break;
    case Kind::Geometric:
      if (!(success_prob > 0.0 && success_prob <= 1.0)) {
        throw ConfigError(key_path, "geometric success probability must be in (0,1]");
      }
      break;
    case Kind::Explicit: {
      if (pmf.empty()) throw ConfigError(key_path, "explicit pmf must be non-empty");
      double sum = 0.0;
      for (double pn : pmf) {
        if (pn < 0.0) throw ConfigError(key_path, "pmf entries must be nonnegative");
        sum += pn;
      }
      if (std::abs(sum - 1.0) > kProbTol) {
        throw ConfigError(key_path, "pmf sums to " + fmt(sum) + ", expected 1");
      }
      break;
    }
  }
}

// --- validation ----------------------------------------------------------------

void ScenarioConfig::validate() const {
  if (major_flow_veh_per_hour < 0.0) {
    throw ConfigError("major.flow_veh_per_hour", "must be >= 0");
  }
  if (minor_batch_rate_per_hour < 0.0) {
    throw ConfigError("minor.batch_rate_per_hour", "must be >= 0");
  }
  if (attempts < 1) throw ConfigError("attempts", "must be >= 1");
  if (gaps_per_attempt < 1) throw ConfigError("gaps_per_attempt", "must be >= 1");
  if (profiles.empty()) throw ConfigError("profiles", "at least one profile required");
  batch_size.validate("minor.batch_size");

  double prob_sum = 0.0;
  for (std::size_t r = 0; r < profiles.size(); ++r) {
    const DriverProfile& prof = profiles[r];
    const std::string path = "profiles[" + std::to_string(r) + "]";
    if (!(prof.probability > 0.0 && prof.probability <= 1.0)) {
      throw ConfigError(path + ".probability", "must be in (0,1]");
    }
    if (!(prof.merge_time_s > 0.0)) {
      throw ConfigError(path + ".merge_time_s", "must be > 0");
    }
    prob_sum += prof.probability;

    const GapTable& t = prof.table;
    if (t.attempts != attempts || t.gaps != gaps_per_attempt) {
      throw ConfigError(path + ".gaps", "table is " + std::to_string(t.attempts) + "x" +
                                            std::to_string(t.gaps) + ", expected " +
                                            std::to_string(attempts) + "x" +
                                            std::to_string(gaps_per_attempt));
    }
    for (int i = 0; i < t.attempts; ++i) {
      double row_sum = 0.0;
      for (int k = 0; k < t.gaps; ++k) {
        const std::string cell = path + ".gaps[" + std::to_string(i) + "][" +
                                 std::to_string(k) + "]";
        double u = t.gap(i, k);
        double pk = t.probability(i, k);
        if (!(u > 0.0)) throw ConfigError(cell, "critical gap must be > 0");
        if (!(u > prof.merge_time_s)) {
          throw ConfigError(cell, "critical gap " + fmt(u) + " <= merge time " +
                                      fmt(prof.merge_time_s));
        }
        if (pk < 0.0) throw ConfigError(cell, "gap probability must be >= 0");
        row_sum += pk;
      }
      if (std::abs(row_sum - 1.0) > kProbTol) {
        throw ConfigError(path + ".gaps[" + std::to_string(i) + "]",
                          "gap probabilities sum to " + fmt(row_sum) + ", expected 1");
      }
    }
  }
  if (std::abs(prob_sum - 1.0) > kProbTol) {
    throw ConfigError("profiles", "profile probabilities sum to " + fmt(prob_sum));
  }
}

// --- flatten / unflatten ---------------------------------------------------

int flatten(const TypeIndex& t, const ScenarioConfig& cfg) {
  const int m = cfg.gaps_per_attempt;
  const int r = cfg.profile_count();
  if (t.attempt < 1 || t.attempt > cfg.attempts || t.gap < 1 || t.gap > m ||
      t.profile < 1 || t.profile > r) {
    throw std::out_of_range("type index out of range");
  }
  return (t.attempt - 1) * m * r + (t.gap - 1) * r + t.profile;
}

TypeIndex unflatten(int flat, const ScenarioConfig& cfg) {
  const int m = cfg.gaps_per_attempt;
  const int r = cfg.profile_count();
  if (flat < 1 || flat > cfg.type_count()) {
    throw std::out_of_range("flat type index out of range");
  }
  const int zero = flat - 1;
  TypeIndex t;
  t.profile = zero % r + 1;
  t.gap = (zero / r) % m + 1;
  t.attempt = zero / (m * r) + 1;
  return t;
}

// --- impatience generator ----------------------------------------------------

GapTable generate_impatience_table(const std::vector<double>& base_gaps_s,
                                   const std::vector<double>& base_probs,
                                   double alpha, double merge_time_s, int attempts) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("generator.alpha", "must be in (0,1]");
  }
  if (base_gaps_s.empty() || base_gaps_s.size() != base_probs.size()) {
    throw ConfigError("generator", "base_gaps_s and base_probs must be equal-length");
  }
  if (attempts < 1) throw ConfigError("generator", "attempts must be >= 1");
  for (double u : base_gaps_s) {
    if (!(u > merge_time_s)) {
      throw ConfigError("generator.base_gaps_s",
                        "base gap " + fmt(u) + " <= merge time " + fmt(merge_time_s));
    }
  }

  GapTable out;
  out.attempts = attempts;
  out.gaps = static_cast<int>(base_gaps_s.size());
  out.gap_s.resize(static_cast<std::size_t>(attempts) * out.gaps);
  out.prob.resize(out.gap_s.size());
  for (int k = 0; k < out.gaps; ++k) {
    out.gap_ref(0, k) = base_gaps_s[k];
    out.prob_ref(0, k) = base_probs[k];
  }
  for (int i = 1; i < attempts; ++i) {
    for (int k = 0; k < out.gaps; ++k) {
      out.gap_ref(i, k) = alpha * (out.gap(i - 1, k) - merge_time_s) + merge_time_s;
      out.prob_ref(i, k) = base_probs[k];
    }
  }
  return out;
}

ScenarioConfig with_attempts(const ScenarioConfig& cfg, int attempts) {
  if (attempts < 1) throw ConfigError("attempts", "must be >= 1");
  ScenarioConfig out = cfg;
  out.attempts = attempts;
  for (std::size_t r = 0; r < out.profiles.size(); ++r) {
    DriverProfile& prof = out.profiles[r];
    if (prof.generator) {
      prof.table = generate_impatience_table(prof.generator->base_gaps_s,
                                             prof.generator->base_probs,
                                             prof.generator->alpha,
                                             prof.merge_time_s, attempts);
    } else if (attempts <= prof.table.attempts) {
      GapTable shrunk;
      shrunk.attempts = attempts;
      shrunk.gaps = prof.table.gaps;
      shrunk.gap_s.assign(prof.table.gap_s.begin(),
                          prof.table.gap_s.begin() + static_cast<long>(attempts) * shrunk.gaps);
      shrunk.prob.assign(prof.table.prob.begin(),
                         prof.table.prob.begin() + static_cast<long>(attempts) * shrunk.gaps);
      prof.table = std::move(shrunk);
    } else {
      throw ConfigError("profiles[" + std::to_string(r) + "].gaps",
                        "explicit gap table has " + std::to_string(prof.table.attempts) +
                            " rows and cannot be extended to " + std::to_string(attempts));
    }
  }
  out.validate();
  return out;
}

// --- limited reuse -----------------------------------------------------------

ReuseReport check_limited_reuse(const ScenarioConfig& cfg) {
  ReuseReport report;
  const int n_profiles = cfg.profile_count();
  for (int r1 = 1; r1 <= n_profiles; ++r1) {
    for (int l = 1; l <= cfg.gaps_per_attempt; ++l) {
      const double first_gap = cfg.profiles[r1 - 1].table.gap(0, l - 1);
      for (int r0 = 1; r0 <= n_profiles; ++r0) {
        for (int i = 1; i <= cfg.attempts; ++i) {
          for (int k = 1; k <= cfg.gaps_per_attempt; ++k) {
            const TypeIndex leaving{i, k, r0};
            if (first_gap < cfg.residual_gap(leaving)) {
              report.violations.emplace_back(TypeIndex{1, l, r1}, leaving);
            }
          }
        }
      }
    }
  }
  report.holds = report.violations.empty();
  return report;
}

// --- parse / serialize -------------------------------------------------------

namespace {

GapTable parse_gap_table(const json& gaps, double merge_time_s, int attempts,
                         int gaps_per_attempt, const std::string& path,
                         std::optional<GapGenerator>& generator_out) {
  if (!gaps.is_object()) throw ConfigError(path, "expected an object");
  reject_unknown_keys(gaps, {"explicit", "generator"}, path);
  const bool has_explicit = gaps.contains("explicit");
  const bool has_generator = gaps.contains("generator");
  if (has_explicit == has_generator) {
    throw ConfigError(path, "exactly one of 'explicit' or 'generator' required");
  }

  if (has_generator) {
    const json& g = gaps["generator"];
    const std::string gpath = path + ".generator";
    if (!g.is_object()) throw ConfigError(gpath, "expected an object");
    reject_unknown_keys(g, {"base_gaps_s", "base_probs", "alpha"}, gpath);
    GapGenerator gen;
    gen.base_gaps_s = require_number_array(g, "base_gaps_s", gpath);
    gen.base_probs = require_number_array(g, "base_probs", gpath);
    gen.alpha = require_number(g, "alpha", gpath);
    if (static_cast<int>(gen.base_gaps_s.size()) != gaps_per_attempt) {
      throw ConfigError(gpath + ".base_gaps_s",
                        "expected " + std::to_string(gaps_per_attempt) + " entries");
    }
    if (gen.base_probs.size() != gen.base_gaps_s.size()) {
      throw ConfigError(gpath + ".base_probs", "length mismatch with base_gaps_s");
    }
    generator_out = gen;
    try {
      return generate_impatience_table(gen.base_gaps_s, gen.base_probs, gen.alpha,
                                       merge_time_s, attempts);
    } catch (const ConfigError& e) {
      throw ConfigError(gpath, e.what());
    }
  }

  const json& e = gaps["explicit"];
  const std::string epath = path + ".explicit";
  if (!e.is_object()) throw ConfigError(epath, "expected an object");
  reject_unknown_keys(e, {"u", "p"}, epath);
  const json& u = require(e, "u", epath);
  const json& p = require(e, "p", epath);
  if (!u.is_array() || !p.is_array() || u.size() != p.size() ||
      static_cast<int>(u.size()) != attempts) {
    throw ConfigError(epath, "u and p must be arrays of " + std::to_string(attempts) +
                                 " rows");
  }
  GapTable t;
  t.attempts = attempts;
  t.gaps = gaps_per_attempt;
  t.gap_s.resize(static_cast<std::size_t>(attempts) * gaps_per_attempt);
  t.prob.resize(t.gap_s.size());
  for (int i = 0; i < attempts; ++i) {
    const json& urow = u[i];
    const json& prow = p[i];
    if (!urow.is_array() || static_cast<int>(urow.size()) != gaps_per_attempt ||
        !prow.is_array() || static_cast<int>(prow.size()) != gaps_per_attempt) {
      throw ConfigError(epath + "[" + std::to_string(i) + "]",
                        "expected " + std::to_string(gaps_per_attempt) + " columns");
    }
    for (int k = 0; k < gaps_per_attempt; ++k) {
      if (!urow[k].is_number() || !prow[k].is_number()) {
        throw ConfigError(epath + "[" + std::to_string(i) + "]", "expected numbers");
      }
      t.gap_ref(i, k) = urow[k].get<double>();
      t.prob_ref(i, k) = prow[k].get<double>();
    }
  }
  generator_out = std::nullopt;
  return t;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ConfigError("", std::string("invalid JSON: ") + err.what());
  }
  if (!doc.is_object()) throw ConfigError("", "top-level document must be an object");
  reject_unknown_keys(doc, {"major", "minor", "attempts", "gaps_per_attempt", "profiles"},
                      "");

  ScenarioConfig cfg;

  const json& major = require(doc, "major", "");
  if (!major.is_object()) throw ConfigError("major", "expected an object");
  reject_unknown_keys(major, {"flow_veh_per_hour"}, "major");
  cfg.major_flow_veh_per_hour = require_number(major, "flow_veh_per_hour", "major");

  const json& minor = require(doc, "minor", "");
  if (!minor.is_object()) throw ConfigError("minor", "expected an object");
  reject_unknown_keys(minor, {"batch_rate_per_hour", "batch_size"}, "minor");
  cfg.minor_batch_rate_per_hour = require_number(minor, "batch_rate_per_hour", "minor");

  const json& bs = require(minor, "batch_size", "minor");
  if (!bs.is_object()) throw ConfigError("minor.batch_size", "expected an object");
  const std::string kind = require(bs, "kind", "minor.batch_size").get<std::string>();
  if (kind == "deterministic") {
    reject_unknown_keys(bs, {"kind", "n"}, "minor.batch_size");
    cfg.batch_size = BatchSizeLaw::deterministic(require_int(bs, "n", "minor.batch_size"));
  } else if (kind == "geometric") {
    reject_unknown_keys(bs, {"kind", "success_prob"}, "minor.batch_size");
    cfg.batch_size =
        BatchSizeLaw::geometric(require_number(bs, "success_prob", "minor.batch_size"));
  } else if (kind == "explicit") {
    reject_unknown_keys(bs, {"kind", "pmf"}, "minor.batch_size");
    cfg.batch_size =
        BatchSizeLaw::explicit_pmf(require_number_array(bs, "pmf", "minor.batch_size"));
  } else {
    throw ConfigError("minor.batch_size.kind",
                      "unknown kind '" + kind +
                          "' (expected deterministic, geometric or explicit)");
  }

  cfg.attempts = require_int(doc, "attempts", "");
  cfg.gaps_per_attempt = require_int(doc, "gaps_per_attempt", "");
  if (cfg.attempts < 1) throw ConfigError("attempts", "must be >= 1");
  if (cfg.gaps_per_attempt < 1) throw ConfigError("gaps_per_attempt", "must be >= 1");

  const json& profiles = require(doc, "profiles", "");
  if (!profiles.is_array() || profiles.empty()) {
    throw ConfigError("profiles", "expected a non-empty array");
  }
  for (std::size_t r = 0; r < profiles.size(); ++r) {
    const json& p = profiles[r];
    const std::string path = "profiles[" + std::to_string(r) + "]";
    if (!p.is_object()) throw ConfigError(path, "expected an object");
    reject_unknown_keys(p, {"probability", "merge_time_s", "gaps"}, path);
    DriverProfile prof;
    prof.probability = require_number(p, "probability", path);
    prof.merge_time_s = require_number(p, "merge_time_s", path);
    prof.table = parse_gap_table(require(p, "gaps", path), prof.merge_time_s,
                                 cfg.attempts, cfg.gaps_per_attempt, path + ".gaps",
                                 prof.generator);
    cfg.profiles.push_back(std::move(prof));
  }

  cfg.validate();
  return cfg;
}

std::string serialize_config(const ScenarioConfig& cfg) {
  json doc;
  doc["major"]["flow_veh_per_hour"] = cfg.major_flow_veh_per_hour;
  doc["minor"]["batch_rate_per_hour"] = cfg.minor_batch_rate_per_hour;
  json bs;
  switch (cfg.batch_size.kind) {
    case BatchSizeLaw::Kind::Deterministic:
      bs = {{"kind", "deterministic"}, {"n", cfg.batch_size.fixed_size}};
      break;
    case BatchSizeLaw::Kind::Geometric:
      bs = {{"kind", "geometric"}, {"success_prob", cfg.batch_size.success_prob}};
      break;
    case BatchSizeLaw::Kind::Explicit:
      bs = {{"kind", "explicit"}, {"pmf", cfg.batch_size.pmf}};
      break;
  }
  doc["minor"]["batch_size"] = bs;
  doc["attempts"] = cfg.attempts;
  doc["gaps_per_attempt"] = cfg.gaps_per_attempt;
  doc["profiles"] = json::array();
  for (const DriverProfile& prof : cfg.profiles) {
    json p;
    p["probability"] = prof.probability;
    p["merge_time_s"] = prof.merge_time_s;
    if (prof.generator) {
      p["gaps"]["generator"] = {{"base_gaps_s", prof.generator->base_gaps_s},
                                {"base_probs", prof.generator->base_probs},
                                {"alpha", prof.generator->alpha}};
    } else {
      json u = json::array();
      json pr = json::array();
      for (int i = 0; i < prof.table.attempts; ++i) {
        json urow = json::array();
        json prow = json::array();
        for (int k = 0; k < prof.table.gaps; ++k) {
          urow.push_back(prof.table.gap(i, k));
          prow.push_back(prof.table.probability(i, k));
        }
        u.push_back(urow);
        pr.push_back(prow);
      }
      p["gaps"]["explicit"] = {{"u", u}, {"p", pr}};
    }
    doc["profiles"].push_back(p);
  }
  return doc.dump(2) + "\n";
}

}  // namespace gapq
