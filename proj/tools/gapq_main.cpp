// gapq: analytic capacity, service-time and queue-length computations for a
// priority-controlled intersection, plus a discrete-event simulator to
// validate them.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gapq/equilibrium.hpp"
#include "gapq/errors.hpp"
#include "gapq/queuelen.hpp"
#include "gapq/saturation.hpp"
#include "gapq/scenario.hpp"
#include "gapq/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitComputation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitUnstable = 3;

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  int attempts_override = 0;
  std::uint64_t seed = 1;
};

gapq::ScenarioConfig load_config(const CommonArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) {
    throw gapq::ConfigError(args.config_path, "cannot open configuration file");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  gapq::ScenarioConfig cfg = gapq::parse_config(buffer.str());
  if (args.attempts_override > 0) {
    cfg = gapq::with_attempts(cfg, args.attempts_override);
  }
  return cfg;
}

void apply_minor_flow(gapq::ScenarioConfig& cfg, double minor_flow_veh_h) {
  if (minor_flow_veh_h >= 0.0) {
    cfg.minor_batch_rate_per_hour = minor_flow_veh_h / cfg.batch_size.mean();
  }
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Every CSV is accompanied by a manifest capturing the exact inputs.
void write_manifest(const CommonArgs& args, const std::string& command,
                    const json& parameters, const fs::path& csv_path) {
  json manifest;
  manifest["tool"] = "gapq";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["config_path"] = args.config_path;
  manifest["parameters"] = parameters;
  manifest["output"] = csv_path.filename().string();
  manifest["seed"] = args.seed;
  if (args.attempts_override > 0) manifest["attempts_override"] = args.attempts_override;
  manifest["timestamp_utc"] = timestamp_utc();

  fs::path mp = csv_path;
  mp.replace_extension(".manifest.json");
  std::ofstream out(mp);
  out << manifest.dump(2) << "\n";
}

fs::path open_csv(const CommonArgs& args, const std::string& name, std::ofstream& out) {
  fs::create_directories(args.out_dir);
  fs::path path = fs::path(args.out_dir) / name;
  out.open(path);
  if (!out) throw gapq::ComputationError("cannot write " + path.string());
  return path;
}

std::vector<double> parse_sweep(const std::string& sweep) {
  std::vector<double> out;
  std::stringstream ss(sweep);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw gapq::ConfigError("--q-sweep", "no flow values given");
  return out;
}

int run_validate(const CommonArgs& args) {
  const gapq::ScenarioConfig cfg = load_config(args);
  const gapq::ReuseReport reuse = gapq::check_limited_reuse(cfg);
  const gapq::ServiceKernel kernel(cfg);

  double worst_defect = 0.0;
  for (int t = 0; t < kernel.count(); ++t) {
    worst_defect = std::max(worst_defect, 1.0 - kernel.column_mass(kernel.residual_gap(t)));
  }

  std::cout << "config: OK (" << cfg.profile_count() << " profiles, " << cfg.attempts
            << " attempts, " << cfg.gaps_per_attempt << " gaps per attempt)\n";
  std::cout << "limited gap reuse: "
            << (reuse.holds ? "HOLDS (analysis exact)"
                            : "VIOLATED (analysis is a lower-bound approximation)")
            << "\n";
  const std::size_t shown = std::min<std::size_t>(reuse.violations.size(), 8);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& [first, leaving] = reuse.violations[i];
    std::cout << "  first-attempt gap u(1," << first.gap << "," << first.profile
              << ") < residual gap of type (" << leaving.attempt << "," << leaving.gap
              << "," << leaving.profile << ")\n";
  }
  if (reuse.violations.size() > shown) {
    std::cout << "  ... and " << reuse.violations.size() - shown << " more\n";
  }
  std::cout << "attempt-horizon defect at " << cfg.attempts
            << " attempts: " << format_number(worst_defect) << "\n";
  return kExitOk;
}

int run_capacity(const CommonArgs& args, const std::string& sweep,
                 const std::string& out_name, bool auto_attempts, bool saturate_tail) {
  gapq::ScenarioConfig cfg = load_config(args);
  const std::vector<double> flows = parse_sweep(sweep);

  gapq::SaturationOptions opts;
  if (saturate_tail) opts.tail = gapq::TailMode::Saturate;

  std::ofstream csv;
  const fs::path path = open_csv(args, out_name, csv);
  csv << "q_veh_per_hour,capacity_veh_per_hour,exact,defect,attempts\n";
  for (double flow : flows) {
    gapq::ScenarioConfig point = cfg;
    point.major_flow_veh_per_hour = flow;
    int attempts = point.attempts;
    if (auto_attempts && !saturate_tail) {
      attempts = gapq::attempts_for_defect(point);
      if (attempts != point.attempts) point = gapq::with_attempts(point, attempts);
    }
    const gapq::CapacityResult res = gapq::capacity(point, opts);
    csv << format_number(flow) << "," << format_number(res.capacity_veh_per_hour) << ","
        << (res.exact ? "true" : "false") << "," << format_number(res.defect) << ","
        << attempts << "\n";
    std::cout << "q = " << format_number(flow)
              << " veh/h: capacity = " << format_number(res.capacity_veh_per_hour)
              << " veh/h" << (res.exact ? "" : " (lower bound)") << "\n";
  }
  write_manifest(args, "capacity",
                 {{"q_sweep", flows},
                  {"auto_attempts", auto_attempts},
                  {"saturating_tail", saturate_tail}},
                 path);
  std::cout << "wrote " << path.string() << "\n";
  return kExitOk;
}

int run_queue(const CommonArgs& args, double minor_flow, int nmax,
              const std::string& epoch_sel, const std::string& out_name) {
  gapq::ScenarioConfig cfg = load_config(args);
  apply_minor_flow(cfg, minor_flow);
  if (cfg.vehicle_rate() <= 0.0) {
    throw gapq::ConfigError("minor.batch_rate_per_hour",
                            "queue analysis requires a positive minor-road flow");
  }

  gapq::StationaryQueueSolver solver(cfg);
  const bool departure = epoch_sel == "departure" || epoch_sel == "both";
  const bool arbitrary = epoch_sel == "arbitrary" || epoch_sel == "both";

  std::ofstream csv;
  const fs::path path = open_csv(args, out_name, csv);
  csv << "n,probability,epoch\n";
  std::vector<double> dep, arb;
  if (departure) {
    dep = solver.pmf(nmax, gapq::Epoch::Departure);
    for (int n = 0; n <= nmax; ++n) {
      csv << n << "," << format_number(dep[n]) << ",departure\n";
    }
  }
  if (arbitrary) {
    arb = solver.pmf(nmax, gapq::Epoch::Arbitrary);
    for (int n = 0; n <= nmax; ++n) {
      csv << n << "," << format_number(arb[n]) << ",arbitrary\n";
    }
  }

  std::cout << "rho = " << format_number(solver.load())
            << ", empty-at-departure mass = " << format_number(solver.empty_probs().sum())
            << ", defect = " << format_number(solver.max_defect()) << "\n";
  if (departure) {
    std::cout << "mean queue at departures = "
              << format_number(solver.mean_queue(gapq::Epoch::Departure)) << "\n";
  }
  if (arbitrary) {
    std::cout << "mean queue at arbitrary epochs = "
              << format_number(solver.mean_queue(gapq::Epoch::Arbitrary)) << "\n";
  }
  write_manifest(args, "queue",
                 {{"minor_flow_veh_per_hour", minor_flow},
                  {"n_max", nmax},
                  {"epoch", epoch_sel}},
                 path);
  std::cout << "wrote " << path.string() << "\n";
  return kExitOk;
}

int run_service(const CommonArgs& args, double minor_flow, double s_max, int s_points,
                const std::string& out_name) {
  gapq::ScenarioConfig cfg = load_config(args);
  apply_minor_flow(cfg, minor_flow);

  const gapq::StabilityReport stability = gapq::stability_margin(cfg);
  Eigen::VectorXd f0;
  if (cfg.vehicle_rate() > 0.0 && stability.stable) {
    gapq::StationaryQueueSolver solver(cfg);
    f0 = solver.empty_probs();
  }
  gapq::EquilibriumService law(cfg, f0);

  std::ofstream csv;
  const fs::path path = open_csv(args, out_name, csv);
  csv << "s_per_second,transform\n";
  for (int i = 0; i < s_points; ++i) {
    const double s = s_max * static_cast<double>(i) / (s_points - 1);
    csv << format_number(s) << "," << format_number(law.service_lst(s).real()) << "\n";
  }

  std::cout << "mean service time = " << format_number(law.mean_service()) << " s"
            << (f0.size() == 0 ? " (saturated-queue law)" : "") << "\n";
  std::cout << "rho = " << format_number(stability.rho) << " ("
            << (stability.stable ? "stable" : "UNSTABLE") << ")\n";
  std::cout << "transform mass at s=0 = " << format_number(law.mass()) << "\n";
  write_manifest(args, "service",
                 {{"minor_flow_veh_per_hour", minor_flow},
                  {"s_max", s_max},
                  {"s_points", s_points}},
                 path);
  std::cout << "wrote " << path.string() << "\n";
  return kExitOk;
}

gapq::SimOptions make_sim_options(const CommonArgs& args, const std::string& mode,
                                  const std::string& reuse, long long horizon,
                                  long long warmup, int replications) {
  gapq::SimOptions opts;
  opts.seed = args.seed;
  opts.mode = mode == "open" ? gapq::SimOptions::Mode::Open
                             : gapq::SimOptions::Mode::Saturated;
  opts.reuse = reuse == "limited" ? gapq::SimOptions::Reuse::Limited
                                  : gapq::SimOptions::Reuse::Full;
  opts.horizon_departures = horizon;
  opts.warmup_departures = warmup;
  opts.replications = replications;
  return opts;
}

int run_simulate(const CommonArgs& args, const std::string& mode,
                 const std::string& reuse, long long horizon, long long warmup,
                 int replications, double minor_flow, const std::string& out_name) {
  gapq::ScenarioConfig cfg = load_config(args);
  apply_minor_flow(cfg, minor_flow);
  const gapq::SimOptions opts =
      make_sim_options(args, mode, reuse, horizon, warmup, replications);

  std::ofstream csv;
  const fs::path path = open_csv(args, out_name, csv);
  json summary;
  summary["mode"] = mode;
  summary["reuse"] = reuse;
  summary["seed"] = args.seed;
  summary["replications"] = replications;
  summary["horizon_departures"] = horizon;
  summary["warmup_departures"] = warmup;

  if (opts.mode == gapq::SimOptions::Mode::Saturated) {
    const gapq::CapacitySimResult res = gapq::simulate_capacity(cfg, opts);
    csv << "replication,capacity_veh_per_hour\n";
    for (std::size_t i = 0; i < res.capacity_by_replication.size(); ++i) {
      csv << i + 1 << "," << format_number(res.capacity_by_replication[i]) << "\n";
    }
    summary["capacity_veh_per_hour"] = res.capacity_veh_per_hour.value;
    summary["capacity_std_error"] = res.capacity_veh_per_hour.std_error;
    summary["capacity_ci_half_width"] = res.capacity_veh_per_hour.ci_half_width;
    summary["mean_service_s"] = res.mean_service_s.value;
    std::cout << "capacity = " << format_number(res.capacity_veh_per_hour.value)
              << " +- " << format_number(res.capacity_veh_per_hour.ci_half_width)
              << " veh/h (95% CI)\n";
  } else {
    const gapq::QueueSimResult res = gapq::simulate_queue(cfg, opts);
    csv << "statistic,value,std_error\n";
    csv << "mean_queue_departure," << format_number(res.mean_queue_departure.value)
        << "," << format_number(res.mean_queue_departure.std_error) << "\n";
    csv << "mean_queue_arbitrary," << format_number(res.mean_queue_arbitrary.value)
        << "," << format_number(res.mean_queue_arbitrary.std_error) << "\n";
    csv << "mean_service_s," << format_number(res.mean_service_s.value) << ","
        << format_number(res.mean_service_s.std_error) << "\n";
    summary["mean_queue_departure"] = res.mean_queue_departure.value;
    summary["mean_queue_arbitrary"] = res.mean_queue_arbitrary.value;
    summary["mean_service_s"] = res.mean_service_s.value;
    std::cout << "mean queue at departures = "
              << format_number(res.mean_queue_departure.value) << " +- "
              << format_number(res.mean_queue_departure.ci_half_width) << "\n";
  }

  fs::path sp = path;
  sp.replace_extension(".summary.json");
  std::ofstream sout(sp);
  sout << summary.dump(2) << "\n";
  write_manifest(args, "simulate", summary, path);
  std::cout << "wrote " << path.string() << "\n";
  return kExitOk;
}

int run_compare(const CommonArgs& args, const std::string& sweep, long long horizon,
                long long warmup, int replications, const std::string& reuse,
                bool auto_attempts, const std::string& out_name) {
  gapq::ScenarioConfig cfg = load_config(args);
  const std::vector<double> flows = parse_sweep(sweep);
  const gapq::SimOptions opts =
      make_sim_options(args, "saturated", reuse, horizon, warmup, replications);

  std::ofstream csv;
  const fs::path path = open_csv(args, out_name, csv);
  csv << "q_veh_per_hour,analytic_veh_per_hour,simulated_veh_per_hour,"
         "ci_half_width,relative_error,analytic_above_ci\n";
  for (double flow : flows) {
    gapq::ScenarioConfig point = cfg;
    point.major_flow_veh_per_hour = flow;
    gapq::ScenarioConfig analytic_point = point;
    if (auto_attempts) {
      const int attempts = gapq::attempts_for_defect(point);
      if (attempts != point.attempts) {
        analytic_point = gapq::with_attempts(point, attempts);
      }
    }
    const gapq::CapacityResult ana = gapq::capacity(analytic_point);
    const gapq::CapacitySimResult sim = gapq::simulate_capacity(point, opts);
    const double rel =
        std::abs(ana.capacity_veh_per_hour - sim.capacity_veh_per_hour.value) /
        sim.capacity_veh_per_hour.value;
    const bool above = ana.capacity_veh_per_hour >
                       sim.capacity_veh_per_hour.value +
                           sim.capacity_veh_per_hour.ci_half_width;
    csv << format_number(flow) << "," << format_number(ana.capacity_veh_per_hour) << ","
        << format_number(sim.capacity_veh_per_hour.value) << ","
        << format_number(sim.capacity_veh_per_hour.ci_half_width) << ","
        << format_number(rel) << "," << (above ? "true" : "false") << "\n";
    std::cout << "q = " << format_number(flow) << ": analytic "
              << format_number(ana.capacity_veh_per_hour) << ", simulated "
              << format_number(sim.capacity_veh_per_hour.value) << " +- "
              << format_number(sim.capacity_veh_per_hour.ci_half_width)
              << ", rel err " << format_number(rel)
              << (above ? "  [analytic exceeds simulation CI]" : "") << "\n";
  }
  write_manifest(args, "compare",
                 {{"q_sweep", flows},
                  {"reuse", reuse},
                  {"horizon_departures", horizon},
                  {"warmup_departures", warmup},
                  {"replications", replications},
                  {"auto_attempts", auto_attempts}},
                 path);
  std::cout << "wrote " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gap-acceptance capacity and queue analysis for unsignalized "
               "intersections"};
  app.require_subcommand(1);

  CommonArgs common;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", common.config_path, "scenario configuration (JSON)")
        ->required();
    cmd->add_option("--out-dir", common.out_dir, "output directory");
    cmd->add_option("--attempts-override", common.attempts_override,
                    "re-expand generator gap tables to this many attempts");
    cmd->add_option("--seed", common.seed, "simulation seed");
  };

  CLI::App* validate = app.add_subcommand("validate", "check a configuration");
  add_common(validate);

  CLI::App* capacity_cmd =
      app.add_subcommand("capacity", "analytic capacity over a major-road flow sweep");
  add_common(capacity_cmd);
  std::string sweep = "250,500,750,1000";
  std::string capacity_out = "capacity.csv";
  bool no_auto_attempts = false;
  bool saturate_tail = false;
  capacity_cmd->add_option("--q-sweep", sweep, "comma-separated flows (veh/h)");
  capacity_cmd->add_option("--out", capacity_out, "output CSV name");
  capacity_cmd->add_flag("--no-auto-attempts", no_auto_attempts,
                         "do not grow the attempt horizon to shrink the defect");
  capacity_cmd->add_flag("--saturating-tail", saturate_tail,
                         "reuse the last attempt row beyond the horizon "
                         "(closes the defect exactly; model extension)");

  CLI::App* queue_cmd =
      app.add_subcommand("queue", "stationary queue-length distribution");
  add_common(queue_cmd);
  double minor_flow = -1.0;
  int nmax = 200;
  std::string epoch_sel = "both";
  std::string queue_out = "queue_pmf.csv";
  queue_cmd->add_option("--minor-flow", minor_flow, "minor-road flow (veh/h)");
  queue_cmd->add_option("--nmax", nmax, "largest queue length in the table");
  queue_cmd->add_option("--epoch", epoch_sel, "departure | arbitrary | both")
      ->check(CLI::IsMember({"departure", "arbitrary", "both"}));
  queue_cmd->add_option("--out", queue_out, "output CSV name");

  CLI::App* service_cmd =
      app.add_subcommand("service", "equilibrium service-time transform and mean");
  add_common(service_cmd);
  double service_minor_flow = -1.0;
  double s_max = 1.0;
  int s_points = 101;
  std::string service_out = "service_lst.csv";
  service_cmd->add_option("--minor-flow", service_minor_flow, "minor-road flow (veh/h)");
  service_cmd->add_option("--s-max", s_max, "largest transform argument (1/s)");
  service_cmd->add_option("--s-points", s_points, "number of sample points");
  service_cmd->add_option("--out", service_out, "output CSV name");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "discrete-event simulation");
  add_common(sim_cmd);
  std::string mode = "saturated";
  std::string reuse = "full";
  long long horizon = 1'000'000;
  long long warmup = 10'000;
  int replications = 10;
  double sim_minor_flow = -1.0;
  std::string sim_out = "simulate.csv";
  sim_cmd->add_option("--mode", mode, "saturated | open")
      ->check(CLI::IsMember({"saturated", "open"}));
  sim_cmd->add_option("--reuse", reuse, "full | limited")
      ->check(CLI::IsMember({"full", "limited"}));
  sim_cmd->add_option("--horizon", horizon, "departures per replication");
  sim_cmd->add_option("--warmup", warmup, "departures discarded per replication");
  sim_cmd->add_option("--replications", replications, "independent replications");
  sim_cmd->add_option("--minor-flow", sim_minor_flow, "minor-road flow (veh/h)");
  sim_cmd->add_option("--out", sim_out, "output CSV name");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "analytic capacity vs simulation over a sweep");
  add_common(compare_cmd);
  std::string cmp_sweep = "250,500,750,1000";
  long long cmp_horizon = 1'000'000;
  long long cmp_warmup = 10'000;
  int cmp_replications = 10;
  std::string cmp_reuse = "full";
  std::string cmp_out = "compare.csv";
  bool cmp_no_auto = false;
  compare_cmd->add_option("--q-sweep", cmp_sweep, "comma-separated flows (veh/h)");
  compare_cmd->add_option("--horizon", cmp_horizon, "departures per replication");
  compare_cmd->add_option("--warmup", cmp_warmup, "departures discarded");
  compare_cmd->add_option("--replications", cmp_replications, "replications");
  compare_cmd->add_option("--reuse", cmp_reuse, "full | limited")
      ->check(CLI::IsMember({"full", "limited"}));
  compare_cmd->add_option("--out", cmp_out, "output CSV name");
  compare_cmd->add_flag("--no-auto-attempts", cmp_no_auto,
                        "do not grow the attempt horizon for the analytic side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (validate->parsed()) return run_validate(common);
    if (capacity_cmd->parsed()) {
      return run_capacity(common, sweep, capacity_out, !no_auto_attempts, saturate_tail);
    }
    if (queue_cmd->parsed()) {
      return run_queue(common, minor_flow, nmax, epoch_sel, queue_out);
    }
    if (service_cmd->parsed()) {
      return run_service(common, service_minor_flow, s_max, s_points, service_out);
    }
    if (sim_cmd->parsed()) {
      return run_simulate(common, mode, reuse, horizon, warmup, replications,
                          sim_minor_flow, sim_out);
    }
    if (compare_cmd->parsed()) {
      return run_compare(common, cmp_sweep, cmp_horizon, cmp_warmup, cmp_replications,
                         cmp_reuse, !cmp_no_auto, cmp_out);
    }
  } catch (const gapq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const gapq::InstabilityError& e) {
    std::cerr << "unstable: " << e.what() << "\n";
    return kExitUnstable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitComputation;
  }
  return kExitOk;
}
