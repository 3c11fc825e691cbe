#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(GAPQ_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gapq_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kExample1 = std::string(GAPQ_CONFIG_DIR) + "/example1.json";
const std::string kExample2 = std::string(GAPQ_CONFIG_DIR) + "/example2_alpha10.json";

}  // namespace

TEST_CASE("validate accepts the shipped configurations") {
  CHECK(run("validate " + kExample1) == 0);
  CHECK(run("validate " + kExample2) == 0);
}

TEST_CASE("malformed configuration exits with the config error code") {
  const fs::path dir = temp_dir("bad");
  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << R"({"major": {"flow_veh_per_hour": -1}})";
  CHECK(run("validate " + bad.string()) == 2);

  const fs::path missing = dir / "missing.json";
  CHECK(run("validate " + missing.string()) == 2);

  CHECK(run("capacity --not-a-flag " + kExample1) == 2);
}

TEST_CASE("capacity runs are byte-stable and carry a manifest") {
  const fs::path dir_a = temp_dir("cap_a");
  const fs::path dir_b = temp_dir("cap_b");
  const std::string sweep = "--q-sweep 300,600";
  REQUIRE(run("capacity " + kExample1 + " " + sweep + " --out-dir " + dir_a.string()) ==
          0);
  REQUIRE(run("capacity " + kExample1 + " " + sweep + " --out-dir " + dir_b.string()) ==
          0);
  const std::string a = slurp(dir_a / "capacity.csv");
  const std::string b = slurp(dir_b / "capacity.csv");
  CHECK(!a.empty());
  CHECK(a == b);
  CHECK(a.find("q_veh_per_hour,capacity_veh_per_hour,exact,defect,attempts") == 0);
  CHECK(fs::exists(dir_a / "capacity.manifest.json"));
}

TEST_CASE("queue analysis refuses an unstable load with exit code 3") {
  CHECK(run("queue " + kExample1 + " --minor-flow 2000 --out-dir " +
            temp_dir("unstable").string()) == 3);
}

TEST_CASE("queue analysis writes both epochs") {
  const fs::path dir = temp_dir("queue");
  REQUIRE(run("queue " + kExample1 + " --minor-flow 200 --nmax 16 --out-dir " +
              dir.string()) == 0);
  const std::string csv = slurp(dir / "queue_pmf.csv");
  CHECK(csv.find("n,probability,epoch") == 0);
  CHECK(csv.find(",departure") != std::string::npos);
  CHECK(csv.find(",arbitrary") != std::string::npos);
}

TEST_CASE("simulate produces per-replication rows and identical reruns") {
  const fs::path dir_a = temp_dir("sim_a");
  const fs::path dir_b = temp_dir("sim_b");
  const std::string args = " --horizon 20000 --warmup 500 --replications 3 --seed 42";
  REQUIRE(run("simulate " + kExample1 + args + " --out-dir " + dir_a.string()) == 0);
  REQUIRE(run("simulate " + kExample1 + args + " --out-dir " + dir_b.string()) == 0);
  const std::string a = slurp(dir_a / "simulate.csv");
  CHECK(a == slurp(dir_b / "simulate.csv"));
  CHECK(a.find("replication,capacity_veh_per_hour") == 0);
  CHECK(fs::exists(dir_a / "simulate.summary.json"));
}

TEST_CASE("compare emits analytic vs simulated rows") {
  const fs::path dir = temp_dir("compare");
  REQUIRE(run("compare " + kExample1 +
              " --q-sweep 400 --horizon 40000 --warmup 1000 --replications 3"
              " --out-dir " +
              dir.string()) == 0);
  const std::string csv = slurp(dir / "compare.csv");
  CHECK(csv.find("q_veh_per_hour,analytic_veh_per_hour,simulated_veh_per_hour,"
                 "ci_half_width,relative_error,analytic_above_ci") == 0);
  CHECK(csv.find("\n400,") != std::string::npos);
}

TEST_CASE("service summary reports the transform and the mean") {
  const fs::path dir = temp_dir("service");
  REQUIRE(run("service " + kExample1 + " --minor-flow 200 --s-points 11 --out-dir " +
              dir.string()) == 0);
  const std::string csv = slurp(dir / "service_lst.csv");
  CHECK(csv.find("s_per_second,transform") == 0);
  // 11 sample rows plus the header.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
}
