#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "omcool/cli.hpp"

using namespace omcool;
using Catch::Matchers::WithinAbs;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / "omcool_cli_test";
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct CaptureStdout {
  std::stringstream buffer;
  std::streambuf* old;
  CaptureStdout() : old(std::cout.rdbuf(buffer.rdbuf())) {}
  ~CaptureStdout() { std::cout.rdbuf(old); }
  std::string str() const { return buffer.str(); }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("staircase subcommand prints the level", "[cli]") {
  CaptureStdout cap;
  const int rc = cli::run({"staircase", "--g0", "0.35"});
  REQUIRE(rc == 0);
  const std::string out = cap.str();
  REQUIRE(out.find("m=3 n=1 G=0.2") != std::string::npos);
  double t = 0.0;
  const auto pos = out.find("T=");
  REQUIRE(pos != std::string::npos);
  t = std::stod(out.substr(pos + 2));
  REQUIRE_THAT(t, WithinAbs(0.5 * std::numbers::pi * std::sqrt(10.0), 1e-9));
}

TEST_CASE("staircase table mode", "[cli]") {
  TempDir dir;
  const std::string out = dir.file("pairs.csv");
  REQUIRE(cli::run({"staircase", "--g0", "0.5", "--table", "--m-max", "5", "--out", out}) == 0);
  const std::string body = slurp(out);
  REQUIRE(body.find("m,n,G,T") != std::string::npos);
  REQUIRE(body.find("3,1,0.2") != std::string::npos);
  REQUIRE(body.find("5,3,") != std::string::npos);
}

TEST_CASE("rwa subcommand writes the analytic swap", "[cli]") {
  TempDir dir;
  const std::string out = dir.file("rwa.csv");
  REQUIRE(cli::run({"rwa", "--g", "0.01", "--out", out}) == 0);
  std::ifstream is(out);
  std::string line, last, header;
  std::getline(is, line);  // units comment
  std::getline(is, header);
  REQUIRE(header == "t,J1,J3");
  int rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty()) last = line;
    ++rows;
  }
  REQUIRE(rows == 1001);
  double t, j1, j3;
  char comma;
  std::istringstream lastrow(last);
  lastrow >> t >> comma >> j1 >> comma >> j3;
  REQUIRE_THAT(t, WithinAbs(50.0 * std::numbers::pi, 1e-9));
  REQUIRE_THAT(j1, WithinAbs(1.0, 1e-9));
}

TEST_CASE("usage errors exit with code 2", "[cli]") {
  REQUIRE(cli::run({"staircase", "--g0", "0.3", "--bogus-flag"}) == 2);
  REQUIRE(cli::run({"staircase"}) == 2);        // missing required option
  REQUIRE(cli::run({"nonsense"}) == 2);         // unknown subcommand
  REQUIRE(cli::run({"rwa", "--g", "-0.5"}) == 2);
  REQUIRE(cli::run({"staircase", "--g0", "-1"}) == 2);
  REQUIRE(cli::run({"verify", "/nonexistent/omcool.json"}) == 2);
}

TEST_CASE("outputs are not overwritten without --force", "[cli]") {
  TempDir dir;
  const std::string out = dir.file("rwa.csv");
  REQUIRE(cli::run({"rwa", "--g", "0.02", "--out", out}) == 0);
  const std::string original = slurp(out);
  REQUIRE(cli::run({"rwa", "--g", "0.05", "--out", out}) == 2);
  REQUIRE(slurp(out) == original);
  REQUIRE(cli::run({"rwa", "--g", "0.05", "--out", out, "--force"}) == 0);
  REQUIRE(slurp(out) != original);
}

TEST_CASE("solve then verify round trips the diagnostics", "[cli]") {
  TempDir dir;
  const std::string out = dir.file("solution.json");
  const std::string traj = dir.file("trajectory.csv");
  CaptureStdout cap;
  const int rc = cli::run({"solve", "--g0", "0.3", "--nodes", "24", "--out", out,
                           "--steps", "20000", "--traj", traj});
  REQUIRE(rc == 0);
  REQUIRE(fs::exists(out));
  REQUIRE(fs::exists(traj));

  const Solution sol = read_solution(out);
  REQUIRE(sol.status == "converged");
  const VerifyReport rep = verify(sol, 20000);
  REQUIRE_THAT(rep.reintegration_error,
               WithinAbs(sol.diagnostics.reintegration_error, 1e-10));
  REQUIRE_THAT(rep.invariant_drift, WithinAbs(sol.diagnostics.invariant_drift, 1e-10));
  REQUIRE_THAT(rep.symmetry_deviation, WithinAbs(sol.diagnostics.symmetry_deviation, 1e-10));

  REQUIRE(cli::run({"verify", out, "--steps", "20000"}) == 0);

  const std::string csv = slurp(traj);
  REQUIRE(csv.find("t,J1,J3,K2,Q2,J0,Q1,K1,Q3,K3,J2,g") != std::string::npos);
}

TEST_CASE("sweep subcommand writes the table", "[cli]") {
  TempDir dir;
  const std::string out = dir.file("sweep.csv");
  CaptureStdout cap;
  const int rc = cli::run({"sweep", "--g0-max", "0.3", "--g0-min", "0.3", "--step", "0.01",
                           "--nodes", "20", "--max-outer", "0", "--out", out});
  REQUIRE(rc == 1);  // staircase fallback rows are flagged, not silently accepted
  const std::string body = slurp(out);
  REQUIRE(body.find("g0,t_star,status,is_bang") != std::string::npos);
  REQUIRE(body.find("staircase_fallback") != std::string::npos);
}
