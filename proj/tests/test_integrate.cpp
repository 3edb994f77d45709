#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "omcool/integrate.hpp"
#include "omcool/reachability.hpp"
#include "support.hpp"

using namespace omcool;
using Catch::Matchers::WithinAbs;

TEST_CASE("uncontrolled start is a fixed point", "[integrate]") {
  const Trajectory traj = propagate(ControlSignal::constant(0.0), 10.0, 1000);
  REQUIRE((traj.states.back().v - initial_state().v).norm() < 1e-12);
  REQUIRE(traj.times.front() == 0.0);
  REQUIRE(traj.times.size() == 1001);
}

TEST_CASE("constant control from the (3,1) pair reaches the target", "[integrate]") {
  const StaircaseEntry e = pair_to_control(3, 1);
  const Trajectory traj = propagate(ControlSignal::constant(e.G), e.T, 20000);
  REQUIRE(final_error(traj) < 1e-6);
}

TEST_CASE("even pair (2,1) misses the target", "[integrate]") {
  const double T = 0.5 * std::numbers::pi * std::sqrt(5.0);
  const Trajectory traj = propagate(ControlSignal::constant(0.4), T, 20000);
  REQUIRE(final_error(traj) > 0.5);
}

TEST_CASE("final error edge cases", "[integrate]") {
  Trajectory at_target;
  at_target.times = {0.0};
  at_target.states = {target_state()};
  at_target.control_samples = {0.0};
  REQUIRE(final_error(at_target) == 0.0);

  Trajectory at_start;
  at_start.times = {0.0};
  at_start.states = {initial_state()};
  at_start.control_samples = {0.0};
  REQUIRE(final_error(at_start) == 2.0);

  REQUIRE_THROWS_AS(final_error(Trajectory{}), std::invalid_argument);
}

TEST_CASE("invariant drift stays tiny under piecewise-constant control", "[integrate]") {
  const long steps = 100000;
  const double T = 10.0;
  const ControlSignal g = ControlSignal::piecewise(
      {0.0, 1.234567, 3.3, 7.000123}, {0.45, -0.3, 0.5, 0.05});
  const Trajectory traj = propagate(g, T, steps);
  REQUIRE(invariant_drift(traj) < 1e-9);

  Trajectory single;
  single.times = {0.0};
  single.states = {initial_state()};
  single.control_samples = {0.0};
  REQUIRE(invariant_drift(single) == 0.0);

  Trajectory zeros;
  zeros.times = {0.0};
  zeros.states = {FullState{}};
  zeros.control_samples = {0.0};
  REQUIRE(invariant_drift(zeros) == 1.0);
}

TEST_CASE("fourth-order convergence", "[integrate]") {
  const ControlSignal g = ControlSignal::constant(0.3);
  const double T = 2.0;
  const StateVec ref = propagate(g, T, 51200).states.back().v;
  const double e_coarse = (propagate(g, T, 100).states.back().v - ref).norm();
  const double e_fine = (propagate(g, T, 200).states.back().v - ref).norm();
  const double ratio = e_coarse / e_fine;
  REQUIRE(ratio > 12.0);
  REQUIRE(ratio < 20.0);
}

TEST_CASE("propagation is linear in the start state", "[integrate]") {
  const ControlSignal g = ControlSignal::piecewise({0.0, 1.0, 2.0}, {0.2, -0.4, 0.35});
  testsupport::Rng rng(99);
  FullState x0;
  for (int c = 0; c < 10; ++c) x0.v[c] = rng.uniform(-1.0, 1.0);
  const double alpha = 2.5;
  FullState scaled;
  scaled.v = alpha * x0.v;
  const StateVec xT = propagate(g, 3.0, 5000, x0).states.back().v;
  const StateVec xT_scaled = propagate(g, 3.0, 5000, scaled).states.back().v;
  REQUIRE((xT_scaled - alpha * xT).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("propagation is deterministic", "[integrate]") {
  const ControlSignal g = ControlSignal::constant(0.21);
  const Trajectory a = propagate(g, 4.0, 4000);
  const Trajectory b = propagate(g, 4.0, 4000);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i)
    REQUIRE(a.states[i].v == b.states[i].v);
}

TEST_CASE("non-finite states abort with a diagnostic", "[integrate]") {
  FullState huge;
  huge.v.setConstant(1e308);
  REQUIRE_THROWS_AS(propagate(ControlSignal::constant(0.5), 10.0, 100, huge), std::runtime_error);
}

TEST_CASE("propagate validates arguments", "[integrate]") {
  REQUIRE_THROWS_AS(propagate(ControlSignal::constant(0.1), -1.0, 10), std::invalid_argument);
  REQUIRE_THROWS_AS(propagate(ControlSignal::constant(0.1), 1.0, 0), std::invalid_argument);
}

TEST_CASE("trajectory CSV export", "[integrate]") {
  const Trajectory traj = propagate(ControlSignal::constant(0.3), 1.0, 4);
  std::ostringstream os;
  write_trajectory_csv(traj, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  REQUIRE(line.rfind("#", 0) == 0);
  std::getline(is, line);
  REQUIRE(line == "t,J1,J3,K2,Q2,J0,Q1,K1,Q3,K3,J2,g");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  REQUIRE(rows == 5);

  // first row: t = 0, initial state, g = 0.3
  std::istringstream is2(os.str());
  std::getline(is2, line);
  std::getline(is2, line);
  std::getline(is2, line);
  double vals[12];
  char comma;
  std::istringstream row(line);
  for (int i = 0; i < 12; ++i) {
    row >> vals[i];
    if (i + 1 < 12) row >> comma;
  }
  REQUIRE(vals[0] == 0.0);
  REQUIRE(vals[1] == -1.0);
  REQUIRE(vals[5] == 1.0);
  REQUIRE(vals[11] == 0.3);
}
