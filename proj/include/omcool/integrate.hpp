#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "omcool/model.hpp"

namespace omcool {

/// Time history of a propagation: sample times, full states and the control
/// value at each sample. times[0] = 0 and states[0] is the start state.
struct Trajectory {
  std::vector<double> times;
  std::vector<FullState> states;
  std::vector<double> control_samples;
};

/// Classical fourth-order fixed-step propagation of the second-moment
/// dynamics under the given control. Deterministic; global error O(steps^-4).
/// Throws if the state stops being finite.
inline Trajectory propagate(const ControlSignal& control, double T, long steps,
                            const FullState& start = initial_state()) {
  if (!(T > 0.0)) throw std::invalid_argument("propagate: T must be positive");
  if (steps < 1) throw std::invalid_argument("propagate: steps must be >= 1");

  const double h = T / static_cast<double>(steps);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.control_samples.reserve(steps + 1);

  StateVec x = start.v;
  traj.times.push_back(0.0);
  traj.states.push_back(FullState(x));
  traj.control_samples.push_back(control(0.0));

  StateVec k1, k2, k3, k4, tmp;
  const auto rk4_step = [&](double a, double b, double ga, double gm, double gb) {
    const double dt = b - a;
    rhs_inplace(x, ga, k1);
    tmp = x + (0.5 * dt) * k1;
    rhs_inplace(tmp, gm, k2);
    tmp = x + (0.5 * dt) * k2;
    rhs_inplace(tmp, gm, k3);
    tmp = x + dt * k3;
    rhs_inplace(tmp, gb, k4);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  for (long i = 0; i < steps; ++i) {
    const double t0 = h * static_cast<double>(i);
    const double t1 = h * static_cast<double>(i + 1);
    if (control.piecewise_constant()) {
      // Split the step at control switches; within a segment g is constant,
      // so every stage samples the segment midpoint.
      std::vector<double> cuts = control.switch_times_between(t0, t1);
      cuts.insert(cuts.begin(), t0);
      cuts.push_back(t1);
      for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double g = control(0.5 * (cuts[s] + cuts[s + 1]));
        rk4_step(cuts[s], cuts[s + 1], g, g, g);
      }
    } else {
      rk4_step(t0, t1, control(t0), control(t0 + 0.5 * h), control(t1));
    }

    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "propagate: non-finite state at t = " << t1;
      throw std::runtime_error(msg.str());
    }
    traj.times.push_back(t1);
    traj.states.push_back(FullState(x));
    traj.control_samples.push_back(control(t1));
  }
  return traj;
}

/// Euclidean distance of the final sample from the cooling target.
inline double final_error(const Trajectory& traj) {
  if (traj.states.empty()) throw std::invalid_argument("final_error: empty trajectory");
  return (traj.states.back().v - target_state().v).norm();
}

/// Largest deviation of either conserved quadratic form from -1 over the
/// whole trajectory.
inline double invariant_drift(const Trajectory& traj) {
  if (traj.states.empty()) throw std::invalid_argument("invariant_drift: empty trajectory");
  double drift = 0.0;
  for (const FullState& s : traj.states) {
    drift = std::max(drift, std::abs(casimir_a(s) + 1.0));
    drift = std::max(drift, std::abs(casimir_b(s) + 1.0));
  }
  return drift;
}

/// CSV export, one row per sample, full double precision. Times are in units
/// of 1/omega_m and the control in units of omega_m.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
  if (traj.times.size() != traj.states.size() || traj.times.size() != traj.control_samples.size())
    throw std::invalid_argument("write_trajectory_csv: inconsistent trajectory");
  os << "# t in units of 1/omega_m, g in units of omega_m\n";
  os << "t,J1,J3,K2,Q2,J0,Q1,K1,Q3,K3,J2,g\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    os << traj.times[i];
    for (int c = 0; c < 10; ++c) os << ',' << traj.states[i].v[c];
    os << ',' << traj.control_samples[i] << '\n';
  }
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  write_trajectory_csv(traj, os);
}

}  // namespace omcool
