#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "omcool/barycentric.hpp"

namespace omcool {

using StateVec = Eigen::Matrix<double, 10, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat10 = Eigen::Matrix<double, 10, 10>;

/// Component order of the 10-dimensional second-moment state vector.
enum StateIndex : int { kJ1 = 0, kJ3, kK2, kQ2, kJ0, kQ1, kK1, kQ3, kK3, kJ2 };

/// Normalized second-moment state. Subsystem a = (J1, J3, K2, Q2) carries the
/// photon-phonon population imbalance, subsystem b = (J0, Q1, K1, Q3, K3, J2)
/// the total population and cross moments. Stored as one contiguous 10-vector
/// in the order (J1, J3, K2, Q2, J0, Q1, K1, Q3, K3, J2).
struct FullState {
  StateVec v = StateVec::Zero();

  FullState() = default;
  explicit FullState(const StateVec& values) : v(values) {}

  Eigen::Vector4d a() const { return v.head<4>(); }
  Eigen::Matrix<double, 6, 1> b() const { return v.tail<6>(); }

  double j1() const { return v[kJ1]; }
  double j3() const { return v[kJ3]; }
  double k2() const { return v[kK2]; }
  double q2() const { return v[kQ2]; }
  double j0() const { return v[kJ0]; }
  double q1() const { return v[kQ1]; }
  double k1() const { return v[kK1]; }
  double q3() const { return v[kQ3]; }
  double k3() const { return v[kK3]; }
  double j2() const { return v[kJ2]; }
};

/// Symmetric bound on the coupling rate, |g(t)| <= g0, in units of the
/// mechanical frequency.
struct CouplingBound {
  double g0;
  explicit CouplingBound(double bound) : g0(bound) {
    if (!(bound > 0.0)) throw std::invalid_argument("CouplingBound: bound must be positive");
  }
};

/// 4x4 system matrix of the (J1, J3, K2, Q2) subsystem for coupling rate g.
inline Mat4 system_matrix_a(double g) {
  Mat4 m;
  m << 0.0, 2.0 * g, 0.0, 0.0,
      -2.0 * g, 0.0, 2.0 * g, 0.0,
      0.0, 2.0 * g, 0.0, 2.0,
      0.0, 0.0, -2.0, 0.0;
  return m;
}

/// 6x6 system matrix of the (J0, Q1, K1, Q3, K3, J2) subsystem.
inline Mat6 system_matrix_b(double g) {
  Mat6 m;
  m << 0.0, -2.0 * g, 0.0, 0.0, 0.0, 0.0,
      -2.0 * g, 0.0, -2.0, 2.0 * g, 0.0, 0.0,
      0.0, 2.0, 0.0, 0.0, 2.0 * g, 0.0,
      0.0, -2.0 * g, 0.0, 0.0, -2.0, 0.0,
      0.0, 0.0, -2.0 * g, 2.0, 0.0, -2.0 * g,
      0.0, 0.0, 0.0, 0.0, -2.0 * g, 0.0;
  return m;
}

/// Block-diagonal 10x10 system matrix acting on the full state.
inline Mat10 system_matrix_full(double g) {
  Mat10 m = Mat10::Zero();
  m.topLeftCorner<4, 4>() = system_matrix_a(g);
  m.bottomRightCorner<6, 6>() = system_matrix_b(g);
  return m;
}

/// Derivative of the system matrices with respect to g (constant matrices).
inline Mat4 system_matrix_a_dg() {
  Mat4 m;
  m << 0.0, 2.0, 0.0, 0.0,
      -2.0, 0.0, 2.0, 0.0,
      0.0, 2.0, 0.0, 0.0,
      0.0, 0.0, 0.0, 0.0;
  return m;
}

inline Mat6 system_matrix_b_dg() {
  Mat6 m;
  m << 0.0, -2.0, 0.0, 0.0, 0.0, 0.0,
      -2.0, 0.0, 0.0, 2.0, 0.0, 0.0,
      0.0, 0.0, 0.0, 0.0, 2.0, 0.0,
      0.0, -2.0, 0.0, 0.0, 0.0, 0.0,
      0.0, 0.0, -2.0, 0.0, 0.0, -2.0,
      0.0, 0.0, 0.0, 0.0, -2.0, 0.0;
  return m;
}

/// dx/dt for the full 10-dimensional system, written out entrywise.
inline void rhs_inplace(const StateVec& x, double g, StateVec& out) {
  const double g2 = 2.0 * g;
  out[kJ1] = g2 * x[kJ3];
  out[kJ3] = -g2 * x[kJ1] + g2 * x[kK2];
  out[kK2] = g2 * x[kJ3] + 2.0 * x[kQ2];
  out[kQ2] = -2.0 * x[kK2];
  out[kJ0] = -g2 * x[kQ1];
  out[kQ1] = -g2 * x[kJ0] - 2.0 * x[kK1] + g2 * x[kQ3];
  out[kK1] = 2.0 * x[kQ1] + g2 * x[kK3];
  out[kQ3] = -g2 * x[kQ1] - 2.0 * x[kK3];
  out[kK3] = -g2 * x[kK1] + 2.0 * x[kQ3] - g2 * x[kJ2];
  out[kJ2] = -g2 * x[kK3];
}

inline FullState rhs(const FullState& state, double g) {
  FullState d;
  rhs_inplace(state.v, g, d.v);
  return d;
}

/// Transpose apply: out = A(g)^T u, with A the block-diagonal system matrix.
inline void rhs_transpose_inplace(const StateVec& u, double g, StateVec& out) {
  const double g2 = 2.0 * g;
  out[kJ1] = -g2 * u[kJ3];
  out[kJ3] = g2 * u[kJ1] + g2 * u[kK2];
  out[kK2] = g2 * u[kJ3] - 2.0 * u[kQ2];
  out[kQ2] = 2.0 * u[kK2];
  out[kJ0] = -g2 * u[kQ1];
  out[kQ1] = -g2 * u[kJ0] + 2.0 * u[kK1] - g2 * u[kQ3];
  out[kK1] = -2.0 * u[kQ1] - g2 * u[kK3];
  out[kQ3] = g2 * u[kQ1] + 2.0 * u[kK3];
  out[kK3] = g2 * u[kK1] - 2.0 * u[kQ3] - g2 * u[kJ2];
  out[kJ2] = -g2 * u[kK3];
}

/// out = (dA/dg) x, the control direction of the bilinear dynamics.
inline void control_direction_inplace(const StateVec& x, StateVec& out) {
  out[kJ1] = 2.0 * x[kJ3];
  out[kJ3] = -2.0 * x[kJ1] + 2.0 * x[kK2];
  out[kK2] = 2.0 * x[kJ3];
  out[kQ2] = 0.0;
  out[kJ0] = -2.0 * x[kQ1];
  out[kQ1] = -2.0 * x[kJ0] + 2.0 * x[kQ3];
  out[kK1] = 2.0 * x[kK3];
  out[kQ3] = -2.0 * x[kQ1];
  out[kK3] = -2.0 * x[kK1] - 2.0 * x[kJ2];
  out[kJ2] = -2.0 * x[kK3];
}

/// Normalized start: all population in the mechanical mode.
inline FullState initial_state() {
  FullState s;
  s.v[kJ1] = -1.0;
  s.v[kJ0] = 1.0;
  return s;
}

/// Normalized target: populations swapped, mechanical mode empty.
inline FullState target_state() {
  FullState s;
  s.v[kJ1] = 1.0;
  s.v[kJ0] = 1.0;
  return s;
}

inline double casimir_a(const FullState& s) {
  return s.k2() * s.k2() + s.q2() * s.q2() - s.j1() * s.j1() - s.j3() * s.j3();
}

inline double casimir_b(const FullState& s) {
  return s.k1() * s.k1() + s.q1() * s.q1() + s.k3() * s.k3() + s.q3() * s.q3() -
         s.j0() * s.j0() - s.j2() * s.j2();
}

/// The two conserved quadratic forms; both equal -1 on trajectories started
/// at initial_state(), pinning the motion to anti-de Sitter manifolds.
inline std::pair<double, double> casimirs(const FullState& s) {
  return {casimir_a(s), casimir_b(s)};
}

/// Mean phonon number for initial thermal occupation n_b, recovered from the
/// normalized state.
inline double phonon_number(const FullState& s, double n_b) {
  if (n_b < 0.0) throw std::invalid_argument("phonon_number: n_b must be non-negative");
  return 0.5 * (n_b + 1.0) * s.j0() - 0.5 * n_b * s.j1() - 0.5;
}

/// Companion mean photon number.
inline double photon_number(const FullState& s, double n_b) {
  if (n_b < 0.0) throw std::invalid_argument("photon_number: n_b must be non-negative");
  return 0.5 * (n_b + 1.0) * s.j0() + 0.5 * n_b * s.j1() - 0.5;
}

/// Rotating-wave reference: under constant g << 1 the (J1, J3) pair rotates
/// about the 2-axis with angular velocity 2g.
inline std::pair<double, double> rwa_state(double g, double t) {
  if (!(g > 0.0)) throw std::invalid_argument("rwa_state: g must be positive");
  return {-std::cos(2.0 * g * t), std::sin(2.0 * g * t)};
}

/// Time of the population swap in the rotating-wave limit.
inline double rwa_swap_time(double g) {
  if (!(g > 0.0)) throw std::invalid_argument("rwa_swap_time: g must be positive");
  return std::numbers::pi / (2.0 * g);
}

/// Control signal g(t) on [0, T]: a constant, a nodal polynomial evaluated by
/// barycentric interpolation (clipped to the coupling bound), or a
/// piecewise-constant table.
class ControlSignal {
 public:
  static ControlSignal constant(double g) {
    ControlSignal c;
    c.kind_ = Kind::kConstant;
    c.constant_ = g;
    return c;
  }

  /// Polynomial control with exact values at the normalized nodes tau in
  /// [-1, 1]; evaluation between nodes interpolates and clips to |g| <= bound.
  static ControlSignal sampled(Eigen::VectorXd tau_nodes, Eigen::VectorXd bary_weights,
                               Eigen::VectorXd values, double horizon, double bound) {
    if (tau_nodes.size() != values.size() || tau_nodes.size() != bary_weights.size())
      throw std::invalid_argument("ControlSignal::sampled: size mismatch");
    if (!(horizon > 0.0)) throw std::invalid_argument("ControlSignal::sampled: horizon must be positive");
    if (!(bound > 0.0)) throw std::invalid_argument("ControlSignal::sampled: bound must be positive");
    ControlSignal c;
    c.kind_ = Kind::kSampled;
    c.nodes_ = std::move(tau_nodes);
    c.bary_ = std::move(bary_weights);
    c.values_ = std::move(values);
    c.horizon_ = horizon;
    c.bound_ = bound;
    return c;
  }

  /// Piecewise-constant control: value i holds on [start_times[i], start_times[i+1]).
  static ControlSignal piecewise(std::vector<double> start_times, std::vector<double> values) {
    if (start_times.empty() || start_times.size() != values.size())
      throw std::invalid_argument("ControlSignal::piecewise: size mismatch");
    for (std::size_t i = 1; i < start_times.size(); ++i) {
      if (!(start_times[i] > start_times[i - 1]))
        throw std::invalid_argument("ControlSignal::piecewise: times must increase");
    }
    ControlSignal c;
    c.kind_ = Kind::kPiecewise;
    c.times_ = std::move(start_times);
    c.pw_values_ = std::move(values);
    return c;
  }

  double operator()(double t) const {
    switch (kind_) {
      case Kind::kConstant:
        return constant_;
      case Kind::kSampled: {
        double tau = 2.0 * t / horizon_ - 1.0;
        tau = std::clamp(tau, -1.0, 1.0);
        const double g = barycentric_eval(nodes_, bary_, values_, tau);
        return std::clamp(g, -bound_, bound_);
      }
      case Kind::kPiecewise: {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto idx = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin() - 1);
        return pw_values_[idx];
      }
    }
    return 0.0;
  }

  /// Discontinuity times strictly inside (t0, t1); empty for smooth signals.
  /// Integrators split their steps here so every stage sees one segment.
  std::vector<double> switch_times_between(double t0, double t1) const {
    std::vector<double> out;
    if (kind_ != Kind::kPiecewise) return out;
    for (double s : times_) {
      if (s > t0 && s < t1) out.push_back(s);
    }
    return out;
  }

  bool piecewise_constant() const { return kind_ == Kind::kPiecewise; }

 private:
  enum class Kind { kConstant, kSampled, kPiecewise };

  ControlSignal() = default;

  Kind kind_ = Kind::kConstant;
  double constant_ = 0.0;
  Eigen::VectorXd nodes_, bary_, values_;
  double horizon_ = 0.0;
  double bound_ = 0.0;
  std::vector<double> times_;
  std::vector<double> pw_values_;
};

}  // namespace omcool
