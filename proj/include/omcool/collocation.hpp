#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "omcool/barycentric.hpp"
#include "omcool/model.hpp"

namespace omcool {

/// Legendre-Gauss-Lobatto grid on [-1, 1]: N nodes (endpoints plus the roots
/// of P'_{N-1}), quadrature weights summing to 2, barycentric weights and the
/// nodal differentiation matrix.
struct CollocationGrid {
  int n = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::VectorXd bary;
  Eigen::MatrixXd D;
};

namespace detail {

/// P_n(x) and P'_n(x) by the three-term recurrence; the derivative uses
/// (1-x^2) P'_n = n (P_{n-1} - x P_n), so it is only valid for |x| < 1.
template <typename Real>
std::pair<Real, Real> legendre_pair(int n, Real x) {
  if (n == 0) return {Real(1), Real(0)};
  Real pm = 1;
  Real p = x;
  for (int k = 2; k <= n; ++k) {
    const Real pn = ((2 * k - 1) * x * p - (k - 1) * pm) / Real(k);
    pm = p;
    p = pn;
  }
  const Real dp = Real(n) * (pm - x * p) / (1 - x * x);
  return {p, dp};
}

template <typename Real>
Real legendre_value(int n, Real x) {
  if (n == 0) return Real(1);
  Real pm = 1;
  Real p = x;
  for (int k = 2; k <= n; ++k) {
    const Real pn = ((2 * k - 1) * x * p - (k - 1) * pm) / Real(k);
    pm = p;
    p = pn;
  }
  return p;
}

}  // namespace detail

/// Differentiation matrix from nodes and barycentric weights. The diagonal is
/// the negated row sum, so constants are annihilated exactly. Grids built by
/// lgl_grid carry a higher-precision D already; that one is returned as is.
inline Eigen::MatrixXd diff_matrix(const CollocationGrid& grid) {
  if (grid.D.size() > 0) return grid.D;
  const int n = grid.n;
  Eigen::MatrixXd D(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (grid.bary[j] / grid.bary[i]) / (grid.nodes[i] - grid.nodes[j]);
      D(i, j) = d;
      sum += d;
    }
    D(i, i) = -sum;
  }
  return D;
}

/// Build the N-point LGL grid. Interior nodes are found by Newton iteration
/// on P'_{N-1} from Chebyshev-Gauss-Lobatto starting points and symmetrized;
/// quadrature weights are 2 / (N (N-1) P_{N-1}(x)^2) and the barycentric
/// weights use the closed form (-1)^k / |P_{N-1}(x_k)|. Everything runs in
/// extended precision and is rounded on store, which keeps the corner
/// entries of D accurate to ~1e-12 even at N = 130, where the 1/(1 + x_1)
/// amplification would otherwise eat half the double mantissa.
inline CollocationGrid lgl_grid(int n) {
  if (n < 2) throw std::invalid_argument("lgl_grid: need at least 2 nodes");
  using Real = long double;
  const int deg = n - 1;

  std::vector<Real> x(n);
  x[0] = -1;
  x[n - 1] = 1;
  const Real pi = 3.14159265358979323846264338327950288L;
  for (int k = 1; k <= deg - 1; ++k) {
    Real xk = -std::cos(pi * Real(k) / Real(deg));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = detail::legendre_pair<Real>(deg, xk);
      const Real ddp = (2 * xk * dp - Real(deg) * (deg + 1) * p) / (1 - xk * xk);
      const Real step = dp / ddp;
      xk -= step;
      if (std::abs(step) <= Real(1e-19)) break;
    }
    x[k] = xk;
  }
  // The node set is symmetric about the origin; enforce it against roundoff.
  for (int k = 0; k < n / 2; ++k) {
    const Real s = (x[k] - x[n - 1 - k]) / 2;
    x[k] = s;
    x[n - 1 - k] = -s;
  }
  if (n % 2 == 1) x[(n - 1) / 2] = 0;

  std::vector<Real> w(n), b(n);
  const Real scale = Real(n) * Real(deg);
  for (int k = 0; k < n; ++k) {
    const Real p = detail::legendre_value<Real>(deg, x[k]);
    w[k] = 2 / (scale * p * p);
    b[k] = (k % 2 == 0 ? Real(1) : Real(-1)) / std::abs(p);
  }
  Real bmax = 0;
  for (int k = 0; k < n; ++k) bmax = std::max(bmax, std::abs(b[k]));
  for (int k = 0; k < n; ++k) b[k] /= bmax;

  CollocationGrid grid;
  grid.n = n;
  grid.nodes.resize(n);
  grid.weights.resize(n);
  grid.bary.resize(n);
  grid.D.resize(n, n);
  for (int k = 0; k < n; ++k) {
    grid.nodes[k] = static_cast<double>(x[k]);
    grid.weights[k] = static_cast<double>(w[k]);
    grid.bary[k] = static_cast<double>(b[k]);
  }
  for (int i = 0; i < n; ++i) {
    Real sum = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const Real d = (b[j] / b[i]) / (x[i] - x[j]);
      grid.D(i, j) = static_cast<double>(d);
      sum += d;
    }
    grid.D(i, i) = static_cast<double>(-sum);
  }
  return grid;
}

/// Evaluate the interpolating polynomial of nodal values at tau in [-1, 1].
inline double interpolate(const CollocationGrid& grid, const Eigen::VectorXd& values, double tau) {
  if (values.size() != grid.n) throw std::invalid_argument("interpolate: size mismatch");
  if (std::abs(tau) > 1.0 + 1e-12) throw std::invalid_argument("interpolate: tau outside [-1, 1]");
  return barycentric_eval(grid.nodes, grid.bary, values, std::clamp(tau, -1.0, 1.0));
}

/// Control signal interpolating nodal values on the grid, clipped to the bound.
inline ControlSignal sampled_control(const CollocationGrid& grid, Eigen::VectorXd values,
                                     double horizon, double bound) {
  return ControlSignal::sampled(grid.nodes, grid.bary, std::move(values), horizon, bound);
}

struct FixedTime {
  double T;
};

struct FreeTime {
  double lower;
  double upper;
};

/// The discretized minimum-time problem. Decision vector layout:
///   z = (x_0, ..., x_{N-1}, g_0, ..., g_{N-1} [, T])
/// with each x_k a 10-vector. Constraints are the collocation defects
///   sum_j D(k,j) x_j - (T/2) f(x_k, g_k) = 0        (10N rows)
/// followed by the boundary equalities x_0 = start, x_{N-1} = end (20 rows).
/// Controls are boxed to |g_k| <= g0; in free-time mode T is a decision
/// variable with explicit bounds and the objective is T, otherwise the
/// objective is zero (pure feasibility). Treat instances as immutable once
/// configured; evaluation is const and safe to run concurrently.
struct TranscribedNlp {
  CollocationGrid grid;
  double g0 = 0.0;
  bool free_time = false;
  double fixed_T = 0.0;
  double t_lower = 0.0;
  double t_upper = 0.0;
  StateVec start_state = initial_state().v;
  StateVec end_state = target_state().v;

  int num_nodes() const { return grid.n; }
  int num_vars() const { return 11 * grid.n + (free_time ? 1 : 0); }
  int num_constraints() const { return 10 * grid.n + 20; }

  int state_index(int node, int comp) const { return 10 * node + comp; }
  int control_index(int node) const { return 10 * grid.n + node; }
  int time_index() const { return 11 * grid.n; }

  double time_of(const Eigen::VectorXd& z) const { return free_time ? z[time_index()] : fixed_T; }

  Eigen::VectorXd lower_bounds() const {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(num_vars(), -1e20);
    lo.segment(10 * grid.n, grid.n).setConstant(-g0);
    if (free_time) lo[time_index()] = t_lower;
    return lo;
  }

  Eigen::VectorXd upper_bounds() const {
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(num_vars(), 1e20);
    hi.segment(10 * grid.n, grid.n).setConstant(g0);
    if (free_time) hi[time_index()] = t_upper;
    return hi;
  }

  double objective(const Eigen::VectorXd& z) const { return free_time ? z[time_index()] : 0.0; }

  /// Per-node row scales that normalize the defect rows: the corner rows of
  /// D carry norms ~N^2/4 against ~N for interior rows, and that spread is
  /// what a solver has to equalize before multiplier iterations contract.
  Eigen::VectorXd node_row_scales() const {
    Eigen::VectorXd norms = grid.D.rowwise().norm();
    const double lightest = norms.minCoeff();
    return (lightest / norms.array()).matrix();
  }

  /// Exact diagonal of (S J)^T (S J) for defect rows scaled per node (the
  /// system matrices have zero diagonals, so the state-block cross terms
  /// vanish). Used to precondition the inner solver.
  Eigen::VectorXd gauss_newton_diag(const Eigen::VectorXd& z,
                                    const Eigen::VectorXd& node_scales) const {
    const int n = grid.n;
    const double T = time_of(z);
    Eigen::Map<const Eigen::Matrix<double, 10, Eigen::Dynamic>> X(z.data(), 10, n);
    const Eigen::VectorXd colD2 =
        (node_scales.asDiagonal() * grid.D).colwise().squaredNorm();
    Eigen::VectorXd diag(num_vars());
    StateVec xk, tmp;
    double t_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double gj = z[control_index(j)];
      const double s2 = node_scales[j] * node_scales[j];
      const Mat10 A = system_matrix_full(gj);
      for (int c = 0; c < 10; ++c) {
        double v = colD2[j] + s2 * 0.25 * T * T * A.col(c).squaredNorm();
        if (j == 0 || j == n - 1) v += 1.0;
        diag[state_index(j, c)] = v;
      }
      xk = X.col(j);
      control_direction_inplace(xk, tmp);
      diag[control_index(j)] = s2 * 0.25 * T * T * tmp.squaredNorm();
      if (free_time) {
        rhs_inplace(xk, gj, tmp);
        t_sum += s2 * tmp.squaredNorm();
      }
    }
    if (free_time) diag[time_index()] = 0.25 * t_sum;
    return diag;
  }

  Eigen::VectorXd gauss_newton_diag(const Eigen::VectorXd& z) const {
    return gauss_newton_diag(z, Eigen::VectorXd::Ones(grid.n));
  }

  Eigen::VectorXd objective_gradient(const Eigen::VectorXd& z) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(num_vars());
    (void)z;
    if (free_time) grad[time_index()] = 1.0;
    return grad;
  }

  /// Stacked residual vector: defects (node-major), then boundary rows.
  Eigen::VectorXd residuals(const Eigen::VectorXd& z) const {
    const int n = grid.n;
    const double T = time_of(z);
    Eigen::Map<const Eigen::Matrix<double, 10, Eigen::Dynamic>> X(z.data(), 10, n);
    Eigen::VectorXd r(num_constraints());
    Eigen::Map<Eigen::Matrix<double, 10, Eigen::Dynamic>> R(r.data(), 10, n);
    R.noalias() = X * grid.D.transpose();
    StateVec f;
    StateVec xk;
    for (int k = 0; k < n; ++k) {
      xk = X.col(k);
      rhs_inplace(xk, z[control_index(k)], f);
      R.col(k) -= (0.5 * T) * f;
    }
    r.segment(10 * n, 10) = X.col(0) - start_state;
    r.segment(10 * n + 10, 10) = X.col(n - 1) - end_state;
    return r;
  }

  /// J(z)^T w for the constraint Jacobian, assembled from the bilinear
  /// structure: the state block is D (x) I - (T/2) blockdiag A(g_k), the
  /// control columns are -(T/2) (dA/dg) x_k and the time column -f(x_k,g_k)/2.
  Eigen::VectorXd jacobian_transpose_product(const Eigen::VectorXd& z,
                                             const Eigen::VectorXd& w) const {
    const int n = grid.n;
    const double T = time_of(z);
    Eigen::Map<const Eigen::Matrix<double, 10, Eigen::Dynamic>> X(z.data(), 10, n);
    Eigen::Map<const Eigen::Matrix<double, 10, Eigen::Dynamic>> W(w.data(), 10, n);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(num_vars());
    Eigen::Map<Eigen::Matrix<double, 10, Eigen::Dynamic>> G(out.data(), 10, n);
    G.noalias() = W * grid.D;
    StateVec xk, wk, tmp;
    double t_accum = 0.0;
    for (int k = 0; k < n; ++k) {
      xk = X.col(k);
      wk = W.col(k);
      const double gk = z[control_index(k)];
      rhs_transpose_inplace(wk, gk, tmp);
      G.col(k) -= (0.5 * T) * tmp;
      control_direction_inplace(xk, tmp);
      out[control_index(k)] = -(0.5 * T) * wk.dot(tmp);
      if (free_time) {
        rhs_inplace(xk, gk, tmp);
        t_accum += wk.dot(tmp);
      }
    }
    G.col(0) += w.segment(10 * n, 10);
    G.col(n - 1) += w.segment(10 * n + 10, 10);
    if (free_time) out[time_index()] = -0.5 * t_accum;
    return out;
  }

  /// Dense constraint Jacobian, assembled row-block by row-block. Intended
  /// for small grids (derivative checks); the solver itself only needs
  /// transpose products.
  Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd& z) const {
    const int n = grid.n;
    const double T = time_of(z);
    Eigen::Map<const Eigen::Matrix<double, 10, Eigen::Dynamic>> X(z.data(), 10, n);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(num_constraints(), num_vars());
    StateVec xk, tmp;
    for (int k = 0; k < n; ++k) {
      xk = X.col(k);
      const double gk = z[control_index(k)];
      const Mat10 A = system_matrix_full(gk);
      for (int c = 0; c < 10; ++c) {
        const int row = 10 * k + c;
        for (int j = 0; j < n; ++j) J(row, state_index(j, c)) += grid.D(k, j);
        for (int cc = 0; cc < 10; ++cc) J(row, state_index(k, cc)) -= 0.5 * T * A(c, cc);
      }
      control_direction_inplace(xk, tmp);
      for (int c = 0; c < 10; ++c) J(10 * k + c, control_index(k)) = -(0.5 * T) * tmp[c];
      if (free_time) {
        rhs_inplace(xk, gk, tmp);
        for (int c = 0; c < 10; ++c) J(10 * k + c, time_index()) = -0.5 * tmp[c];
      }
    }
    for (int c = 0; c < 10; ++c) {
      J(10 * n + c, state_index(0, c)) = 1.0;
      J(10 * n + 10 + c, state_index(n - 1, c)) = 1.0;
    }
    return J;
  }
};

/// Fixed-horizon feasibility transcription.
inline TranscribedNlp transcribe(CouplingBound bound, const CollocationGrid& grid, FixedTime mode) {
  if (!(mode.T > 0.0)) throw std::invalid_argument("transcribe: T must be positive");
  if (grid.n < 2) throw std::invalid_argument("transcribe: invalid grid");
  TranscribedNlp nlp;
  nlp.grid = grid;
  nlp.g0 = bound.g0;
  nlp.free_time = false;
  nlp.fixed_T = mode.T;
  return nlp;
}

/// Free-horizon transcription minimizing T within [lower, upper].
inline TranscribedNlp transcribe(CouplingBound bound, const CollocationGrid& grid, FreeTime mode) {
  if (!(mode.lower > 0.0) || !(mode.upper > 0.0))
    throw std::invalid_argument("transcribe: time bounds must be positive");
  if (mode.upper < mode.lower) throw std::invalid_argument("transcribe: upper bound below lower");
  if (grid.n < 2) throw std::invalid_argument("transcribe: invalid grid");
  TranscribedNlp nlp;
  nlp.grid = grid;
  nlp.g0 = bound.g0;
  nlp.free_time = true;
  nlp.t_lower = mode.lower;
  nlp.t_upper = mode.upper;
  return nlp;
}

}  // namespace omcool
