#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "omcool/collocation.hpp"

namespace omcool {

enum class NlpStatus { converged, infeasible, iteration_limit };

inline const char* to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::converged: return "converged";
    case NlpStatus::infeasible: return "infeasible";
    case NlpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

struct SolverOptions {
  double feasibility_tol = 1e-8;   // max-norm of the constraint residual
  double optimality_tol = 1e-6;    // max-norm of the projected gradient
  int max_outer = 30;              // augmented-Lagrangian iterations
  int max_inner = 2000;            // quasi-Newton iterations per outer step
  int lbfgs_memory = 25;
  int multistart = 5;              // perturbed restarts before giving up
  unsigned seed = 20240817u;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double penalty_cap = 1e8;
  double accept_factor = 0.25;     // required constraint-norm drop per outer step
};

struct NlpResult {
  Eigen::VectorXd z;
  NlpStatus status = NlpStatus::iteration_limit;
  double constraint_norm = std::numeric_limits<double>::infinity();
  double objective = 0.0;
  long iterations = 0;  // total inner quasi-Newton iterations
  int outer_iterations = 0;
  std::vector<double> accepted_constraint_norms;  // after each multiplier update
};

namespace detail {

/// Deterministic uniform draw in [-1, 1) from a 64-bit mix; independent of
/// library distribution implementations.
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  double symmetric() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    x ^= x >> 31;
    return 2.0 * (static_cast<double>(x >> 11) * 0x1.0p-53) - 1.0;
  }

 private:
  std::uint64_t state_;
};

/// Augmented-Lagrangian merit on row-scaled constraints, for fixed
/// multipliers and penalty. Scaled and unscaled constraints have the same
/// solution set; the scaling tames the norm spread between corner and
/// interior defect rows, without which the multiplier iteration barely
/// contracts.
struct AlFunction {
  const TranscribedNlp& nlp;
  const Eigen::VectorXd& scale;   // full row-scale vector (defects + boundary)
  const Eigen::VectorXd& lambda;  // multipliers of the scaled constraints
  double mu;

  double value(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd c = nlp.residuals(z).cwiseProduct(scale);
    return nlp.objective(z) + lambda.dot(c) + 0.5 * mu * c.squaredNorm();
  }

  double value_and_grad(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
    const Eigen::VectorXd c = nlp.residuals(z).cwiseProduct(scale);
    const Eigen::VectorXd w = (lambda + mu * c).cwiseProduct(scale);
    grad = nlp.jacobian_transpose_product(z, w);
    if (nlp.free_time) grad[nlp.time_index()] += 1.0;
    return nlp.objective(z) + lambda.dot(c) + 0.5 * mu * c.squaredNorm();
  }
};

/// Full row-scale vector: per-node defect scales, boundary rows unscaled.
inline Eigen::VectorXd full_row_scales(const TranscribedNlp& nlp,
                                       const Eigen::VectorXd& node_scales) {
  const int n = nlp.num_nodes();
  Eigen::VectorXd s = Eigen::VectorXd::Ones(nlp.num_constraints());
  for (int k = 0; k < n; ++k) s.segment(10 * k, 10).setConstant(node_scales[k]);
  return s;
}

/// Fixed preconditioner for the inner quasi-Newton solver, approximating the
/// inverse Gauss-Newton Hessian of the merit. The state block uses the exact
/// factor of (S D)^T (S D) + boundary, the dominant control-independent
/// part; the control and time entries use the Gauss-Newton diagonal.
struct AlPreconditioner {
  const Eigen::LLT<Eigen::MatrixXd>* state_factor = nullptr;
  Eigen::VectorXd tail_inv;  // inverse diagonal for the control (+ time) block
  double inv_mu = 1.0;
  int n_nodes = 0;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    const int n = n_nodes;
    Eigen::VectorXd out(v.size());
    Eigen::Map<const Eigen::Matrix<double, 10, Eigen::Dynamic>> V(v.data(), 10, n);
    Eigen::Map<Eigen::Matrix<double, 10, Eigen::Dynamic>> O(out.data(), 10, n);
    O = state_factor->solve(V.transpose()).transpose();
    out.tail(v.size() - 10 * n) = v.tail(v.size() - 10 * n).cwiseProduct(tail_inv);
    return inv_mu * out;
  }
};

inline Eigen::LLT<Eigen::MatrixXd> make_state_factor(const TranscribedNlp& nlp,
                                                     const Eigen::VectorXd& node_scales) {
  const int n = nlp.num_nodes();
  const Eigen::MatrixXd sd = node_scales.asDiagonal() * nlp.grid.D;
  Eigen::MatrixXd m = sd.transpose() * sd;
  m(0, 0) += 1.0;
  m(n - 1, n - 1) += 1.0;
  return Eigen::LLT<Eigen::MatrixXd>(m);
}

inline AlPreconditioner make_preconditioner(const TranscribedNlp& nlp,
                                            const Eigen::LLT<Eigen::MatrixXd>& state_factor,
                                            const Eigen::VectorXd& node_scales,
                                            const Eigen::VectorXd& z, double mu) {
  AlPreconditioner p;
  p.state_factor = &state_factor;
  p.n_nodes = nlp.num_nodes();
  p.inv_mu = 1.0 / mu;
  const Eigen::VectorXd diag = nlp.gauss_newton_diag(z, node_scales);
  Eigen::VectorXd tail = diag.tail(nlp.num_vars() - 10 * nlp.num_nodes());
  const double floor = 1e-8 * diag.maxCoeff() + 1e-30;
  p.tail_inv = (tail.array() + floor).inverse().matrix();
  return p;
}

/// The merit is an exact quadratic in the state block (the constraints are
/// linear in x for fixed controls and horizon), so the states can be
/// minimized out in one Cholesky solve of the 10N x 10N normal matrix. The
/// quasi-Newton iteration then only has to move the controls and the
/// horizon, which is what rescues convergence once the multipliers grow.
inline bool exact_state_step(const TranscribedNlp& nlp, const Eigen::VectorXd& node_scales,
                             const Eigen::VectorXd& scale, const Eigen::VectorXd& lambda,
                             double mu, Eigen::VectorXd& z) {
  const int n = nlp.num_nodes();
  const double T = nlp.time_of(z);
  const Eigen::MatrixXd& D = nlp.grid.D;
  const Eigen::VectorXd s2 = node_scales.cwiseProduct(node_scales);
  const Eigen::MatrixXd DtS2D = D.transpose() * s2.asDiagonal() * D;

  std::vector<Mat10> A(n), AtA(n);
  for (int k = 0; k < n; ++k) {
    A[k] = system_matrix_full(z[nlp.control_index(k)]);
    AtA[k] = A[k].transpose() * A[k];
  }

  const double half_t = 0.5 * T;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(10 * n, 10 * n);
  for (int j = 0; j < n; ++j) {
    for (int j2 = 0; j2 < n; ++j2) {
      auto block = H.block<10, 10>(10 * j, 10 * j2);
      const double dtd = DtS2D(j, j2);
      for (int c = 0; c < 10; ++c) block(c, c) += dtd;
      block.noalias() -= (half_t * s2[j2] * D(j2, j)) * A[j2];
      block.noalias() -= (half_t * s2[j] * D(j, j2)) * A[j].transpose();
      if (j == j2) block.noalias() += (half_t * half_t * s2[j]) * AtA[j];
    }
  }
  for (int c = 0; c < 10; ++c) {
    H(c, c) += 1.0;
    H(10 * (n - 1) + c, 10 * (n - 1) + c) += 1.0;
  }

  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) return false;

  Eigen::VectorXd z0 = z;
  z0.head(10 * n).setZero();
  const Eigen::VectorXd c0 = nlp.residuals(z0).cwiseProduct(scale);
  const Eigen::VectorXd grad0 =
      nlp.jacobian_transpose_product(z0, (lambda + mu * c0).cwiseProduct(scale));
  const Eigen::VectorXd x_opt = llt.solve((-1.0 / mu) * grad0.head(10 * n));
  if (!x_opt.allFinite()) return false;
  z.head(10 * n) = x_opt;
  return true;
}

struct BoxLbfgsResult {
  int iterations = 0;
  double pg_norm = std::numeric_limits<double>::infinity();
  double value = std::numeric_limits<double>::infinity();
};

/// Bound-constrained L-BFGS with gradient projection and a fixed SPD
/// preconditioner as the initial inverse-Hessian model. Iterates stay inside
/// the box exactly; components pinned at an active bound with an outward
/// gradient are frozen out of the quasi-Newton direction and the search path
/// is projected during backtracking.
template <typename F, typename Precond>
BoxLbfgsResult box_lbfgs(const F& f, Eigen::VectorXd& z, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi, const Precond& precond,
                         double pg_tol, int max_iter, int memory) {
  const Eigen::Index n = z.size();
  const auto clampv = [&](const Eigen::VectorXd& v) { return v.cwiseMax(lo).cwiseMin(hi); };
  z = clampv(z);

  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  double gamma = 1.0;

  Eigen::VectorXd g(n), gnew(n), d(n), gm(n), znew, step;
  BoxLbfgsResult res;
  double fz = f.value_and_grad(z, g);
  res.value = fz;

  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd pg = z - clampv(z - g);
    res.pg_norm = pg.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (res.pg_norm <= pg_tol) return res;

    // Freeze variables pressed against an active bound.
    gm = g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((z[i] <= lo[i] && g[i] > 0.0) || (z[i] >= hi[i] && g[i] < 0.0)) gm[i] = 0.0;
    }

    // Two-loop recursion on the frozen gradient, H0 = gamma * precond.
    d = -gm;
    const int m = static_cast<int>(s_hist.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    d = gamma * precond.apply(d);
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((z[i] <= lo[i] && g[i] > 0.0) || (z[i] >= hi[i] && g[i] < 0.0)) d[i] = 0.0;
    }
    if (!(g.dot(d) < 0.0)) d = -pg;

    // Projected backtracking line search. The merit value carries the plain
    // objective, so sufficient decrease is padded by its own roundoff floor;
    // otherwise endgame steps with tiny true decrease get rejected.
    const double noise = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(fz);
    double alpha_ls = 1.0;
    bool accepted = false;
    double fnew = fz;
    for (int ls = 0; ls < 50; ++ls) {
      znew = clampv(z + alpha_ls * d);
      step = znew - z;
      const double slope = g.dot(step);
      if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
      fnew = f.value(znew);
      if (slope < 0.0 && fnew <= fz + 1e-4 * slope + noise) {
        accepted = true;
        break;
      }
      alpha_ls *= 0.5;
    }
    if (!accepted) {
      // No usable decrease along the quasi-Newton path; probe the projected
      // gradient direction before declaring the subproblem stalled.
      znew = clampv(z - 1e-8 * pg);
      fnew = f.value(znew);
      if (!(fnew <= fz + noise) || znew == z) return res;
      step = znew - z;
    }

    fnew = f.value_and_grad(znew, gnew);
    const Eigen::VectorXd yvec = gnew - g;
    const double sy = step.dot(yvec);
    if (sy > 1e-12 * step.norm() * yvec.norm()) {
      s_hist.push_back(step);
      y_hist.push_back(yvec);
      rho_hist.push_back(1.0 / sy);
      gamma = sy / yvec.dot(precond.apply(yvec));
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    z = znew;
    g = gnew;
    fz = fnew;
    res.value = fz;
  }
  res.iterations = max_iter;
  const Eigen::VectorXd pg = z - clampv(z - g);
  res.pg_norm = pg.lpNorm<Eigen::Infinity>();
  return res;
}

/// One augmented-Lagrangian run from a single starting point.
inline NlpResult solve_al(const TranscribedNlp& nlp, Eigen::VectorXd z, const SolverOptions& opts) {
  const Eigen::VectorXd lo = nlp.lower_bounds();
  const Eigen::VectorXd hi = nlp.upper_bounds();
  z = z.cwiseMax(lo).cwiseMin(hi);

  const Eigen::VectorXd node_scales = nlp.node_row_scales();
  const Eigen::VectorXd scale = full_row_scales(nlp, node_scales);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(nlp.num_constraints());
  double mu = opts.penalty_init;
  double accepted_cn = std::numeric_limits<double>::infinity();
  double recent_best = std::numeric_limits<double>::infinity();
  double prev_obj = nlp.objective(z);
  double inner_tol = std::max(opts.optimality_tol, 1e-2);
  int stalled = 0;

  NlpResult result;
  result.z = z;
  result.status = NlpStatus::iteration_limit;

  const Eigen::LLT<Eigen::MatrixXd> state_factor = make_state_factor(nlp, node_scales);
  for (int outer = 1; outer <= opts.max_outer; ++outer) {
    AlFunction merit{nlp, scale, lambda, mu};
    exact_state_step(nlp, node_scales, scale, lambda, mu, z);
    const AlPreconditioner precond = make_preconditioner(nlp, state_factor, node_scales, z, mu);
    const BoxLbfgsResult inner =
        box_lbfgs(merit, z, lo, hi, precond, inner_tol, opts.max_inner, opts.lbfgs_memory);
    result.iterations += inner.iterations;
    result.outer_iterations = outer;
    exact_state_step(nlp, node_scales, scale, lambda, mu, z);

    const Eigen::VectorXd c_raw = nlp.residuals(z);
    const Eigen::VectorXd c = c_raw.cwiseProduct(scale);
    const double cn = c_raw.lpNorm<Eigen::Infinity>();
    const double obj = nlp.objective(z);
    if (cn < result.constraint_norm || (result.status != NlpStatus::converged && cn <= opts.feasibility_tol)) {
      result.z = z;
      result.constraint_norm = cn;
      result.objective = obj;
    }

    if (cn <= opts.feasibility_tol && inner.pg_norm <= opts.optimality_tol) {
      result.z = z;
      result.constraint_norm = cn;
      result.objective = obj;
      result.status = NlpStatus::converged;
      return result;
    }

    if (cn <= opts.feasibility_tol) {
      // Feasible but not yet stationary. A large penalty amplifies residual
      // roundoff into the merit gradient, so back it off and let the inner
      // solver polish optimality with accurate multipliers.
      lambda += mu * c;
      mu = std::max(opts.penalty_init, mu / opts.penalty_growth);
      inner_tol = opts.optimality_tol;
      continue;
    }

    // A minimum-time iterate still descending in T counts as productive even
    // while the constraint norm lags: feasibility chases a moving horizon
    // there, and raising the penalty freezes the descent while the oversized
    // multiplier updates poison the next subproblems.
    const bool obj_moving =
        nlp.free_time && std::abs(obj - prev_obj) > 1e-3 * (1.0 + std::abs(obj));
    prev_obj = obj;

    if (cn <= opts.accept_factor * accepted_cn || obj_moving || mu >= opts.penalty_cap) {
      Eigen::VectorXd dlambda = mu * c;
      const double dmax = dlambda.lpNorm<Eigen::Infinity>();
      if (dmax > 1e3) dlambda *= 1e3 / dmax;
      lambda += dlambda;
      if (cn <= opts.accept_factor * accepted_cn) {
        accepted_cn = cn;
        result.accepted_constraint_norms.push_back(cn);
      }
    } else {
      mu = std::min(mu * opts.penalty_growth, opts.penalty_cap);
    }

    // Infeasibility means the penalty is exhausted and the constraint norm
    // has genuinely stopped moving, not merely a slow decade.
    if (cn >= 0.7 * recent_best && !obj_moving) {
      if (mu >= opts.penalty_cap && ++stalled >= 3) {
        result.status = NlpStatus::infeasible;
        return result;
      }
    } else {
      stalled = 0;
    }
    recent_best = std::min(recent_best, cn);
    inner_tol = std::clamp(0.05 * cn, opts.optimality_tol, 1e-2);
  }
  return result;
}

}  // namespace detail

/// Solve the transcribed program by an augmented-Lagrangian outer loop with a
/// projected quasi-Newton inner solver, restarting from control-perturbed
/// copies of the guess when a run fails to converge. Deterministic for a
/// fixed seed.
inline NlpResult solve_nlp(const TranscribedNlp& nlp, const Eigen::VectorXd& guess,
                           const SolverOptions& opts = {}) {
  if (guess.size() != nlp.num_vars())
    throw std::invalid_argument("solve_nlp: guess has wrong layout");

  NlpResult best = detail::solve_al(nlp, guess, opts);
  if (best.status == NlpStatus::converged) return best;

  detail::UniformRng rng(opts.seed);
  const int n = nlp.num_nodes();
  for (int attempt = 1; attempt <= opts.multistart; ++attempt) {
    Eigen::VectorXd perturbed = guess;
    for (int k = 0; k < n; ++k)
      perturbed[nlp.control_index(k)] += 0.2 * nlp.g0 * rng.symmetric();
    NlpResult r = detail::solve_al(nlp, perturbed, opts);
    const bool better =
        (r.status == NlpStatus::converged && best.status != NlpStatus::converged) ||
        (r.status == NlpStatus::converged && best.status == NlpStatus::converged &&
         r.objective < best.objective) ||
        (r.status != NlpStatus::converged && best.status != NlpStatus::converged &&
         r.constraint_norm < best.constraint_norm);
    if (better) best = r;
    if (best.status == NlpStatus::converged) return best;
  }
  return best;
}

}  // namespace omcool
