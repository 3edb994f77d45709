#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "omcool/nlp.hpp"
#include "omcool/reachability.hpp"
#include "support.hpp"

using namespace omcool;
using Catch::Matchers::WithinAbs;

namespace {

Eigen::VectorXd random_point(const TranscribedNlp& nlp, testsupport::Rng& rng) {
  Eigen::VectorXd z(nlp.num_vars());
  const int n = nlp.num_nodes();
  for (int k = 0; k < n; ++k) {
    for (int c = 0; c < 10; ++c) z[nlp.state_index(k, c)] = rng.uniform(-1.5, 1.5);
    z[nlp.control_index(k)] = rng.uniform(-nlp.g0, nlp.g0);
  }
  if (nlp.free_time) z[nlp.time_index()] = rng.uniform(2.0, 6.0);
  return z;
}

Eigen::MatrixXd fd_jacobian(const TranscribedNlp& nlp, const Eigen::VectorXd& z, double h) {
  Eigen::MatrixXd J(nlp.num_constraints(), nlp.num_vars());
  Eigen::VectorXd zp = z, zm = z;
  for (int j = 0; j < nlp.num_vars(); ++j) {
    zp[j] = z[j] + h;
    zm[j] = z[j] - h;
    J.col(j) = (nlp.residuals(zp) - nlp.residuals(zm)) / (2.0 * h);
    zp[j] = z[j];
    zm[j] = z[j];
  }
  return J;
}

}  // namespace

TEST_CASE("analytic jacobian matches central differences", "[nlp]") {
  testsupport::Rng rng(314159);
  const CollocationGrid grid = lgl_grid(7);
  const TranscribedNlp fixed = transcribe(CouplingBound(0.4), grid, FixedTime{3.7});
  const TranscribedNlp free_t = transcribe(CouplingBound(0.4), grid, FreeTime{1.0, 8.0});

  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    for (const TranscribedNlp* nlp : {&fixed, &free_t}) {
      const Eigen::VectorXd z = random_point(*nlp, rng);
      const Eigen::MatrixXd Ja = nlp->dense_jacobian(z);
      const Eigen::MatrixXd Jf = fd_jacobian(*nlp, z, 1e-6);
      for (int r = 0; r < Ja.rows(); ++r)
        for (int c = 0; c < Ja.cols(); ++c) {
          const double rel = std::abs(Ja(r, c) - Jf(r, c)) / std::max(1.0, std::abs(Ja(r, c)));
          worst = std::max(worst, rel);
        }
    }
  }
  REQUIRE(worst < 1e-6);
}

TEST_CASE("jacobian transpose product matches the dense jacobian", "[nlp]") {
  testsupport::Rng rng(2718);
  const CollocationGrid grid = lgl_grid(6);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.5), grid, FreeTime{0.5, 9.0});
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd z = random_point(nlp, rng);
    Eigen::VectorXd w(nlp.num_constraints());
    for (int i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd via_product = nlp.jacobian_transpose_product(z, w);
    const Eigen::VectorXd via_dense = nlp.dense_jacobian(z).transpose() * w;
    REQUIRE((via_product - via_dense).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("control gradient vanishes at zero states", "[nlp]") {
  const CollocationGrid grid = lgl_grid(5);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid, FixedTime{2.0});
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nlp.num_vars());
  for (int k = 0; k < 5; ++k) z[nlp.control_index(k)] = 0.1 * (k + 1) - 0.3;
  const Eigen::MatrixXd J = nlp.dense_jacobian(z);
  for (int k = 0; k < 5; ++k)
    REQUIRE(J.col(nlp.control_index(k)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("trivial feasible program converges immediately", "[nlp]") {
  const CollocationGrid grid = lgl_grid(8);
  TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid, FixedTime{3.0});
  nlp.end_state = initial_state().v;  // both ends pinned to the start

  Eigen::VectorXd z(nlp.num_vars());
  for (int k = 0; k < 8; ++k) {
    for (int c = 0; c < 10; ++c) z[nlp.state_index(k, c)] = initial_state().v[c];
    z[nlp.control_index(k)] = 0.0;
  }
  const NlpResult res = solve_nlp(nlp, z);
  REQUIRE(res.status == NlpStatus::converged);
  REQUIRE(res.constraint_norm <= 1e-13);  // zero up to matrix-product roundoff
  REQUIRE(res.iterations <= 2);
}

TEST_CASE("feasible start from the constant-control oracle converges fast", "[nlp]") {
  const StaircaseEntry e = pair_to_control(3, 1);
  const int n = 70;
  const CollocationGrid grid = lgl_grid(n);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid, FixedTime{e.T});
  const Eigen::MatrixXd states = testsupport::sample_reference_states(e.G, e.T, grid.nodes);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nlp.num_vars());
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < 10; ++c) z[nlp.state_index(k, c)] = states(k, c);
  z.segment(10 * n, n).setConstant(e.G);

  const NlpResult res = solve_nlp(nlp, z);
  REQUIRE(res.status == NlpStatus::converged);
  REQUIRE(res.constraint_norm <= 1e-8);
  REQUIRE(res.outer_iterations <= 5);
}

TEST_CASE("horizon far below the minimum is declared infeasible", "[nlp]") {
  const int n = 24;
  const CollocationGrid grid = lgl_grid(n);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid, FixedTime{2.0});
  SolverOptions opts;
  opts.max_inner = 400;
  opts.multistart = 2;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nlp.num_vars());
  for (int k = 0; k < n; ++k) {
    const double s = 0.5 * (grid.nodes[k] + 1.0);
    for (int c = 0; c < 10; ++c)
      z[nlp.state_index(k, c)] = (1.0 - s) * initial_state().v[c] + s * target_state().v[c];
    z[nlp.control_index(k)] = 0.3;
  }
  const NlpResult res = solve_nlp(nlp, z, opts);
  REQUIRE(res.status != NlpStatus::converged);
  REQUIRE(res.constraint_norm > 1e-4);
}

TEST_CASE("box bounds hold exactly on output", "[nlp]") {
  const int n = 16;
  const CollocationGrid grid = lgl_grid(n);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.25), grid, FreeTime{0.5, 6.0});
  SolverOptions opts;
  opts.max_outer = 6;
  opts.max_inner = 200;
  opts.multistart = 0;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nlp.num_vars());
  for (int k = 0; k < n; ++k) z[nlp.control_index(k)] = 10.0;  // starts outside the box
  z[nlp.time_index()] = 100.0;
  const NlpResult res = solve_nlp(nlp, z, opts);
  for (int k = 0; k < n; ++k) {
    REQUIRE(res.z[nlp.control_index(k)] <= 0.25);
    REQUIRE(res.z[nlp.control_index(k)] >= -0.25);
  }
  REQUIRE(res.z[nlp.time_index()] <= 6.0);
  REQUIRE(res.z[nlp.time_index()] >= 0.5);
}

TEST_CASE("accepted constraint norms decrease monotonically", "[nlp]") {
  const int n = 30;
  const CollocationGrid grid = lgl_grid(n);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid,
                                        FixedTime{pair_to_control(3, 1).T});
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nlp.num_vars());
  for (int k = 0; k < n; ++k) {
    const double s = 0.5 * (grid.nodes[k] + 1.0);
    for (int c = 0; c < 10; ++c)
      z[nlp.state_index(k, c)] = (1.0 - s) * initial_state().v[c] + s * target_state().v[c];
    z[nlp.control_index(k)] = 0.3;
  }
  const NlpResult res = solve_nlp(nlp, z);
  REQUIRE(res.accepted_constraint_norms.size() >= 2);
  for (std::size_t i = 1; i < res.accepted_constraint_norms.size(); ++i)
    REQUIRE(res.accepted_constraint_norms[i] <= res.accepted_constraint_norms[i - 1]);
}

TEST_CASE("fixed seed gives reproducible results", "[nlp]") {
  const int n = 16;
  const CollocationGrid grid = lgl_grid(n);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid, FixedTime{2.5});
  SolverOptions opts;
  opts.max_outer = 4;
  opts.max_inner = 150;
  opts.multistart = 3;
  opts.seed = 777;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nlp.num_vars());
  const NlpResult a = solve_nlp(nlp, z, opts);
  const NlpResult b = solve_nlp(nlp, z, opts);
  REQUIRE(a.z == b.z);
  REQUIRE(a.iterations == b.iterations);
  REQUIRE(a.constraint_norm == b.constraint_norm);
}

TEST_CASE("guess layout is validated", "[nlp]") {
  const CollocationGrid grid = lgl_grid(5);
  const TranscribedNlp nlp = transcribe(CouplingBound(0.3), grid, FixedTime{2.0});
  REQUIRE_THROWS_AS(solve_nlp(nlp, Eigen::VectorXd::Zero(7)), std::invalid_argument);
}
