#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "omcool/mintime.hpp"

namespace omcool::cli {

namespace detail {

inline bool refuse_overwrite(const std::string& path, bool force, std::ostream& err) {
  if (!force && !path.empty() && std::filesystem::exists(path)) {
    err << "error: refusing to overwrite " << path << " (pass --force)\n";
    return true;
  }
  return false;
}

inline void add_solver_flags(CLI::App* cmd, SolverOptions& s) {
  cmd->add_option("--feas-tol", s.feasibility_tol, "feasibility tolerance on the constraint norm");
  cmd->add_option("--opt-tol", s.optimality_tol, "optimality tolerance on the projected gradient");
  cmd->add_option("--max-outer", s.max_outer, "augmented-Lagrangian iteration limit");
  cmd->add_option("--multistart", s.multistart, "perturbed restarts before giving up");
  cmd->add_option("--seed", s.seed, "seed for the multistart perturbations");
}

inline void print_report(const Solution& sol, const VerifyReport& rep, std::ostream& os) {
  os << std::setprecision(17);
  os << "t_star = " << sol.t_star << " (units 1/omega_m)\n";
  os << "reintegration_error = " << rep.reintegration_error << '\n';
  os << "invariant_drift = " << rep.invariant_drift << '\n';
  os << "symmetry_deviation = " << rep.symmetry_deviation << '\n';
  os << "steps = " << rep.steps << '\n';
  os << (rep.passed() ? "verification PASSED" : "verification FAILED") << '\n';
}

inline Trajectory reintegrated_trajectory(const Solution& sol, long steps) {
  const Eigen::VectorXd bary = barycentric_weights(sol.tau_nodes);
  const ControlSignal control =
      ControlSignal::sampled(sol.tau_nodes, bary, sol.control, sol.t_star, sol.g0);
  return propagate(control, sol.t_star, steps);
}

}  // namespace detail

/// Command-line entry point. Exit codes: 0 success, 1 infeasible or failed
/// verification, 2 usage error.
inline int run(const std::vector<std::string>& args) {
  CLI::App app{"Minimum-time coupling schedules for cavity optomechanical cooling.\n"
               "Times are in units of 1/omega_m, couplings in units of omega_m."};
  app.require_subcommand(1);

  // solve
  double g0 = 0.0;
  int nodes = 70;
  std::string mode_name = "direct";
  double t_min = -1.0, t_max = -1.0;
  long steps = 100000;
  std::string out_path, traj_path;
  bool force = false;
  SolverOptions solver_opts;

  CLI::App* solve = app.add_subcommand("solve", "solve the minimum-time problem for one bound");
  solve->add_option("--g0", g0, "coupling bound")->required();
  solve->add_option("--nodes", nodes, "number of collocation nodes");
  solve->add_option("--mode", mode_name, "search mode: paper or direct")
      ->check(CLI::IsMember({"paper", "direct"}));
  solve->add_option("--t-min", t_min, "lower time anchor/bound");
  solve->add_option("--t-max", t_max, "upper time bound");
  solve->add_option("--steps", steps, "re-integration steps for verification");
  solve->add_option("--out", out_path, "solution file (JSON)")->required();
  solve->add_option("--traj", traj_path, "also write the re-integrated trajectory CSV");
  solve->add_flag("--force", force, "overwrite existing outputs");
  detail::add_solver_flags(solve, solver_opts);

  // sweep
  double g0_max = 0.0, g0_min = 0.0, g0_step = 0.01;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "minimum time over a descending range of bounds");
  sweep_cmd->add_option("--g0-max", g0_max, "largest coupling bound")->required();
  sweep_cmd->add_option("--g0-min", g0_min, "smallest coupling bound")->required();
  sweep_cmd->add_option("--step", g0_step, "bound decrement")->required();
  sweep_cmd->add_option("--nodes", nodes, "number of collocation nodes");
  sweep_cmd->add_option("--mode", mode_name, "search mode: paper or direct")
      ->check(CLI::IsMember({"paper", "direct"}));
  sweep_cmd->add_option("--t-min", t_min, "lower time anchor for the first row (paper mode)");
  sweep_cmd->add_option("--steps", steps, "re-integration steps for verification");
  sweep_cmd->add_option("--out", out_path, "sweep table (CSV)")->required();
  sweep_cmd->add_flag("--force", force, "overwrite existing outputs");
  detail::add_solver_flags(sweep_cmd, solver_opts);

  // staircase
  int m_max = 15;
  bool table = false;
  CLI::App* stair = app.add_subcommand("staircase", "constant-control staircase level for a bound");
  stair->add_option("--g0", g0, "coupling bound")->required();
  stair->add_flag("--table", table, "print all feasible odd pairs as CSV");
  stair->add_option("--m-max", m_max, "largest m for --table");
  stair->add_option("--out", out_path, "write output to a file instead of stdout");
  stair->add_flag("--force", force, "overwrite existing outputs");

  // verify
  std::string solution_path;
  CLI::App* verify_cmd = app.add_subcommand("verify", "re-integrate and check a solution file");
  verify_cmd->add_option("solution", solution_path, "solution file (JSON)")->required();
  verify_cmd->add_option("--steps", steps, "re-integration steps");
  verify_cmd->add_option("--traj", traj_path, "also write the re-integrated trajectory CSV");
  verify_cmd->add_flag("--force", force, "overwrite existing outputs");

  // rwa
  double g_const = 0.0;
  int samples = 1000;
  CLI::App* rwa = app.add_subcommand("rwa", "analytic rotating-wave reference over one swap period");
  rwa->add_option("--g", g_const, "constant coupling rate")->required();
  rwa->add_option("--samples", samples, "number of intervals in the CSV");
  rwa->add_option("--out", out_path, "output CSV (default stdout)");
  rwa->add_flag("--force", force, "overwrite existing outputs");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (solve->parsed()) {
      if (detail::refuse_overwrite(out_path, force, std::cerr)) return 2;
      if (detail::refuse_overwrite(traj_path, force, std::cerr)) return 2;
      MinTimeOptions opts;
      opts.solver = solver_opts;
      opts.t_min = t_min;
      opts.t_max = t_max;
      opts.verify_steps = steps;
      const SolveMode mode = mode_name == "paper" ? SolveMode::paper_sweep : SolveMode::direct;
      const Solution sol = min_time(CouplingBound(g0), nodes, mode, opts);
      write_solution(sol, out_path);
      const VerifyReport rep{sol.diagnostics.reintegration_error, sol.diagnostics.invariant_drift,
                             sol.diagnostics.symmetry_deviation, sol.verify_steps};
      std::cout << "g0 = " << g0 << "  nodes = " << nodes << "  mode = " << mode_name << '\n';
      std::cout << "status = " << sol.status << '\n';
      detail::print_report(sol, rep, std::cout);
      if (sol.control.minCoeff() < 0.0)
        std::cout << "note: the control takes negative values (min = "
                  << std::setprecision(17) << sol.control.minCoeff() << ")\n";
      if (!traj_path.empty())
        write_trajectory_csv(detail::reintegrated_trajectory(sol, steps), traj_path);
      std::cout << "wrote " << out_path << '\n';
      return (sol.status == "converged" && rep.passed()) ? 0 : 1;
    }

    if (sweep_cmd->parsed()) {
      if (detail::refuse_overwrite(out_path, force, std::cerr)) return 2;
      MinTimeOptions opts;
      opts.solver = solver_opts;
      opts.t_min = t_min;
      opts.verify_steps = steps;
      const SolveMode mode = mode_name == "paper" ? SolveMode::paper_sweep : SolveMode::direct;
      const SweepTable tbl = sweep(g0_max, g0_min, g0_step, nodes, mode, opts);
      write_sweep_csv(tbl, out_path);
      std::cout << "wrote " << out_path << " (" << tbl.rows.size() << " rows)\n";
      bool all_ok = true;
      for (const SweepRow& row : tbl.rows) all_ok = all_ok && row.status == "converged";
      return all_ok ? 0 : 1;
    }

    if (stair->parsed()) {
      const CouplingBound bound(g0);
      std::ostringstream body;
      body << std::setprecision(17);
      if (table) {
        body << "# G in units of omega_m, T in units of 1/omega_m\n";
        body << "m,n,G,T\n";
        for (const StaircaseEntry& e : feasible_pairs(bound, m_max))
          body << e.m << ',' << e.n << ',' << e.G << ',' << e.T << '\n';
      } else {
        const StaircaseEntry e = staircase_time(bound);
        body << "m=" << e.m << " n=" << e.n << " G=" << e.G << " T=" << e.T << '\n';
      }
      if (out_path.empty()) {
        std::cout << body.str();
      } else {
        if (detail::refuse_overwrite(out_path, force, std::cerr)) return 2;
        std::ofstream os(out_path);
        if (!os) throw std::runtime_error("cannot open " + out_path);
        os << body.str();
        std::cout << "wrote " << out_path << '\n';
      }
      return 0;
    }

    if (verify_cmd->parsed()) {
      if (detail::refuse_overwrite(traj_path, force, std::cerr)) return 2;
      const Solution sol = read_solution(solution_path);
      const VerifyReport rep = verify(sol, steps);
      detail::print_report(sol, rep, std::cout);
      if (!traj_path.empty())
        write_trajectory_csv(detail::reintegrated_trajectory(sol, steps), traj_path);
      return rep.passed() ? 0 : 1;
    }

    if (rwa->parsed()) {
      if (!(g_const > 0.0)) {
        std::cerr << "error: --g must be positive\n";
        return 2;
      }
      if (samples < 1) {
        std::cerr << "error: --samples must be >= 1\n";
        return 2;
      }
      const double horizon = rwa_swap_time(g_const);
      std::ostringstream body;
      body << "# t in units of 1/omega_m; analytic rotating-wave (J1, J3)\n";
      body << "t,J1,J3\n";
      body << std::setprecision(17);
      for (int i = 0; i <= samples; ++i) {
        const double t = horizon * static_cast<double>(i) / samples;
        const auto [j1, j3] = rwa_state(g_const, t);
        body << t << ',' << j1 << ',' << j3 << '\n';
      }
      if (out_path.empty()) {
        std::cout << body.str();
      } else {
        if (detail::refuse_overwrite(out_path, force, std::cerr)) return 2;
        std::ofstream os(out_path);
        if (!os) throw std::runtime_error("cannot open " + out_path);
        os << body.str();
        std::cout << "wrote " << out_path << '\n';
      }
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

inline int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace omcool::cli
