#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "ddopt/config.hpp"
#include "ddopt/csv.hpp"
#include "ddopt/errors.hpp"
#include "ddopt/verify.hpp"

namespace {

using namespace ddopt;

void write_solution_csv(const AssembledForms& forms, const DopingProfile& dp,
                        const StateSolution& sol, const std::string& path) {
  CsvTable t;
  t.header = {"x", "C", "V", "n", "p"};
  for (int i = 0; i < forms.n(); ++i)
    t.rows.push_back({forms.mesh.x(i), dp.C.v[i], sol.V.v[i], sol.n.v[i], sol.p.v[i]});
  write_csv(t, path);
}

DesignProblem make_problem(const RunConfig& cfg, const AssembledForms& forms,
                           const NodalField& C_ref, bool freeze_totals) {
  DesignProblem prob;
  prob.forms = &forms;
  prob.C_ref = C_ref;
  prob.targets = targets_for(forms.mesh, C_ref);
  prob.sigma = cfg.sigma;
  prob.lambda2 = cfg.lambda2;
  prob.delta2 = cfg.delta * cfg.delta;
  prob.tol_inner = cfg.tol;
  prob.freeze_totals = freeze_totals;
  return prob;
}

int run_solve(const RunConfig& cfg, bool with_adjoint) {
  const AssembledForms forms = assemble(mesh_from(cfg));
  const NodalField C = build_doping(forms.mesh, cfg.doping);
  const DopingProfile dp = make_profile(forms, C, C, cfg.delta * cfg.delta);

  const StateSolution sol = cfg.lambda2 > 0.0
                                ? solve_state_lambda(forms, dp, cfg.lambda2, cfg.tol)
                                : solve_state_zero(forms, dp, cfg.tol);

  NodalField neutrality(forms.mesh, sol.n.v - sol.p.v - dp.C.v);
  std::printf("state solve: lambda2 = %g, nodes = %d\n", cfg.lambda2, forms.n());
  std::printf("  iterations      : %d\n", sol.iterations);
  std::printf("  residual        : %.3e\n", sol.residual);
  std::printf("  |V|_inf         : %.6e\n", sol.V.v.cwiseAbs().maxCoeff());
  std::printf("  totals N, P     : %.9g, %.9g\n", dp.totals.N, dp.totals.P);
  std::printf("  int(n - p - C)  : %.3e\n", integrate(forms, neutrality));
  std::printf("  alpha, beta     : %.9g, %.9g\n", sol.alpha, sol.beta);

  std::filesystem::create_directories(cfg.out_dir);
  write_solution_csv(forms, dp, sol,
                     (std::filesystem::path(cfg.out_dir) / "solution.csv").string());

  if (with_adjoint) {
    const TrackingTargets targets = targets_for(forms.mesh, C);
    const AdjointSolution adj = cfg.lambda2 > 0.0
                                    ? solve_adjoint_lambda(forms, sol, targets, cfg.tol)
                                    : solve_adjoint_zero(forms, sol, targets);
    std::printf("adjoint solve:\n");
    std::printf("  iterations      : %d\n", adj.iterations);
    std::printf("  residual        : %.3e\n", adj.residual);
    std::printf("  xi_alpha        : %.9g\n", adj.xi_alpha);
    std::printf("  xi_beta         : %.9g\n", adj.xi_beta);
    CsvTable t;
    t.header = {"x", "xi"};
    for (int i = 0; i < forms.n(); ++i) t.rows.push_back({forms.mesh.x(i), adj.xi.v[i]});
    write_csv(t, (std::filesystem::path(cfg.out_dir) / "adjoint.csv").string());
  }
  return 0;
}

int run_optimize(const RunConfig& cfg) {
  const AssembledForms forms = assemble(mesh_from(cfg));
  const NodalField C_ref = build_doping(forms.mesh, cfg.doping);
  const DesignProblem prob =
      make_problem(cfg, forms, C_ref, freeze_totals_for(cfg, "optimize"));
  const DopingProfile dp0 = prob.profile_for(NodalField(forms.mesh));

  const OptRun run = optimize(prob, dp0, optimizer_from(cfg));

  std::printf("optimize: lambda2 = %g, %zu iterates, converged = %s\n", cfg.lambda2,
              run.iterates.size(), run.converged ? "yes" : "no");
  if (!run.iterates.empty()) {
    std::printf("  J: %.9e -> %.9e\n", run.iterates.front().cost.total,
                run.final_cost.total);
    std::printf("  |g|_Y: %.3e -> %.3e\n", run.iterates.front().grad_norm,
                run.iterates.back().grad_norm);
  }
  std::printf("  wall times [s]: state %.3f, adjoint %.3f, riesz %.3f, linesearch %.3f\n",
              run.wall_times.state, run.wall_times.adjoint, run.wall_times.riesz,
              run.wall_times.linesearch);

  std::filesystem::create_directories(cfg.out_dir);
  SweepResult single;
  SweepRow row;
  row.lambda2 = cfg.lambda2;
  row.ok = true;
  row.J_final = run.final_cost.total;
  row.iters = static_cast<int>(run.iterates.size()) - 1;
  single.rows.push_back(row);
  single.runs.push_back(run);
  emit_figures(forms, single, cfg.out_dir);

  if (!run.converged) {
    std::fprintf(stderr, "optimize failed: %s\n", run.failure.c_str());
    return 1;
  }
  return 0;
}

int run_sweep_cmd(const RunConfig& cfg) {
  const ExperimentSpec spec = experiment_from(cfg);
  const SweepResult result = run_sweep(spec);

  std::printf("%12s %12s %12s %12s %12s %12s %6s\n", "lambda2", "t_state[s]", "t_adjoint[s]",
              "dist_C", "dist_V", "J_final", "iters");
  bool all_ok = true;
  for (const auto& row : result.rows) {
    if (row.ok) {
      std::printf("%12g %12.4g %12.4g %12.5g %12.5g %12.5g %6d\n", row.lambda2, row.t_state,
                  row.t_adjoint, row.dist_C, row.dist_V, row.J_final, row.iters);
    } else {
      all_ok = false;
      std::printf("%12g failed: %s\n", row.lambda2, row.error.c_str());
    }
  }

  std::filesystem::create_directories(spec.output_dir);
  const AssembledForms forms = assemble(spec.mesh);
  write_sweep_csv(result.rows,
                  (std::filesystem::path(spec.output_dir) / "sweep.csv").string());
  emit_figures(forms, result, spec.output_dir);
  return all_ok ? 0 : 1;
}

int run_gradcheck(const RunConfig& rc) {
  RunConfig cfg = rc;
  // Central differences need a resolved profile; the sharp default delta
  // puts the truncation error of the probe itself above the pass threshold.
  if (!cfg.delta_explicit) cfg.delta = 0.1;

  const AssembledForms forms = assemble(mesh_from(cfg));
  const NodalField C_ref = build_doping(forms.mesh, cfg.doping);
  DesignProblem prob = make_problem(cfg, forms, C_ref, freeze_totals_for(cfg, "gradcheck"));
  prob.tol_inner = std::min(cfg.tol, 1e-12);  // FD noise must sit below the threshold

  const OracleReport report =
      gradient_check(prob, NodalField(forms.mesh), cfg.directions, cfg.seed, cfg.fd_eps, 1e-4);
  for (const auto& line : report.details) std::printf("  %s\n", line.c_str());
  std::printf("gradcheck: lambda2 = %g, %d directions, max rel err = %.3e -> %s\n", cfg.lambda2,
              cfg.directions, report.max_rel_err, report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doping-profile design for the drift-diffusion model in thermal equilibrium"};
  app.require_subcommand(1);

  ddopt::RunConfig cfg;
  std::string config_file, domain_arg, lambda_list_arg;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "config file (key = value with [sections])");
    cmd->add_option("--nodes", cfg.nodes, "number of mesh nodes");
    cmd->add_option("--domain", domain_arg, "domain as a,b");
    cmd->add_option("--lambda2", cfg.lambda2, "squared scaled Debye length (0 = algebraic model)");
    cmd->add_option("--delta", cfg.delta, "intrinsic density parameter delta");
    cmd->add_option("--doping", cfg.doping, "constant:<v> | builtin:canonical | csv:<path>");
    cmd->add_option("--sigma", cfg.sigma, "regularization weight");
    cmd->add_option("--omega0", cfg.omega0, "initial Armijo step");
    cmd->add_option("--gamma", cfg.gamma, "Armijo sufficient-decrease constant");
    cmd->add_option("--tol", cfg.tol, "state/adjoint solver tolerance");
    cmd->add_option("--tol-opt", cfg.tol_opt, "relative gradient tolerance");
    cmd->add_option("--tol-abs", cfg.tol_abs, "absolute gradient tolerance");
    cmd->add_option("--max-iter", cfg.max_iter, "descent iteration cap");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_flag("--paper-signs", cfg.paper_signs, "literal published Armijo/update signs");
    cmd->add_flag_callback(
        "--freeze-totals", [&] { cfg.totals_mode = 1; },
        "pin N,P at the reference profile (default for optimize/sweep)");
    cmd->add_flag_callback(
        "--recompute-totals", [&] { cfg.totals_mode = 0; },
        "recompute N,P from the current profile (default for solve/gradcheck)");
  };

  CLI::App* solve = app.add_subcommand("solve", "solve the state equation");
  CLI::App* adjoint = app.add_subcommand("adjoint", "solve the state and adjoint equations");
  CLI::App* optimize = app.add_subcommand("optimize", "steepest-descent doping design");
  CLI::App* sweep = app.add_subcommand("sweep", "lambda sweep with table and figure data");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  for (CLI::App* cmd : {solve, adjoint, optimize, sweep, gradcheck}) add_common(cmd);

  sweep->add_option("--lambda2-list", lambda_list_arg, "comma-separated descending, 0 last");
  gradcheck->add_option("--seed", cfg.seed, "random-direction seed");
  gradcheck->add_option("--eps", cfg.fd_eps, "central-difference step");
  gradcheck->add_option("--directions", cfg.directions, "number of random directions");

  try {
    app.parse(argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--delta")) cfg.delta_explicit = true;

    // precedence: defaults < config file < flags
    if (!config_file.empty()) {
      ddopt::RunConfig file_cfg;
      ddopt::apply_config_file(file_cfg, config_file);
      CLI::App* active = app.get_subcommands().front();
      const auto keep = [&](const std::string& flag) { return active->count(flag) > 0; };
      ddopt::RunConfig merged = file_cfg;
      if (keep("--nodes")) merged.nodes = cfg.nodes;
      if (keep("--domain")) domain_arg = domain_arg;  // applied below
      if (keep("--lambda2")) merged.lambda2 = cfg.lambda2;
      if (keep("--delta")) {
        merged.delta = cfg.delta;
        merged.delta_explicit = true;
      }
      if (keep("--doping")) merged.doping = cfg.doping;
      if (keep("--sigma")) merged.sigma = cfg.sigma;
      if (keep("--omega0")) merged.omega0 = cfg.omega0;
      if (keep("--gamma")) merged.gamma = cfg.gamma;
      if (keep("--tol")) merged.tol = cfg.tol;
      if (keep("--tol-opt")) merged.tol_opt = cfg.tol_opt;
      if (keep("--tol-abs")) merged.tol_abs = cfg.tol_abs;
      if (keep("--max-iter")) merged.max_iter = cfg.max_iter;
      if (keep("--out")) merged.out_dir = cfg.out_dir;
      if (keep("--paper-signs")) merged.paper_signs = cfg.paper_signs;
      if (keep("--freeze-totals") || keep("--recompute-totals"))
        merged.totals_mode = cfg.totals_mode;
      merged.seed = cfg.seed;
      merged.fd_eps = cfg.fd_eps;
      merged.directions = cfg.directions;
      cfg = merged;
    }
    if (!domain_arg.empty()) {
      const auto comma = domain_arg.find(',');
      if (comma == std::string::npos) throw ddopt::ConfigError("--domain expects a,b");
      cfg.domain_a = std::stod(domain_arg.substr(0, comma));
      cfg.domain_b = std::stod(domain_arg.substr(comma + 1));
    }
    if (!lambda_list_arg.empty()) cfg.lambda2_list = ddopt::parse_lambda_list(lambda_list_arg);

    ddopt::validate(cfg);

    if (app.got_subcommand(solve)) return run_solve(cfg, false);
    if (app.got_subcommand(adjoint)) return run_solve(cfg, true);
    if (app.got_subcommand(optimize)) return run_optimize(cfg);
    if (app.got_subcommand(sweep)) return run_sweep_cmd(cfg);
    if (app.got_subcommand(gradcheck)) return run_gradcheck(cfg);
    return 2;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  } catch (const ddopt::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const ddopt::SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
