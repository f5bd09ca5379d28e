#include "ddopt/optimize.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ArmijoResult armijo_step(const NodalField& u, const GradientField& g, const CostBreakdown& cost_u,
                         const OptimizerConfig& cfg, const CostFn& cost) {
  if (!(g.norm_Y > 0.0))
    throw std::invalid_argument("armijo_step: gradient norm must be positive");

  const double gnorm2 = g.norm_Y * g.norm_Y;
  double omega = cfg.omega0;
  for (int halvings = 0; halvings <= cfg.max_armijo_halvings; ++halvings) {
    const double direction = cfg.paper_signs ? 1.0 : -1.0;
    NodalField candidate(u.mesh, u.v + direction * omega * g.g.v);
    double value = std::numeric_limits<double>::infinity();
    CostBreakdown c;
    try {
      c = cost(candidate);
      value = c.total;
    } catch (const SolverError&) {
      // unsolvable probe: treat as insufficient decrease
    }

    const bool accept = cfg.paper_signs
                            ? value < cost_u.total + cfg.gamma_armijo * omega * gnorm2
                            : value <= cost_u.total - cfg.gamma_armijo * omega * gnorm2;
    if (accept) return ArmijoResult{omega, std::move(candidate), c, halvings};
    omega *= 0.5;
  }

  std::ostringstream msg;
  msg << "armijo_step: no descent step found within " << cfg.max_armijo_halvings
      << " halvings (gradient may be inconsistent)";
  throw SolverError(msg.str());
}

OptRun optimize(const DesignProblem& problem, const DopingProfile& dp0,
                const OptimizerConfig& cfg) {
  if (!(dp0.totals.N > 0.0) || !(dp0.totals.P > 0.0))
    throw std::invalid_argument("optimize: initial profile must have N, P > 0");

  const AssembledForms& forms = *problem.forms;
  OptRun run;
  NodalField u(forms.mesh, dp0.C.v - dp0.C_ref.v);

  const CostFn cost_fn = [&](const NodalField& uc) { return problem.reduced_cost(uc); };

  double g0_norm = -1.0;
  try {
    for (int k = 0; k <= cfg.max_iter; ++k) {
      auto t0 = std::chrono::steady_clock::now();
      const DopingProfile dp = problem.profile_for(u);
      const StateSolution state = problem.solve_state(dp);
      run.wall_times.state += seconds_since(t0);

      const CostBreakdown cost = evaluate_cost(forms, state, dp, problem.targets, problem.sigma);

      t0 = std::chrono::steady_clock::now();
      const AdjointSolution adjoint =
          problem.lambda2 > 0.0
              ? solve_adjoint_lambda(forms, state, problem.targets, problem.tol_inner)
              : solve_adjoint_zero(forms, state, problem.targets);
      run.wall_times.adjoint += seconds_since(t0);

      t0 = std::chrono::steady_clock::now();
      const NodalField xi_eff = problem.effective_adjoint_density(dp, adjoint);
      const GradientField grad = riesz_gradient(forms, u, xi_eff, problem.sigma);
      run.wall_times.riesz += seconds_since(t0);

      run.iterates.push_back(IterateRecord{u, cost, grad.norm_Y, 0});
      run.C_opt = dp.C;
      run.V_opt = state.V;
      run.n_opt = state.n;
      run.p_opt = state.p;
      run.final_cost = cost;

      if (g0_norm < 0.0) g0_norm = grad.norm_Y;
      const bool abs_done = grad.norm_Y <= cfg.tol_abs;
      const bool rel_done = g0_norm > 0.0 && grad.norm_Y / g0_norm <= cfg.tol_opt;
      if (abs_done || rel_done) {
        run.converged = true;
        return run;
      }
      if (k == cfg.max_iter) break;

      t0 = std::chrono::steady_clock::now();
      ArmijoResult step = armijo_step(u, grad, cost, cfg, cost_fn);
      run.wall_times.linesearch += seconds_since(t0);
      run.iterates.back().armijo_halvings = step.halvings;
      u = std::move(step.u_next);
    }
    run.failure = "optimize: iteration cap reached before the gradient tolerances";
  } catch (const SolverError& err) {
    run.failure = err.what();
  }
  run.converged = false;
  return run;
}

}  // namespace ddopt
