#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddopt/objective.hpp"

namespace ddopt {

struct OptimizerConfig {
  double sigma = 1e-4;          // regularization weight
  double gamma_armijo = 1e-4;   // sufficient-decrease constant
  double omega0 = 50.0;         // initial step size
  double tol_opt = 5e-2;        // relative gradient tolerance
  double tol_abs = 5e-5;        // absolute gradient tolerance
  double tol_inner = 1e-8;      // state/adjoint solver tolerance
  int max_iter = 500;
  int max_armijo_halvings = 50;
  double lambda2 = 0.0;
  bool paper_signs = false;     // literal published update/test signs

  // Hold N, P at the reference profile during descent. This is the mode in
  // which the published reduced derivative is exact (it carries no dN/dC,
  // dP/dC terms), and recomputing the totals per iterate makes the reduced
  // cost nonsmooth across sign changes of C, which stalls the gradient
  // stopping test. Recompute mode remains available for the solves and the
  // derivative checks.
  bool freeze_totals = true;
};

struct IterateRecord {
  NodalField u;
  CostBreakdown cost;
  double grad_norm = 0.0;
  int armijo_halvings = 0;
};

struct PhaseTimes {
  double state = 0.0;
  double adjoint = 0.0;
  double riesz = 0.0;
  double linesearch = 0.0;
};

struct OptRun {
  std::vector<IterateRecord> iterates;
  NodalField C_opt, V_opt, n_opt, p_opt;
  CostBreakdown final_cost;
  bool converged = false;
  std::string failure;
  PhaseTimes wall_times;
};

struct ArmijoResult {
  double omega = 0.0;
  NodalField u_next;
  CostBreakdown cost_next;
  int halvings = 0;
};

using CostFn = std::function<CostBreakdown(const NodalField&)>;

/// Backtracking step-size rule. Starting from omega0, halve omega until
///   Jhat(u - omega g) <= Jhat(u) - gamma omega ||g||_Y^2
/// (descent form; paper_signs replays the published u + omega g update with
/// its printed test). Probe evaluations that fail count as insufficient
/// decrease. Throws SolverError once max_armijo_halvings is exhausted.
ArmijoResult armijo_step(const NodalField& u, const GradientField& g, const CostBreakdown& cost_u,
                         const OptimizerConfig& cfg, const CostFn& cost);

/// Steepest-descent loop: forward solve, adjoint solve, Riesz gradient,
/// Armijo update; stops when ||g_k|| / ||g_0|| <= tol_opt or
/// ||g_k|| <= tol_abs. Solver and line-search failures are recorded on the
/// returned run together with the partial trajectory.
OptRun optimize(const DesignProblem& problem, const DopingProfile& dp0,
                const OptimizerConfig& cfg);

}  // namespace ddopt
