#pragma once

#include <vector>

#include "ddopt/fem.hpp"

namespace ddopt {

/// Total charges N = delta^2 + int C^+ and P = delta^2 - int C^-.
struct ChargeTotals {
  double N = 0.0;
  double P = 0.0;
  double delta2 = 0.0;
};

ChargeTotals compute_totals(const AssembledForms& forms, const NodalField& C, double delta2);

struct DopingProfile {
  NodalField C;
  NodalField C_ref;
  ChargeTotals totals;
};

/// Builds a profile with totals recomputed from C.
DopingProfile make_profile(const AssembledForms& forms, NodalField C, NodalField C_ref,
                           double delta2);

/// Equilibrium state: zero-mean potential, densities n = alpha e^{-V},
/// p = beta e^{V}, and the normalizing scalars.
struct StateSolution {
  NodalField V;
  NodalField n;
  NodalField p;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma2 = 0.0;  // sqrt(alpha*beta)
  double lambda2 = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct NewtonResult {
  NodalField V;
  int iterations = 0;
  std::vector<double> residual_history;
};

/// Damped Newton solve of the auxiliary problem with frozen normalizers:
///   -lambda^2 V'' - alpha e^{-V} + beta e^{V} + C = 0,  V' = 0 on the boundary,
///   int V = 0,
/// measured by the projected weak residual in the M^{-1} norm. Iterates are
/// rejected while any |V| exceeds 700 (exp overflow guard).
NewtonResult newton_aux_solve(const AssembledForms& forms, const NodalField& C, double alpha,
                              double beta, double lambda2, const NodalField& V0, double tol,
                              int max_iter = 100);

/// Forward solver for lambda > 0: alternate the Newton solve of the auxiliary
/// problem with the normalizer update alpha = N / int e^{-V}, beta = P / int e^{V},
/// until || V_k - V_{k-1} ||_{H^1} <= tol.
StateSolution solve_state_lambda(const AssembledForms& forms, const DopingProfile& dp,
                                 double lambda2, double tol, int max_outer = 10000);

/// Forward solver for lambda = 0: closed-form potential
///   V = ln( (1/(2 beta)) [ -C + sqrt(4 gamma^4 + C^2) ] ),
/// shifted to zero mean, alternated with the normalizer update, until
/// || V_k - V_{k-1} ||_2 <= tol.
StateSolution solve_state_zero(const AssembledForms& forms, const DopingProfile& dp, double tol,
                               int max_outer = 10000);

/// Norm of the discrete weak residual lambda^2 S V + load(-n + p + C),
/// restricted to zero-mean test functions.
double state_residual(const AssembledForms& forms, const StateSolution& sol,
                      const DopingProfile& dp);

}  // namespace ddopt
