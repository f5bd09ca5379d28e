#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddopt/objective.hpp"

namespace ddopt {

struct OracleReport {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<std::string> details;
};

/// Discrete energy whose Euler-Lagrange equation is the state equation:
///   E(V) = (lambda^2/2) ||grad V||^2 + N ln((1/|O|) int e^{-V})
///        + P ln((1/|O|) int e^{V}) + int C V,
/// convex on the zero-mean subspace with E(0) = 0.
double energy_functional(const AssembledForms& forms, const NodalField& V,
                         const DopingProfile& dp, double lambda2);

/// Gradient of energy_functional (the full nonlocal weak residual).
Eigen::VectorXd energy_gradient(const AssembledForms& forms, const NodalField& V,
                                const DopingProfile& dp, double lambda2);

/// Auxiliary energy with frozen normalizers, for checking the inner Newton
/// solve against a generic minimizer.
double aux_energy(const AssembledForms& forms, const NodalField& V, const NodalField& C,
                  double alpha, double beta, double lambda2);
Eigen::VectorXd aux_energy_gradient(const AssembledForms& forms, const NodalField& V,
                                    const NodalField& C, double alpha, double beta,
                                    double lambda2);

/// Generic BFGS minimization over the zero-mean subspace; independent of the
/// production Newton/fixed-point solvers.
NodalField minimize_zero_mean(const AssembledForms& forms,
                              const std::function<double(const Eigen::VectorXd&)>& value,
                              const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                              const NodalField& V0, double grad_tol, int max_iter = 5000);

/// Oracle forward solve on a tiny mesh (n_nodes <= 7): direct minimization of
/// the energy to ~1e-10 accuracy.
NodalField brute_force_state(const AssembledForms& forms, const DopingProfile& dp, double lambda2,
                             double grad_tol = 1e-10);

/// Central difference of the reduced cost along a direction h.
double fd_directional(const DesignProblem& problem, const NodalField& u, const NodalField& h,
                      double eps);

/// Central differences of the reduced cost along every nodal zero-mean basis
/// direction e_i - (w_i/|O|) 1, assembled as a covector and re-centered.
NodalField fd_gradient(const DesignProblem& problem, const NodalField& u, double eps);

/// Compare the adjoint-based gradient with central finite differences along
/// seeded random zero-mean directions at the given control.
OracleReport gradient_check(const DesignProblem& problem, const NodalField& u, int n_directions,
                            unsigned seed, double eps, double tol_rel);

}  // namespace ddopt
