#pragma once

#include <vector>

#include "ddopt/state.hpp"

namespace ddopt {

struct TrackingTargets {
  NodalField n_d;
  NodalField p_d;
};

/// Adjoint state: zero-mean multiplier field xi plus the scalar multipliers
/// attached to the normalizer constraints.
struct AdjointSolution {
  NodalField xi;
  double xi_alpha = 0.0;
  double xi_beta = 0.0;
  double lambda2 = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> diff_history;        // ||xi_k - xi_{k-1}||_{H^1}
  std::vector<double> multiplier_energy;   // N |eps_alpha|^2 + P |eps_beta|^2
};

/// Nodal action of the kernel operator K = K_n + K_p,
///   K_n[h] = n (h - (1/N) int n h),  K_p[h] = p (h - (1/P) int p h).
NodalField apply_K(const AssembledForms& forms, const NodalField& h, const StateSolution& sol);

/// Right-hand side f = K_n[n - n_d] - K_p[p - p_d]; has zero integral.
NodalField adjoint_rhs(const AssembledForms& forms, const StateSolution& sol,
                       const TrackingTargets& targets);

/// Quadrature matrix of the bilinear form (h, phi) -> int K[h] phi; symmetric
/// positive semidefinite with constants in the kernel.
Eigen::MatrixXd kernel_form_matrix(const AssembledForms& forms, const StateSolution& sol);

/// Fixed-point adjoint solver for lambda > 0: repeatedly solve the sparse
/// bordered system
///   lambda^2 S xi + load((n+p) xi) = load(n(n-n_d) - p(p-p_d) + n xi_a + p xi_b)
/// for zero-mean xi, re-center, and update (xi_a, xi_b); geometric convergence.
AdjointSolution solve_adjoint_lambda(const AssembledForms& forms, const StateSolution& sol,
                                     const TrackingTargets& targets, double tol,
                                     int max_iter = 10000);

/// Dense Fredholm solve for lambda = 0: (M D - M H) xi + mu M 1 = F with the
/// zero-mean constraint, followed by one evaluation of (xi_a, xi_b).
AdjointSolution solve_adjoint_zero(const AssembledForms& forms, const StateSolution& sol,
                                   const TrackingTargets& targets);

/// Residual of the nonlocal equation -lambda^2 xi'' + K[xi] = f at a candidate
/// adjoint, in the projected M^{-1} norm (cross-check of the local split).
double adjoint_residual(const AssembledForms& forms, const StateSolution& sol,
                        const TrackingTargets& targets, const AdjointSolution& adj);

}  // namespace ddopt
