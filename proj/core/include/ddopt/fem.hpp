#pragma once

#include <Eigen/Core>

#include "ddopt/mesh.hpp"

namespace ddopt {

/// Symmetric tridiagonal matrix stored by bands.
struct TridiagMatrix {
  Eigen::VectorXd lower;  // size n-1, entry i sits at (i+1, i)
  Eigen::VectorXd diag;   // size n
  Eigen::VectorXd upper;  // size n-1, entry i sits at (i, i+1)

  int size() const { return static_cast<int>(diag.size()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd dense() const;

  /// C = A + alpha * diag(d); bands of A are kept.
  TridiagMatrix plus_diagonal(const Eigen::VectorXd& d, double alpha = 1.0) const;
  TridiagMatrix scaled(double alpha) const;
};

/// P1 finite-element data on a uniform mesh: consistent mass M, stiffness S
/// (homogeneous Neumann, constants in the kernel), and trapezoid quadrature
/// weights w = M*1.
struct AssembledForms {
  Mesh1D mesh;
  TridiagMatrix M;
  TridiagMatrix S;
  Eigen::VectorXd w;

  int n() const { return mesh.n_nodes; }
  double domain_length() const { return mesh.length(); }
};

/// Assemble mass/stiffness/quadrature for a mesh. Postconditions checked:
/// S*1 = 0 to machine precision and sum(w) = |Omega|.
AssembledForms assemble(const Mesh1D& mesh);

/// Trapezoid quadrature of a nodal field; exact for piecewise-linear data.
/// Throws on mesh mismatch.
double integrate(const AssembledForms& forms, const NodalField& f);

double mean_value(const AssembledForms& forms, const NodalField& f);
void make_zero_mean(const AssembledForms& forms, NodalField& f);

/// Discrete norms built from the assembled forms.
double l2_norm(const AssembledForms& forms, const NodalField& f);
double h1_seminorm(const AssembledForms& forms, const NodalField& f);
double h1_norm(const AssembledForms& forms, const NodalField& f);
double l4_norm(const AssembledForms& forms, const NodalField& f);

/// Solve M y = r by the Thomas algorithm (M symmetric positive definite).
Eigen::VectorXd mass_solve(const AssembledForms& forms, const Eigen::VectorXd& r);

/// Norm of a weak residual vector r restricted to zero-mean test functions,
/// measured in the M^{-1} metric: min_c || r - c w ||_{M^{-1}}.
double projected_residual_norm(const AssembledForms& forms, const Eigen::VectorXd& r);

struct BorderedOptions {
  /// When true, require the right-hand side to be compatible if A has
  /// constants in its kernel; violation raises SolverError.
  bool require_compatible = false;
  double compat_tol = 1e-8;
};

struct BorderedSolution {
  NodalField x;  // zero-mean solution
  double mu = 0.0;  // multiplier of the integral constraint
};

/// Solve the bordered system
///   A x + mu w = rhs,   w^T x = 0,
/// where A is tridiagonal and w are the quadrature weights. Eliminates the
/// tridiagonal band with the border carried along (arrowhead elimination);
/// A only needs to be invertible on the zero-mean subspace.
BorderedSolution solve_bordered(const AssembledForms& forms, const TridiagMatrix& A,
                                const Eigen::VectorXd& rhs,
                                const BorderedOptions& opts = {});

/// Dense variant of solve_bordered for full matrices (lambda = 0 adjoint).
BorderedSolution solve_bordered_dense(const AssembledForms& forms, const Eigen::MatrixXd& A,
                                      const Eigen::VectorXd& rhs,
                                      const BorderedOptions& opts = {});

}  // namespace ddopt
