#include "ddopt/fem.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "ddopt/errors.hpp"

namespace ddopt {

Eigen::VectorXd TridiagMatrix::apply(const Eigen::VectorXd& x) const {
  const int n = size();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double s = diag[i] * x[i];
    if (i > 0) s += lower[i - 1] * x[i - 1];
    if (i < n - 1) s += upper[i] * x[i + 1];
    y[i] = s;
  }
  return y;
}

Eigen::MatrixXd TridiagMatrix::dense() const {
  const int n = size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = diag[i];
    if (i < n - 1) {
      A(i, i + 1) = upper[i];
      A(i + 1, i) = lower[i];
    }
  }
  return A;
}

TridiagMatrix TridiagMatrix::plus_diagonal(const Eigen::VectorXd& d, double alpha) const {
  TridiagMatrix out = *this;
  out.diag += alpha * d;
  return out;
}

TridiagMatrix TridiagMatrix::scaled(double alpha) const {
  return TridiagMatrix{alpha * lower, alpha * diag, alpha * upper};
}

AssembledForms assemble(const Mesh1D& mesh) {
  const int n = mesh.n_nodes;
  const double h = mesh.h;

  AssembledForms forms;
  forms.mesh = mesh;

  forms.M.lower = Eigen::VectorXd::Constant(n - 1, h / 6.0);
  forms.M.upper = forms.M.lower;
  forms.M.diag = Eigen::VectorXd::Constant(n, 2.0 * h / 3.0);
  forms.M.diag[0] = forms.M.diag[n - 1] = h / 3.0;

  forms.S.lower = Eigen::VectorXd::Constant(n - 1, -1.0 / h);
  forms.S.upper = forms.S.lower;
  forms.S.diag = Eigen::VectorXd::Constant(n, 2.0 / h);
  forms.S.diag[0] = forms.S.diag[n - 1] = 1.0 / h;

  // w = M*1: the trapezoid rule, also the row sums of M.
  forms.w = forms.M.apply(Eigen::VectorXd::Ones(n));

  const Eigen::VectorXd s_row_sums = forms.S.apply(Eigen::VectorXd::Ones(n));
  if (s_row_sums.cwiseAbs().maxCoeff() > 1e-12 / h)
    throw SolverError("assemble: stiffness kernel check S*1 = 0 failed");
  if (std::abs(forms.w.sum() - mesh.length()) > 1e-12 * mesh.length())
    throw SolverError("assemble: quadrature weights do not sum to |Omega|");

  return forms;
}

double integrate(const AssembledForms& forms, const NodalField& f) {
  if (!(f.mesh == forms.mesh)) throw std::invalid_argument("integrate: field mesh mismatch");
  return forms.w.dot(f.v);
}

double mean_value(const AssembledForms& forms, const NodalField& f) {
  return integrate(forms, f) / forms.domain_length();
}

void make_zero_mean(const AssembledForms& forms, NodalField& f) {
  f.v.array() -= mean_value(forms, f);
}

double l2_norm(const AssembledForms& forms, const NodalField& f) {
  return std::sqrt(f.v.dot(forms.M.apply(f.v)));
}

double h1_seminorm(const AssembledForms& forms, const NodalField& f) {
  return std::sqrt(std::max(0.0, f.v.dot(forms.S.apply(f.v))));
}

double h1_norm(const AssembledForms& forms, const NodalField& f) {
  const double s2 = f.v.dot(forms.S.apply(f.v));
  const double m2 = f.v.dot(forms.M.apply(f.v));
  return std::sqrt(std::max(0.0, s2 + m2));
}

double l4_norm(const AssembledForms& forms, const NodalField& f) {
  return std::pow(forms.w.dot(f.v.array().pow(4).matrix()), 0.25);
}

Eigen::VectorXd mass_solve(const AssembledForms& forms, const Eigen::VectorXd& r) {
  const TridiagMatrix& M = forms.M;
  const int n = M.size();
  Eigen::VectorXd c(n - 1), d(n);
  // Thomas algorithm; M is strictly diagonally dominant.
  c[0] = M.upper[0] / M.diag[0];
  d[0] = r[0] / M.diag[0];
  for (int i = 1; i < n; ++i) {
    const double denom = M.diag[i] - M.lower[i - 1] * c[i - 1];
    if (i < n - 1) c[i] = M.upper[i] / denom;
    d[i] = (r[i] - M.lower[i - 1] * d[i - 1]) / denom;
  }
  Eigen::VectorXd x(n);
  x[n - 1] = d[n - 1];
  for (int i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

double projected_residual_norm(const AssembledForms& forms, const Eigen::VectorXd& r) {
  // M^{-1} w = 1, so the minimizing constant is c = (1^T r)/|Omega|.
  const Eigen::VectorXd y = mass_solve(forms, r);
  const double c = r.sum() / forms.domain_length();
  const Eigen::VectorXd yc = y.array() - c;
  const Eigen::VectorXd rc = r - c * forms.w;
  return std::sqrt(std::max(0.0, yc.dot(rc)));
}

namespace {

bool has_constant_kernel(const TridiagMatrix& A) {
  const Eigen::VectorXd r = A.apply(Eigen::VectorXd::Ones(A.size()));
  const double scale = A.diag.cwiseAbs().maxCoeff() + A.lower.cwiseAbs().maxCoeff();
  return r.cwiseAbs().maxCoeff() <= 1e-12 * std::max(scale, 1e-300);
}

void check_compatibility(const BorderedOptions& opts, bool singular_a,
                         const Eigen::VectorXd& rhs, double mu) {
  if (!opts.require_compatible || !singular_a) return;
  const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
  if (std::abs(mu) > opts.compat_tol * scale) {
    std::ostringstream msg;
    msg << "solve_bordered: incompatible right-hand side for an operator with "
           "constants in its kernel (constraint multiplier mu = "
        << mu << ")";
    throw SolverError(msg.str());
  }
}

}  // namespace

BorderedSolution solve_bordered(const AssembledForms& forms, const TridiagMatrix& A,
                                const Eigen::VectorXd& rhs, const BorderedOptions& opts) {
  const int n = A.size();
  if (rhs.size() != n || forms.n() != n)
    throw std::invalid_argument("solve_bordered: size mismatch");

  // Augmented unknowns (x_0..x_{n-1}, mu). Rows 0..n-1 are the tridiagonal
  // band plus the border column w; row n is the constraint w^T x = 0.
  Eigen::VectorXd diag = A.diag, upper(n - 1), col = forms.w, row = forms.w, r = rhs;
  if (n > 1) upper = A.upper;
  double corner = 0.0, s = 0.0;

  const double pivot_floor =
      1e-14 * (A.diag.cwiseAbs().maxCoeff() + (n > 1 ? A.lower.cwiseAbs().maxCoeff() : 0.0));

  for (int i = 0; i + 1 < n; ++i) {
    if (std::abs(diag[i]) <= pivot_floor)
      throw SolverError("solve_bordered: singular bordered system (zero pivot before border)");
    const double m1 = A.lower[i] / diag[i];
    diag[i + 1] -= m1 * upper[i];
    col[i + 1] -= m1 * col[i];
    r[i + 1] -= m1 * r[i];

    const double m2 = row[i] / diag[i];
    row[i + 1] -= m2 * upper[i];
    corner -= m2 * col[i];
    s -= m2 * r[i];
  }

  // Remaining 2x2 system in (x_{n-1}, mu).
  const double det = diag[n - 1] * corner - col[n - 1] * row[n - 1];
  const double det_scale = std::abs(diag[n - 1]) * std::abs(corner) +
                           std::abs(col[n - 1]) * std::abs(row[n - 1]) + 1e-300;
  if (std::abs(det) <= 1e-14 * det_scale)
    throw SolverError("solve_bordered: singular bordered system");

  Eigen::VectorXd x(n);
  x[n - 1] = (r[n - 1] * corner - col[n - 1] * s) / det;
  const double mu = (diag[n - 1] * s - row[n - 1] * r[n - 1]) / det;
  for (int i = n - 2; i >= 0; --i) x[i] = (r[i] - upper[i] * x[i + 1] - col[i] * mu) / diag[i];

  check_compatibility(opts, has_constant_kernel(A), rhs, mu);

  BorderedSolution out{NodalField(forms.mesh, std::move(x)), mu};
  make_zero_mean(forms, out.x);  // removes elimination roundoff in the constraint
  return out;
}

BorderedSolution solve_bordered_dense(const AssembledForms& forms, const Eigen::MatrixXd& A,
                                      const Eigen::VectorXd& rhs, const BorderedOptions& opts) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || rhs.size() != n || forms.n() != n)
    throw std::invalid_argument("solve_bordered_dense: size mismatch");

  Eigen::MatrixXd K(n + 1, n + 1);
  K.topLeftCorner(n, n) = A;
  K.topRightCorner(n, 1) = forms.w;
  K.bottomLeftCorner(1, n) = forms.w.transpose();
  K(n, n) = 0.0;

  Eigen::VectorXd b(n + 1);
  b.head(n) = rhs;
  b[n] = 0.0;

  const Eigen::VectorXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(K).solve(b);
  const Eigen::VectorXd residual = K * sol - b;
  const double scale = K.cwiseAbs().maxCoeff() * (1.0 + sol.cwiseAbs().maxCoeff()) + 1e-300;
  if (!sol.allFinite() || residual.cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw SolverError(
        "solve_bordered_dense: singular bordered system (rank deficiency beyond the "
        "constant kernel)");

  const double mu = sol[n];
  const Eigen::VectorXd a1 = A * Eigen::VectorXd::Ones(n);
  const bool singular_a = a1.cwiseAbs().maxCoeff() <= 1e-12 * (A.cwiseAbs().maxCoeff() + 1e-300);
  check_compatibility(opts, singular_a, rhs, mu);

  BorderedSolution out{NodalField(forms.mesh, sol.head(n)), mu};
  make_zero_mean(forms, out.x);
  return out;
}

}  // namespace ddopt
