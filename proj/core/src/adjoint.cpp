#include "ddopt/adjoint.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <tuple>

#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

double quad_inner(const AssembledForms& forms, const Eigen::VectorXd& a,
                  const Eigen::VectorXd& b) {
  return forms.w.dot(a.cwiseProduct(b));
}

// xi_alpha = (1/N) int n [xi - (n - n_d)],  xi_beta = (1/P) int p [xi + (p - p_d)]
std::pair<double, double> multipliers(const AssembledForms& forms, const StateSolution& sol,
                                      const TrackingTargets& targets,
                                      const Eigen::VectorXd& xi) {
  const double N = forms.w.dot(sol.n.v);
  const double P = forms.w.dot(sol.p.v);
  const double xa = quad_inner(forms, sol.n.v, xi - (sol.n.v - targets.n_d.v)) / N;
  const double xb = quad_inner(forms, sol.p.v, xi + (sol.p.v - targets.p_d.v)) / P;
  return {xa, xb};
}

}  // namespace

NodalField apply_K(const AssembledForms& forms, const NodalField& h, const StateSolution& sol) {
  if (!h.v.allFinite()) throw std::invalid_argument("apply_K: non-finite input field");
  const double N = forms.w.dot(sol.n.v);
  const double P = forms.w.dot(sol.p.v);
  const double nh = quad_inner(forms, sol.n.v, h.v) / N;
  const double ph = quad_inner(forms, sol.p.v, h.v) / P;
  Eigen::VectorXd out = sol.n.v.cwiseProduct((h.v.array() - nh).matrix()) +
                        sol.p.v.cwiseProduct((h.v.array() - ph).matrix());
  return NodalField(forms.mesh, std::move(out));
}

NodalField adjoint_rhs(const AssembledForms& forms, const StateSolution& sol,
                       const TrackingTargets& targets) {
  const double N = forms.w.dot(sol.n.v);
  const double P = forms.w.dot(sol.p.v);
  const Eigen::VectorXd dn = sol.n.v - targets.n_d.v;
  const Eigen::VectorXd dpp = sol.p.v - targets.p_d.v;
  const double ndn = quad_inner(forms, sol.n.v, dn) / N;
  const double pdp = quad_inner(forms, sol.p.v, dpp) / P;
  Eigen::VectorXd f = sol.n.v.cwiseProduct((dn.array() - ndn).matrix()) -
                      sol.p.v.cwiseProduct((dpp.array() - pdp).matrix());
  return NodalField(forms.mesh, std::move(f));
}

Eigen::MatrixXd kernel_form_matrix(const AssembledForms& forms, const StateSolution& sol) {
  const double N = forms.w.dot(sol.n.v);
  const double P = forms.w.dot(sol.p.v);
  const Eigen::VectorXd wn = forms.w.cwiseProduct(sol.n.v);
  const Eigen::VectorXd wp = forms.w.cwiseProduct(sol.p.v);
  Eigen::MatrixXd B = (forms.w.cwiseProduct(sol.n.v + sol.p.v)).asDiagonal();
  B -= wn * wn.transpose() / N;
  B -= wp * wp.transpose() / P;
  return B;
}

AdjointSolution solve_adjoint_lambda(const AssembledForms& forms, const StateSolution& sol,
                                     const TrackingTargets& targets, double tol, int max_iter) {
  if (!(sol.lambda2 > 0.0))
    throw std::invalid_argument("solve_adjoint_lambda: state must have lambda^2 > 0");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_adjoint_lambda: tol must be > 0");

  const TridiagMatrix A =
      forms.S.scaled(sol.lambda2).plus_diagonal(forms.w.cwiseProduct(sol.n.v + sol.p.v));
  const Eigen::VectorXd base =
      sol.n.v.cwiseProduct(sol.n.v - targets.n_d.v) - sol.p.v.cwiseProduct(sol.p.v - targets.p_d.v);

  AdjointSolution out;
  out.lambda2 = sol.lambda2;

  // One plain step (a)-(c): xi at the multipliers, re-centered, new multipliers.
  const auto iterate = [&](double za, double zb) {
    const Eigen::VectorXd rhs = forms.w.cwiseProduct(base + za * sol.n.v + zb * sol.p.v);
    NodalField xi_new = solve_bordered(forms, A, rhs).x;
    make_zero_mean(forms, xi_new);  // explicit re-centering step
    const auto [za_new, zb_new] = multipliers(forms, sol, targets, xi_new.v);
    return std::tuple{std::move(xi_new.v), za_new, zb_new};
  };

  Eigen::VectorXd xi = Eigen::VectorXd::Zero(forms.n());
  double xa = 0.0, xb = 0.0;
  const double N = forms.w.dot(sol.n.v), P = forms.w.dot(sol.p.v);
  bool jumped = false;

  for (int k = 1; k <= max_iter; ++k) {
    auto [xi_new, xa_new, xb_new] = iterate(xa, xb);

    NodalField d(forms.mesh, xi_new - xi);
    const double diff = h1_norm(forms, d);
    out.diff_history.push_back(diff);
    out.multiplier_energy.push_back(N * (xa_new - xa) * (xa_new - xa) +
                                    P * (xb_new - xb) * (xb_new - xb));
    xi = std::move(xi_new);
    xa = xa_new;
    xb = xb_new;

    if (diff <= tol) {
      out.xi = NodalField(forms.mesh, std::move(xi));
      out.xi_alpha = xa;
      out.xi_beta = xb;
      out.iterations = k;
      out.residual = adjoint_residual(forms, sol, targets, out);
      return out;
    }

    // The multiplier map z -> T(z) is affine, so when its contraction factor
    // degrades (small lambda^2) the fixed point is available directly from
    // three probe steps: solve (I - G) z* = T(0). The contraction log keeps
    // only the plain steps.
    const size_t m = out.diff_history.size();
    const bool slow = m >= 6 && out.diff_history[m - 1] > 0.5 * out.diff_history[m - 2];
    if (slow && !jumped) {
      jumped = true;
      const auto [xi0, b0, b1] = iterate(0.0, 0.0);
      const auto [xi1, g00, g10] = iterate(1.0, 0.0);
      const auto [xi2, g01, g11] = iterate(0.0, 1.0);
      Eigen::Matrix2d IG;
      IG << 1.0 - (g00 - b0), -(g01 - b0), -(g10 - b1), 1.0 - (g11 - b1);
      if (std::abs(IG.determinant()) > 1e-14) {
        const Eigen::Vector2d star = IG.inverse() * Eigen::Vector2d(b0, b1);
        if (star.allFinite()) {
          auto [xi_star, xa_star, xb_star] = iterate(star[0], star[1]);
          xi = std::move(xi_star);
          xa = xa_star;
          xb = xb_star;
        }
      }
    }
  }

  std::ostringstream msg;
  msg << "solve_adjoint_lambda: no convergence within " << max_iter
      << " iterations; contraction history tail:";
  for (size_t i = out.diff_history.size() >= 5 ? out.diff_history.size() - 5 : 0;
       i < out.diff_history.size(); ++i)
    msg << " " << out.diff_history[i];
  throw SolverError(msg.str());
}

AdjointSolution solve_adjoint_zero(const AssembledForms& forms, const StateSolution& sol,
                                   const TrackingTargets& targets) {
  const int n = forms.n();
  const double N = forms.w.dot(sol.n.v);
  const double P = forms.w.dot(sol.p.v);

  // Dense kernel matrix H with H xi discretizing (n/N) int n xi + (p/P) int p xi.
  const Eigen::VectorXd wn = forms.w.cwiseProduct(sol.n.v);
  const Eigen::VectorXd wp = forms.w.cwiseProduct(sol.p.v);
  Eigen::MatrixXd DH = Eigen::MatrixXd::Zero(n, n);
  DH.diagonal() = sol.n.v + sol.p.v;
  DH -= sol.n.v * wn.transpose() / N;
  DH -= sol.p.v * wp.transpose() / P;

  const Eigen::MatrixXd Mdense = forms.M.dense();
  const Eigen::MatrixXd A = Mdense * DH;  // (M D - M H)
  const Eigen::VectorXd F = Mdense * adjoint_rhs(forms, sol, targets).v;

  BorderedOptions opts;
  opts.require_compatible = true;
  const BorderedSolution lin = solve_bordered_dense(forms, A, F, opts);

  AdjointSolution out;
  out.lambda2 = 0.0;
  out.xi = lin.x;
  const auto [xa, xb] = multipliers(forms, sol, targets, out.xi.v);
  out.xi_alpha = xa;
  out.xi_beta = xb;
  out.iterations = 1;
  out.residual = adjoint_residual(forms, sol, targets, out);
  return out;
}

double adjoint_residual(const AssembledForms& forms, const StateSolution& sol,
                        const TrackingTargets& targets, const AdjointSolution& adj) {
  const NodalField Kxi = apply_K(forms, adj.xi, sol);
  const NodalField f = adjoint_rhs(forms, sol, targets);
  Eigen::VectorXd r = forms.w.cwiseProduct(Kxi.v - f.v);
  if (adj.lambda2 > 0.0) r += adj.lambda2 * forms.S.apply(adj.xi.v);
  return projected_residual_norm(forms, r);
}

}  // namespace ddopt
