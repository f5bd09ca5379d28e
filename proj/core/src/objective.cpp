#include "ddopt/objective.hpp"

#include <cmath>

#include "ddopt/errors.hpp"

namespace ddopt {

CostBreakdown evaluate_cost(const AssembledForms& forms, const StateSolution& sol,
                            const DopingProfile& dp, const TrackingTargets& targets,
                            double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("evaluate_cost: sigma must be positive");
  const Eigen::VectorXd dn = sol.n.v - targets.n_d.v;
  const Eigen::VectorXd dpp = sol.p.v - targets.p_d.v;
  const Eigen::VectorXd du = dp.C.v - dp.C_ref.v;

  CostBreakdown c;
  c.J1 = 0.5 * forms.w.dot(dn.cwiseProduct(dn));
  c.J2 = 0.5 * forms.w.dot(dpp.cwiseProduct(dpp));
  c.J3 = 0.5 * sigma * du.dot(forms.S.apply(du));
  c.total = c.J1 + c.J2 + c.J3;
  return c;
}

GradientField riesz_gradient(const AssembledForms& forms, const NodalField& u,
                             const NodalField& xi_eff, double sigma) {
  Eigen::VectorXd rhs = sigma * forms.S.apply(u.v) + forms.w.cwiseProduct(xi_eff.v);
  GradientField out;
  out.g = solve_bordered(forms, forms.S, rhs).x;
  out.norm_Y = h1_seminorm(forms, out.g);
  return out;
}

ChargeTotals DesignProblem::totals_for(const NodalField& C) const {
  if (freeze_totals) return compute_totals(*forms, C_ref, delta2);
  return compute_totals(*forms, C, delta2);
}

DopingProfile DesignProblem::profile_for(const NodalField& u) const {
  const double drift = std::abs(forms->w.dot(u.v));
  if (drift > 1e-8 * (1.0 + u.v.cwiseAbs().maxCoeff()) * forms->domain_length())
    throw std::invalid_argument("DesignProblem: control must have zero mean");
  DopingProfile dp;
  dp.C = NodalField(forms->mesh, C_ref.v + u.v);
  dp.C_ref = C_ref;
  dp.totals = totals_for(dp.C);
  if (!(dp.totals.N > 0.0) || !(dp.totals.P > 0.0))
    throw SolverError("DesignProblem: inadmissible doping profile (N or P not positive)");
  return dp;
}

StateSolution DesignProblem::solve_state(const DopingProfile& dp) const {
  if (lambda2 > 0.0) return solve_state_lambda(*forms, dp, lambda2, tol_inner);
  return solve_state_zero(*forms, dp, tol_inner);
}

CostBreakdown DesignProblem::reduced_cost(const NodalField& u) const {
  const DopingProfile dp = profile_for(u);
  const StateSolution sol = solve_state(dp);
  return evaluate_cost(*forms, sol, dp, targets, sigma);
}

NodalField DesignProblem::effective_adjoint_density(const DopingProfile& dp,
                                                    const AdjointSolution& adj) const {
  NodalField out = adj.xi;
  if (freeze_totals) return out;
  for (int i = 0; i < out.size(); ++i) {
    const double c = dp.C.v[i];
    const double ind_pos = c > 0.0 ? 1.0 : (c == 0.0 ? 0.5 : 0.0);
    out.v[i] -= adj.xi_alpha * ind_pos + adj.xi_beta * (1.0 - ind_pos);
  }
  return out;
}

DesignProblem::Evaluation DesignProblem::evaluate(const NodalField& u) const {
  Evaluation ev;
  ev.dp = profile_for(u);
  ev.state = solve_state(ev.dp);
  ev.cost = evaluate_cost(*forms, ev.state, ev.dp, targets, sigma);
  ev.adjoint = lambda2 > 0.0 ? solve_adjoint_lambda(*forms, ev.state, targets, tol_inner)
                             : solve_adjoint_zero(*forms, ev.state, targets);
  const NodalField xi_eff = effective_adjoint_density(ev.dp, ev.adjoint);
  ev.gradient = riesz_gradient(*forms, u, xi_eff, riesz_weight);
  return ev;
}

}  // namespace ddopt
