#pragma once

#include "ddopt/adjoint.hpp"
#include "ddopt/state.hpp"

namespace ddopt {

struct CostBreakdown {
  double J1 = 0.0;  // electron tracking  (1/2) ||n - n_d||^2
  double J2 = 0.0;  // hole tracking      (1/2) ||p - p_d||^2
  double J3 = 0.0;  // regularization     (sigma/2) ||grad(C - C_ref)||^2
  double total = 0.0;
};

struct GradientField {
  NodalField g;        // zero-mean Riesz representative
  double norm_Y = 0.0; // discrete H^1 seminorm of g
};

CostBreakdown evaluate_cost(const AssembledForms& forms, const StateSolution& sol,
                            const DopingProfile& dp, const TrackingTargets& targets,
                            double sigma);

/// Riesz representation of the reduced derivative: solve the bordered problem
///   S g + mu w = sigma S u + load(xi_eff),   int g = 0,
/// so that h^T S g = dJhat(u)[h] for every zero-mean h.
GradientField riesz_gradient(const AssembledForms& forms, const NodalField& u,
                             const NodalField& xi_eff, double sigma);

/// The reduced design problem: C = C_ref + u with zero-mean control u,
/// tracking targets, and the state equation at a fixed lambda^2.
///
/// By default the totals N, P are recomputed from the current C (they are
/// defined by its positive/negative parts); freeze_totals pins them at C_ref.
///
/// riesz_weight selects the u-term weight in the gradient representation:
/// 1.0 reproduces the published Riesz problem S g = S u + load(xi) (the
/// descent direction of the path-following scheme), while sigma makes g the
/// exact Riesz representative of the reduced derivative
///   dJhat(u)[h] = sigma (grad u, grad h) + (xi_eff, h),
/// which is what finite differences of the reduced cost measure.
struct DesignProblem {
  const AssembledForms* forms = nullptr;
  NodalField C_ref;
  TrackingTargets targets;
  double sigma = 1e-4;
  double lambda2 = 0.0;
  double delta2 = 1e-6;
  double tol_inner = 1e-8;
  bool freeze_totals = false;
  double riesz_weight = 1.0;

  /// Copy configured for derivative verification (exact weight).
  DesignProblem exact_gradient_problem() const {
    DesignProblem p = *this;
    p.riesz_weight = p.sigma;
    return p;
  }

  ChargeTotals totals_for(const NodalField& C) const;
  DopingProfile profile_for(const NodalField& u) const;
  StateSolution solve_state(const DopingProfile& dp) const;

  /// Jhat(u): state solve followed by the cost evaluation.
  CostBreakdown reduced_cost(const NodalField& u) const;

  /// Adjoint density entering the control derivative. In recompute mode the
  /// scalar multipliers feed back through dN/dC and dP/dC:
  ///   xi_eff = xi - xi_alpha 1_{C>0} - xi_beta 1_{C<0}
  /// (value 1/2 on nodes with C = 0, the symmetric subgradient); with frozen
  /// totals xi_eff = xi.
  NodalField effective_adjoint_density(const DopingProfile& dp, const AdjointSolution& adj) const;

  struct Evaluation {
    DopingProfile dp;
    StateSolution state;
    AdjointSolution adjoint;
    CostBreakdown cost;
    GradientField gradient;
  };

  /// Full chain at a control u: state, adjoint, cost, Riesz gradient.
  Evaluation evaluate(const NodalField& u) const;
};

}  // namespace ddopt
