#include <doctest.h>

#include <cmath>
#include <random>

#include "ddopt/errors.hpp"
#include "ddopt/experiments.hpp"
#include "ddopt/objective.hpp"
#include "ddopt/verify.hpp"

using namespace ddopt;

namespace {

DesignProblem canonical_problem(const AssembledForms& forms, const CanonicalProfile& canon,
                                double lambda2, double delta, double tol) {
  DesignProblem prob;
  prob.forms = &forms;
  prob.C_ref = canon.C_ref;
  prob.targets = TrackingTargets{canon.n_d, canon.p_d};
  prob.sigma = 1e-4;
  prob.lambda2 = lambda2;
  prob.delta2 = delta * delta;
  prob.tol_inner = tol;
  return prob;
}

NodalField random_zero_mean(const AssembledForms& forms, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  NodalField h(forms.mesh);
  for (int i = 0; i < forms.n(); ++i) h.v[i] = normal(rng);
  make_zero_mean(forms, h);
  h.v /= l2_norm(forms, h);
  return h;
}

}  // namespace

TEST_CASE("cost components vanish at achieved targets and reference profile") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 60);
  const auto forms = assemble(mesh);
  const auto canon = canonical_profile(mesh);
  const auto dp = make_profile(forms, canon.C_ref, canon.C_ref, 0.04);
  const StateSolution sol = solve_state_zero(forms, dp, 1e-12);

  const TrackingTargets achieved{sol.n, sol.p};
  const CostBreakdown c = evaluate_cost(forms, sol, dp, achieved, 1e-4);
  CHECK(c.J1 == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(c.J2 == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(c.J3 == 0.0);
  CHECK(c.total == c.J1 + c.J2 + c.J3);
}

TEST_CASE("regularization term: linear control gives J3 = sigma/2") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 200);
  const auto forms = assemble(mesh);
  const auto canon = canonical_profile(mesh);
  const auto dp_ref = make_profile(forms, canon.C_ref, canon.C_ref, 1e-2);
  const StateSolution sol = solve_state_zero(forms, dp_ref, 1e-10);

  // C = C_ref + x: ||grad(C - C_ref)||^2 = 1, so J3 = 5e-5 at sigma = 1e-4
  DopingProfile dp = dp_ref;
  dp.C = NodalField(mesh, canon.C_ref.v + NodalField::sample(mesh, [](double x) { return x; }).v);
  const CostBreakdown c =
      evaluate_cost(forms, sol, dp, TrackingTargets{canon.n_d, canon.p_d}, 1e-4);
  CHECK(c.J3 == doctest::Approx(5e-5).epsilon(1e-12));
}

TEST_CASE("riesz_gradient identities") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 50);
  const auto forms = assemble(mesh);
  const double sigma = 1e-4;

  SUBCASE("zero inputs give the zero gradient") {
    const GradientField g = riesz_gradient(forms, NodalField(mesh), NodalField(mesh), sigma);
    CHECK(g.g.v.cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(g.norm_Y == 0.0);
  }

  SUBCASE("pure regularization: g equals the weighted control") {
    auto u = NodalField::sample(mesh, [](double x) { return std::sin(2 * M_PI * x); });
    make_zero_mean(forms, u);
    // published representation (unit weight): g = u on the zero-mean subspace
    const GradientField g1 = riesz_gradient(forms, u, NodalField(mesh), 1.0);
    CHECK((g1.g.v - u.v).cwiseAbs().maxCoeff() <= 1e-12);
    // exact-derivative weight: g = sigma u
    const GradientField gs = riesz_gradient(forms, u, NodalField(mesh), sigma);
    CHECK((gs.g.v - sigma * u.v).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("directional-derivative identity h^T(sigma S u + load(xi)) = h^T S g") {
    std::mt19937_64 rng(3);
    auto u = random_zero_mean(forms, rng);
    auto xi = random_zero_mean(forms, rng);
    const GradientField g = riesz_gradient(forms, u, xi, sigma);
    for (int rep = 0; rep < 5; ++rep) {
      const NodalField h = random_zero_mean(forms, rng);
      const double lhs = h.v.dot(sigma * forms.S.apply(u.v) + forms.w.cwiseProduct(xi.v));
      const double rhs = h.v.dot(forms.S.apply(g.g.v));
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("reduced cost: reference control reproduces the profile cost") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 80);
  const auto forms = assemble(mesh);
  const auto canon = canonical_profile(mesh);
  const DesignProblem prob = canonical_problem(forms, canon, 0.0, 0.1, 1e-11);

  const CostBreakdown at_zero = prob.reduced_cost(NodalField(mesh));
  const auto dp = prob.profile_for(NodalField(mesh));
  const StateSolution sol = prob.solve_state(dp);
  const CostBreakdown direct = evaluate_cost(forms, sol, dp, prob.targets, prob.sigma);
  CHECK(at_zero.total == doctest::Approx(direct.total).epsilon(1e-13));
  CHECK(at_zero.J3 == 0.0);

  // control with nonzero mean is rejected
  NodalField bad(mesh, Eigen::VectorXd::Constant(forms.n(), 0.5));
  CHECK_THROWS_AS(prob.reduced_cost(bad), std::invalid_argument);
}

TEST_CASE("Taylor expansion of the reduced cost along the Riesz gradient") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 40);
  const auto forms = assemble(mesh);
  const auto canon = canonical_profile(mesh);
  const DesignProblem prob = canonical_problem(forms, canon, 1e-3, 0.15, 1e-12);

  // Base point away from the C = 0 kinks of the totals N(C), P(C), where the
  // reduced cost is smooth and a one-sided expansion is second order.
  std::mt19937_64 rng(9);
  NodalField u0 = random_zero_mean(forms, rng);
  u0.v *= 0.05;
  for (int i = 0; i < forms.n(); ++i)
    if (std::abs(canon.C_ref.v[i] + u0.v[i]) < 1e-3) u0.v[i] += 2e-3;
  make_zero_mean(forms, u0);

  const NodalField h = random_zero_mean(forms, rng);
  const auto ev = prob.exact_gradient_problem().evaluate(u0);
  const double dj = h.v.dot(forms.S.apply(ev.gradient.g.v));

  // Jhat(u0 + eps h) = Jhat(u0) + eps dJ[h] + O(eps^2)
  double prev_ratio = 1e300;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    NodalField u(mesh, u0.v + eps * h.v);
    const double lhs = prob.reduced_cost(u).total;
    const double err = std::abs(lhs - ev.cost.total - eps * dj);
    const double ratio = err / (eps * eps);
    CHECK(err <= std::max(10.0 * eps * eps, 1e-11));
    CHECK(ratio <= prev_ratio * 1.5 + 1e-3);  // no first-order residue
    prev_ratio = ratio;
  }
}

TEST_CASE("gradient check: adjoint gradient matches central differences") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 50);
  const auto forms = assemble(mesh);
  const auto canon = canonical_profile(mesh);

  SUBCASE("at the reference profile, lambda^2 in {1e-3, 1e-5, 0}") {
    for (double lambda2 : {1e-3, 1e-5, 0.0}) {
      const DesignProblem prob = canonical_problem(forms, canon, lambda2, 0.1, 1e-12);
      const OracleReport report =
          gradient_check(prob, NodalField(mesh), 5, 7, 1e-6, 1e-4);
      CAPTURE(lambda2);
      CAPTURE(report.max_rel_err);
      CHECK(report.pass);
    }
  }

  SUBCASE("away from the reference profile (sigma term active)") {
    const DesignProblem prob = canonical_problem(forms, canon, 1e-3, 0.1, 1e-12);
    std::mt19937_64 rng(23);
    NodalField u = random_zero_mean(forms, rng);
    u.v *= 0.05;
    const OracleReport report = gradient_check(prob, u, 5, 11, 1e-6, 1e-4);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
  }

  SUBCASE("frozen-totals mode") {
    DesignProblem prob = canonical_problem(forms, canon, 0.0, 0.1, 1e-12);
    prob.freeze_totals = true;
    std::mt19937_64 rng(29);
    NodalField u = random_zero_mean(forms, rng);
    u.v *= 0.05;
    const OracleReport report = gradient_check(prob, u, 5, 13, 1e-6, 1e-4);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
  }
}

TEST_CASE("fd_gradient agrees with the assembled covector on a small mesh") {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 12);
  const auto forms = assemble(mesh);
  const auto canon = canonical_profile(mesh);
  const DesignProblem prob = canonical_problem(forms, canon, 0.0, 0.2, 1e-12);

  const auto ev = prob.exact_gradient_problem().evaluate(NodalField(mesh));
  const Eigen::VectorXd adj = forms.S.apply(ev.gradient.g.v);  // S 1 = 0: already the covector
  const NodalField fd = fd_gradient(prob, NodalField(mesh), 1e-6);

  const double scale = adj.cwiseAbs().maxCoeff();
  CHECK((fd.v - adj).cwiseAbs().maxCoeff() <= 1e-4 * scale);
}
