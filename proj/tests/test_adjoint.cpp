#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ddopt/adjoint.hpp"
#include "ddopt/errors.hpp"
#include "ddopt/experiments.hpp"

using namespace ddopt;

namespace {

struct Setup {
  AssembledForms forms;
  DopingProfile dp;
  StateSolution state;
  TrackingTargets targets;
};

Setup canonical_setup(int nodes, double delta, double lambda2) {
  const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, nodes);
  Setup s{assemble(mesh), {}, {}, {}};
  const auto canon = canonical_profile(mesh);
  s.dp = make_profile(s.forms, canon.C_ref, canon.C_ref, delta * delta);
  s.state = lambda2 > 0.0 ? solve_state_lambda(s.forms, s.dp, lambda2, 1e-11)
                          : solve_state_zero(s.forms, s.dp, 1e-12);
  s.targets = TrackingTargets{canon.n_d, canon.p_d};
  return s;
}

NodalField random_field(const AssembledForms& forms, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  NodalField h(forms.mesh);
  for (int i = 0; i < forms.n(); ++i) h.v[i] = normal(rng);
  return h;
}

}  // namespace

TEST_CASE("kernel operator annihilates constants and has zero integral") {
  const Setup s = canonical_setup(60, 0.2, 1e-3);
  std::mt19937_64 rng(3);

  NodalField ones(s.forms.mesh, Eigen::VectorXd::Ones(s.forms.n()));
  const NodalField k1 = apply_K(s.forms, ones, s.state);
  CHECK(k1.v.cwiseAbs().maxCoeff() <= 1e-13 * (s.dp.totals.N + s.dp.totals.P));

  for (int rep = 0; rep < 10; ++rep) {
    const NodalField h = random_field(s.forms, rng);
    const NodalField kh = apply_K(s.forms, h, s.state);
    CHECK(std::abs(integrate(s.forms, kh)) <=
          1e-12 * (1.0 + h.v.cwiseAbs().maxCoeff()) * (s.dp.totals.N + s.dp.totals.P));
  }
}

TEST_CASE("discrete kernel form is self-adjoint to machine precision") {
  const Setup s = canonical_setup(20, 0.2, 1e-3);
  const Eigen::MatrixXd B = kernel_form_matrix(s.forms, s.state);
  const double asym = (B - B.transpose()).cwiseAbs().maxCoeff();
  CHECK(asym <= 1e-12 * B.cwiseAbs().maxCoeff());

  // pairwise check through apply_K and the quadrature inner product
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const NodalField h = random_field(s.forms, rng);
    const NodalField phi = random_field(s.forms, rng);
    const double lhs = s.forms.w.dot(apply_K(s.forms, h, s.state).v.cwiseProduct(phi.v));
    const double rhs = s.forms.w.dot(h.v.cwiseProduct(apply_K(s.forms, phi, s.state).v));
    CHECK(std::abs(lhs - rhs) <=
          1e-12 * std::sqrt(h.v.squaredNorm() * phi.v.squaredNorm()) *
              (s.dp.totals.N + s.dp.totals.P));
  }
}

TEST_CASE("adjoint right-hand side: achieved targets give zero, and f has zero mean") {
  const Setup s = canonical_setup(60, 0.2, 1e-3);

  TrackingTargets achieved{s.state.n, s.state.p};
  const NodalField f0 = adjoint_rhs(s.forms, s.state, achieved);
  CHECK(f0.v.cwiseAbs().maxCoeff() <= 1e-13);

  // desk-scale targets 0.8 C^+ / 1.2 |C^-|: nonzero with zero integral
  const NodalField f = adjoint_rhs(s.forms, s.state, s.targets);
  CHECK(f.v.cwiseAbs().maxCoeff() > 1e-4);
  CHECK(std::abs(integrate(s.forms, f)) <= 1e-12 * f.v.cwiseAbs().maxCoeff());
}

TEST_CASE("fixed-point adjoint solver: achieved targets give the zero solution") {
  const Setup s = canonical_setup(60, 0.2, 1e-3);
  TrackingTargets achieved{s.state.n, s.state.p};
  const AdjointSolution adj = solve_adjoint_lambda(s.forms, s.state, achieved, 1e-10);
  CHECK(adj.xi.v.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(adj.xi_alpha) <= 1e-10);
  CHECK(std::abs(adj.xi_beta) <= 1e-10);
}

TEST_CASE("fixed-point adjoint solver: contraction and nonlocal residual") {
  const Setup s = canonical_setup(200, 0.3, 1e-3);
  const double tol = 1e-8;
  const AdjointSolution adj = solve_adjoint_lambda(s.forms, s.state, s.targets, tol);

  CHECK(std::abs(integrate(s.forms, adj.xi)) <=
        1e-10 * (1.0 + adj.xi.v.cwiseAbs().maxCoeff()));

  // successive-difference ratios bounded below one after the transient
  const auto& d = adj.diff_history;
  REQUIRE(d.size() >= 4);
  for (size_t k = 2; k + 1 < d.size(); ++k) {
    if (d[k] == 0.0) break;
    CHECK(d[k + 1] / d[k] < 1.0);
  }

  // multiplier-energy contraction is monotone after the first step
  const auto& e = adj.multiplier_energy;
  for (size_t k = 1; k + 1 < e.size(); ++k) CHECK(e[k + 1] <= e[k] * (1.0 + 1e-12));

  // residual of the nonlocal equation evaluated through apply_K
  CHECK(adj.residual <= 10.0 * tol);

  // the scalar multipliers match their defining integrals at convergence
  const double N = integrate(s.forms, s.state.n), P = integrate(s.forms, s.state.p);
  const double xa = s.forms.w.dot(s.state.n.v.cwiseProduct(
                        adj.xi.v - (s.state.n.v - s.targets.n_d.v))) / N;
  const double xb = s.forms.w.dot(s.state.p.v.cwiseProduct(
                        adj.xi.v + (s.state.p.v - s.targets.p_d.v))) / P;
  CHECK(adj.xi_alpha == doctest::Approx(xa).epsilon(1e-9));
  CHECK(adj.xi_beta == doctest::Approx(xb).epsilon(1e-9));
}

TEST_CASE("dense Fredholm solver at lambda = 0") {
  SUBCASE("achieved targets give zero") {
    const Setup s = canonical_setup(40, 0.2, 0.0);
    TrackingTargets achieved{s.state.n, s.state.p};
    const AdjointSolution adj = solve_adjoint_zero(s.forms, s.state, achieved);
    CHECK(adj.xi.v.cwiseAbs().maxCoeff() <= 1e-11);
  }

  SUBCASE("small mesh agrees with a constrained least-squares oracle") {
    const Mesh1D mesh = Mesh1D::uniform(0.0, 1.0, 5);
    const auto forms = assemble(mesh);
    NodalField C(mesh, (Eigen::VectorXd(5) << 0.1, 0.4, 0.0, -0.4, -0.1).finished());
    const auto dp = make_profile(forms, C, C, 0.04);
    const StateSolution state = solve_state_zero(forms, dp, 1e-13);
    const TrackingTargets targets{NodalField(mesh, 0.8 * C.v.cwiseMax(0.0)),
                                  NodalField(mesh, 1.2 * (-C.v).cwiseMax(0.0))};

    const AdjointSolution adj = solve_adjoint_zero(forms, state, targets);

    // oracle: equality-constrained least squares on the dense system
    const int n = 5;
    const double N = forms.w.dot(state.n.v), P = forms.w.dot(state.p.v);
    Eigen::MatrixXd DH = Eigen::MatrixXd::Zero(n, n);
    DH.diagonal() = state.n.v + state.p.v;
    DH -= state.n.v * (forms.w.cwiseProduct(state.n.v)).transpose() / N;
    DH -= state.p.v * (forms.w.cwiseProduct(state.p.v)).transpose() / P;
    const Eigen::MatrixXd Mdense = forms.M.dense();
    const Eigen::MatrixXd A = Mdense * DH;
    const Eigen::VectorXd F = Mdense * adjoint_rhs(forms, state, targets).v;

    Eigen::MatrixXd KKT(n + 1, n + 1);
    KKT.topLeftCorner(n, n) = A.transpose() * A;
    KKT.topRightCorner(n, 1) = forms.w;
    KKT.bottomLeftCorner(1, n) = forms.w.transpose();
    KKT(n, n) = 0.0;
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = A.transpose() * F;
    rhs[n] = 0.0;
    const Eigen::VectorXd oracle = KKT.fullPivLu().solve(rhs);

    CHECK((adj.xi.v - oracle.head(n)).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SUBCASE("assembled right-hand sides satisfy the Fredholm compatibility") {
    std::mt19937_64 rng(5);
    const Setup s = canonical_setup(30, 0.25, 0.0);
    for (int rep = 0; rep < 5; ++rep) {
      TrackingTargets t{random_field(s.forms, rng), random_field(s.forms, rng)};
      const Eigen::VectorXd F = s.forms.M.dense() * adjoint_rhs(s.forms, s.state, t).v;
      CHECK(std::abs(F.sum()) <= 1e-12 * (1.0 + F.cwiseAbs().maxCoeff() * s.forms.n()));
    }
  }

  SUBCASE("incompatible right-hand side is reported") {
    const Setup s = canonical_setup(20, 0.25, 0.0);
    const double N = s.forms.w.dot(s.state.n.v), P = s.forms.w.dot(s.state.p.v);
    const int n = s.forms.n();
    Eigen::MatrixXd DH = Eigen::MatrixXd::Zero(n, n);
    DH.diagonal() = s.state.n.v + s.state.p.v;
    DH -= s.state.n.v * (s.forms.w.cwiseProduct(s.state.n.v)).transpose() / N;
    DH -= s.state.p.v * (s.forms.w.cwiseProduct(s.state.p.v)).transpose() / P;
    const Eigen::MatrixXd A = s.forms.M.dense() * DH;
    Eigen::VectorXd F = s.forms.M.dense() * adjoint_rhs(s.forms, s.state, s.targets).v;
    F += 1e-3 * s.forms.w;  // compatibility violation

    BorderedOptions opts;
    opts.require_compatible = true;
    CHECK_THROWS_AS(solve_bordered_dense(s.forms, A, F, opts), SolverError);
  }
}

TEST_CASE("coercivity witness: the lumped kernel form is positive semidefinite") {
  const Setup s = canonical_setup(50, 0.2, 1e-3);
  const Eigen::MatrixXd B = kernel_form_matrix(s.forms, s.state);
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    NodalField h = random_field(s.forms, rng);
    make_zero_mean(s.forms, h);
    const double quad = h.v.dot(B * h.v);
    CHECK(quad >= -1e-12 * h.v.squaredNorm() * (s.dp.totals.N + s.dp.totals.P));
  }
}

TEST_CASE("adjoint solutions approach the Fredholm solution as lambda vanishes") {
  const Setup s = canonical_setup(80, 0.25, 0.0);
  const AdjointSolution adj0 = solve_adjoint_zero(s.forms, s.state, s.targets);

  double prev = 1e300;
  for (double lambda2 : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
    StateSolution state = s.state;  // fixed state/targets; only lambda varies
    state.lambda2 = lambda2;
    const AdjointSolution adj = solve_adjoint_lambda(s.forms, state, s.targets, 1e-11);
    NodalField d(s.forms.mesh, adj.xi.v - adj0.xi.v);
    const double gap = l2_norm(s.forms, d);
    CHECK(gap < prev);
    prev = gap;
  }
}
