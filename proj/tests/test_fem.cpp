#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "ddopt/errors.hpp"
#include "ddopt/fem.hpp"

using namespace ddopt;

namespace {

// Extreme eigenvalues of S on the zero-mean subspace by (inverse) power
// iteration; independent of any factorization used inside the library.
double power_iteration_lambda_max(const AssembledForms& forms) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(forms.n(), -1.0, 1.3);
  x.array() -= x.mean();
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd y = forms.S.apply(x);
    y.array() -= y.mean();
    lambda = y.norm() / x.norm();
    x = y / y.norm();
  }
  return lambda;
}

double inverse_power_lambda_min(const AssembledForms& forms) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(forms.n(), 0.0, 1.0);
  x.array() -= x.mean();
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd rhs = x;
    rhs.array() -= rhs.mean();
    Eigen::VectorXd y = solve_bordered(forms, forms.S, rhs).x.v;
    y.array() -= y.mean();
    x = y / y.norm();
  }
  return x.dot(forms.S.apply(x)) / x.dot(x);
}

}  // namespace

TEST_CASE("assembly on the 3-node mesh matches the textbook P1 entries") {
  const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, 3));
  const double h = 0.5;

  CHECK(forms.S.diag[0] == doctest::Approx(1.0 / h));
  CHECK(forms.S.diag[1] == doctest::Approx(2.0 / h));
  CHECK(forms.S.diag[2] == doctest::Approx(1.0 / h));
  CHECK(forms.S.lower[0] == doctest::Approx(-1.0 / h));
  CHECK(forms.S.upper[1] == doctest::Approx(-1.0 / h));

  CHECK(forms.M.diag[0] == doctest::Approx(h / 3.0));
  CHECK(forms.M.diag[1] == doctest::Approx(2.0 * h / 3.0));
  CHECK(forms.M.lower[0] == doctest::Approx(h / 6.0));

  // interior stiffness row is (-2, 4, -2)
  const Eigen::MatrixXd S = forms.S.dense();
  CHECK(S(1, 0) == doctest::Approx(-2.0));
  CHECK(S(1, 1) == doctest::Approx(4.0));
  CHECK(S(1, 2) == doctest::Approx(-2.0));
}

TEST_CASE("stiffness kernel and quadrature partition of unity") {
  for (int n : {3, 17, 200}) {
    const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, n));
    const Eigen::VectorXd s1 = forms.S.apply(Eigen::VectorXd::Ones(n));
    CHECK(s1.cwiseAbs().maxCoeff() <= 1e-12 * n);
    CHECK(forms.w.sum() == doctest::Approx(1.0).epsilon(1e-14));
    // row sums of M are the trapezoid weights
    CHECK((forms.M.apply(Eigen::VectorXd::Ones(n)) - forms.w).cwiseAbs().maxCoeff() == 0.0);
    // M is positive definite
    Eigen::LLT<Eigen::MatrixXd> llt(forms.M.dense());
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("quadrature is exact on linears and has the trapezoid error on x^2") {
  const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, 200));
  const auto one = NodalField::sample(forms.mesh, [](double) { return 1.0; });
  const auto lin = NodalField::sample(forms.mesh, [](double x) { return x; });
  const auto quad = NodalField::sample(forms.mesh, [](double x) { return x * x; });

  CHECK(integrate(forms, one) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(integrate(forms, lin) == doctest::Approx(0.5).epsilon(1e-14));

  const double h = forms.mesh.h;
  const double err = integrate(forms, quad) - 1.0 / 3.0;
  CHECK(err == doctest::Approx(h * h / 6.0).epsilon(1e-9));

  const auto other = assemble(Mesh1D::uniform(0.0, 1.0, 100));
  CHECK_THROWS_AS(integrate(other, lin), std::invalid_argument);
}

TEST_CASE("condition number of S on the zero-mean subspace grows like h^-2") {
  const auto coarse = assemble(Mesh1D::uniform(0.0, 1.0, 50));
  const auto fine = assemble(Mesh1D::uniform(0.0, 1.0, 200));

  const double cond_coarse =
      power_iteration_lambda_max(coarse) / inverse_power_lambda_min(coarse);
  const double cond_fine = power_iteration_lambda_max(fine) / inverse_power_lambda_min(fine);

  const double ratio = cond_fine / cond_coarse;
  const double expected = std::pow(coarse.mesh.h / fine.mesh.h, 2.0);
  CHECK(ratio == doctest::Approx(expected).epsilon(0.35));
}

TEST_CASE("bordered solve: zero rhs gives the zero solution") {
  const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, 31));
  const auto sol = solve_bordered(forms, forms.S, Eigen::VectorXd::Zero(31));
  CHECK(sol.x.v.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(std::abs(sol.mu) <= 1e-15);
}

TEST_CASE("bordered solve reproduces the Neumann-Poisson polynomial solution") {
  // -u'' = x - 1/2 with u'(0) = u'(1) = 0 and zero mean:
  // u = x^2/4 - x^3/6 - 1/24. The linear rhs is integrated exactly, so the
  // P1 solution is nodally exact here.
  for (int n : {51, 201}) {
    const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, n));
    const auto f = NodalField::sample(forms.mesh, [](double x) { return x - 0.5; });
    const auto sol = solve_bordered(forms, forms.S, forms.M.apply(f.v));
    const auto exact = NodalField::sample(
        forms.mesh, [](double x) { return x * x / 4.0 - x * x * x / 6.0 - 1.0 / 24.0; });
    NodalField diff(forms.mesh, sol.x.v - exact.v);
    const double err = l2_norm(forms, diff);
    CHECK(err <= forms.mesh.h * forms.mesh.h);
    CHECK(err <= 1e-13);

    // discrete zero-mean contract
    CHECK(std::abs(forms.w.dot(sol.x.v)) <=
          1e-12 * (1.0 + sol.x.v.norm()) * forms.M.diag.maxCoeff() * n);
  }

  // Quadratic rhs: the trapezoid-level load error makes the nodal error a
  // genuine O(h^2), so the convergence rate is observable.
  double prev_err = -1.0;
  for (int n : {51, 101, 201}) {
    const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, n));
    const auto f = NodalField::sample(forms.mesh, [](double x) { return x * x - 1.0 / 3.0; });
    const auto sol = solve_bordered(forms, forms.S, forms.w.cwiseProduct(f.v));
    const auto exact = NodalField::sample(forms.mesh, [](double x) {
      return -x * x * x * x / 12.0 + x * x / 6.0 - 7.0 / 180.0;
    });
    NodalField diff(forms.mesh, sol.x.v - exact.v);
    const double err = l2_norm(forms, diff);
    CHECK(err <= forms.mesh.h * forms.mesh.h);
    if (prev_err > 0.0) CHECK(err <= 0.3 * prev_err);
    prev_err = err;
  }
}

TEST_CASE("bordered solve agrees with a dense oracle on random SPD systems") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, 23));
  const int n = forms.n();

  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = unif(rng);
    const TridiagMatrix A = forms.S.plus_diagonal(forms.w.cwiseProduct(d));
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = unif(rng) - 1.0;

    const auto fast = solve_bordered(forms, A, rhs);

    Eigen::MatrixXd K(n + 1, n + 1);
    K.setZero();
    K.topLeftCorner(n, n) = A.dense();
    K.topRightCorner(n, 1) = forms.w;
    K.bottomLeftCorner(1, n) = forms.w.transpose();
    Eigen::VectorXd b(n + 1);
    b.head(n) = rhs;
    b[n] = 0.0;
    const Eigen::VectorXd oracle = K.fullPivLu().solve(b);

    CHECK((fast.x.v - oracle.head(n)).cwiseAbs().maxCoeff() <=
          1e-11 * (1.0 + oracle.head(n).cwiseAbs().maxCoeff()));
    CHECK(fast.mu == doctest::Approx(oracle[n]).epsilon(1e-10));
  }
}

TEST_CASE("bordered solve reports incompatible right-hand sides on request") {
  const auto forms = assemble(Mesh1D::uniform(0.0, 1.0, 41));
  const auto f = NodalField::sample(forms.mesh, [](double x) { return x - 0.5; });
  Eigen::VectorXd rhs = forms.M.apply(f.v);
  rhs += 1e-3 * forms.w;  // 1^T rhs = 1e-3 violates compatibility for A = S

  BorderedOptions opts;
  opts.require_compatible = true;
  CHECK_THROWS_AS(solve_bordered(forms, forms.S, rhs, opts), SolverError);
  CHECK_NOTHROW(solve_bordered(forms, forms.S, rhs));  // multiplier absorbs it otherwise
}

TEST_CASE("mesh invariants are enforced") {
  CHECK_THROWS_AS(Mesh1D::uniform(0.0, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(Mesh1D::uniform(1.0, 0.0, 10), std::invalid_argument);
  const Mesh1D m = Mesh1D::uniform(0.0, 1.0, 200);
  CHECK(m.h == doctest::Approx(1.0 / 199.0));
  CHECK(m.x(199) == doctest::Approx(1.0));
}
