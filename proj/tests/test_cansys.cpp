#include "sloc/cansys.hpp"
#include "sloc/css.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sloc;

namespace {

SystemOperators make_sys(int n = 21, double b = 0.65) {
  ModelParams p;
  p.b = b;
  return SystemOperators::make(p, build_mesh(2 * std::numbers::pi / 0.44, n));
}

CanonicalState wavy_state(const SystemOperators& sys) {
  const int n = sys.nodes();
  CanonicalState u(2 * n);
  for (int i = 0; i < n; ++i) {
    const double x = sys.mesh.nodes[i];
    u[i] = 0.9 + 0.3 * std::cos(0.33 * x) + 0.05 * std::sin(1.3 * x);
    u[n + i] = -6.0 + 1.5 * std::sin(0.22 * x);
  }
  return u;
}

}  // namespace

TEST_CASE("analytic Jacobian matches central differences") {
  const SystemOperators sys = make_sys();
  const CanonicalState u = wavy_state(sys);
  const Eigen::MatrixXd J = Eigen::MatrixXd(jacobian(u, sys));
  Eigen::MatrixXd fd(J.rows(), J.cols());
  for (int c = 0; c < u.size(); ++c) {
    const double h = 1e-6 * (1.0 + std::abs(u[c]));
    CanonicalState up = u, um = u;
    up[c] += h;
    um[c] -= h;
    fd.col(c) = (residual(up, sys) - residual(um, sys)) / (2 * h);
  }
  CHECK((J - fd).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("parameter derivative matches central differences") {
  const SystemOperators sys = make_sys();
  const CanonicalState u = wavy_state(sys);
  const double h = 1e-6;
  const Vec fd = (residual(u, sys.with_b(0.65 + h)) - residual(u, sys.with_b(0.65 - h))) / (2 * h);
  CHECK((residual_db(u, sys) - fd).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("flat roots are steady states of the distributed system") {
  const SystemOperators sys = make_sys();
  for (const auto& root : fcss_roots(sys.params)) {
    const CanonicalState u = flat_state(root.P, root.q, sys.nodes());
    CHECK(residual(u, sys).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(evolution_rate(u, sys).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("reflection is a symmetry") {
  const SystemOperators sys = make_sys();
  const CanonicalState u = wavy_state(sys);
  const Vec lhs = residual(reflect(u), sys);
  const Vec rhs = reflect(residual(u, sys));
  CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((reflect(reflect(u)) - u).norm() == 0.0);
}

TEST_CASE("costates must stay negative") {
  const SystemOperators sys = make_sys();
  CanonicalState u = wavy_state(sys);
  u[sys.nodes() + 3] = 0.1;
  CHECK_THROWS_AS(check_admissible(u), DomainError);
  CHECK_THROWS_AS(residual(u, sys), DomainError);
}

TEST_CASE("forward simulation rests at a flat steady state under its own control") {
  const SystemOperators sys = make_sys();
  const FlatRoot fsc = fcss_roots(sys.params).front();
  const Vec P0 = Vec::Constant(sys.nodes(), fsc.P);
  const IvpResult res = forward_ivp(P0, [&](double, double) { return fsc.k; }, sys, 50.0, 0.5);
  CHECK((res.states.back() - P0).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(res.objective == doctest::Approx(fsc.J).epsilon(1e-9));
}

TEST_CASE("forward simulation schemes converge to each other") {
  const SystemOperators sys = make_sys();
  Vec P0(sys.nodes());
  for (int i = 0; i < sys.nodes(); ++i) P0[i] = 1.0 + 0.4 * std::cos(0.22 * sys.mesh.nodes[i]);
  auto control = [](double, double) { return 0.13; };
  const auto be = forward_ivp(P0, control, sys, 20.0, 0.01, Stepping::backward_euler);
  const auto tr = forward_ivp(P0, control, sys, 20.0, 0.01, Stepping::trapezoidal);
  CHECK((be.states.back() - tr.states.back()).lpNorm<Eigen::Infinity>() < 1e-3);
}
