#include "sloc/css.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sloc;

namespace {

const double kL = 2 * std::numbers::pi / 0.44;

SystemOperators make_sys(int n, double b) {
  ModelParams p;
  p.b = b;
  return SystemOperators::make(p, build_mesh(kL, n));
}

// Flat steady states from the scalar condition obtained by eliminating q:
// (r + b - g'(P)) - 2 gamma P (b P - g(P)) = 0 with q = -2 gamma P / (r + b - g'(P)) < 0.
std::vector<double> oracle_flat_P(const ModelParams& p) {
  auto f = [&](double P) {
    const double s = 1 + P * P;
    return (p.r + p.b - 2 * P / (s * s)) - 2 * p.gamma * P * (p.b * P - P * P / s);
  };
  std::vector<double> roots;
  const int m = 7919;
  for (int i = 0; i < m; ++i) {
    double a = 1e-3 + 3.0 * i / m, c = 1e-3 + 3.0 * (i + 1) / m;
    if (f(a) * f(c) > 0) continue;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + c);
      (f(a) * f(mid) <= 0 ? c : a) = mid;
    }
    const double P = 0.5 * (a + c);
    const double s = 1 + P * P;
    if (p.r + p.b - 2 * P / (s * s) > 0) roots.push_back(P);
  }
  return roots;
}

}  // namespace

TEST_CASE("flat roots agree with an independent scalar oracle") {
  for (double b : {0.55, 0.65, 0.7, 0.75}) {
    ModelParams p;
    p.b = b;
    const auto roots = fcss_roots(p);
    const auto ref = oracle_flat_P(p);
    REQUIRE(roots.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(roots[i].P == doctest::Approx(ref[i]).epsilon(1e-9));
      CHECK(roots[i].q < 0);
      CHECK(roots[i].k == doctest::Approx(-1.0 / roots[i].q));
      CHECK(roots[i].J == doctest::Approx((std::log(roots[i].k) - p.gamma * ref[i] * ref[i]) / p.r));
    }
  }
}

TEST_CASE("flat fold brackets the change in root count") {
  ModelParams p;
  const double bf = fold_locate(p);
  p.b = bf - 2e-4;
  CHECK(fcss_roots(p).size() == 3);
  p.b = bf + 2e-4;
  CHECK(fcss_roots(p).size() == 1);
}

TEST_CASE("Newton converges from a perturbed state") {
  const SystemOperators sys = make_sys(41, 0.65);
  const FlatRoot fsm = fcss_roots(sys.params).back();
  CanonicalState u = flat_state(fsm.P, fsm.q, 41);
  for (int i = 0; i < 41; ++i) u[i] += 0.02 * std::cos(0.3 * i);
  const CssRecord c = newton_css(u, sys);
  CHECK(residual(c.u, sys).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK(c.avgP == doctest::Approx(fsm.P).epsilon(1e-9));
  CHECK(c.kind == CssKind::flat);
}

TEST_CASE("sign changes") {
  Vec v(6);
  v << 1, 2, -1, -3, 4, 5;
  CHECK(sign_changes(v) == 2);
  CHECK(sign_changes(Vec::Ones(4)) == 0);
}

TEST_CASE("dispersion eigenvalues are symmetric about r/2") {
  ModelParams p;
  const FlatRoot fsi = fcss_roots(p)[1];
  for (double k2 : {0.0, 0.05, 0.2, 1.0}) {
    const auto ev = dispersion(fsi.P, fsi.q, p, k2);
    CHECK((ev[0] + ev[1]).real() == doctest::Approx(p.r).epsilon(1e-10));
    CHECK(std::abs((ev[0] * ev[1]).real() - dispersion_det(fsi.P, fsi.q, p, k2)) < 1e-10);
  }
}

TEST_CASE("flat continuation finds the fold of the flat family") {
  const SystemOperators sys = make_sys(21, 0.65);
  const FlatRoot fsi = fcss_roots(sys.params)[1];
  ContinuationOptions co;
  co.spectra = false;
  co.detect = true;
  const Branch br = continue_branch(newton_css(flat_state(fsi.P, fsi.q, 21), sys), sys, +1, co);
  double fold = -1;
  for (const auto& pt : br.points) {
    if (pt.flag == PointFlag::fold) {
      fold = pt.css.b;
      break;
    }
  }
  CHECK(fold == doctest::Approx(fold_locate(sys.params, 0.6, 0.8, 1e-9)).epsilon(1e-6));
}

TEST_CASE("branch points on the intermediate branch solve the discrete mode condition") {
  // On a flat state the linearization decouples into the generalized eigenmodes
  // of (K, M); a branch point needs det(A - D lambda_j diag(1, -1)) = 0 for one of
  // the discrete eigenvalues lambda_j.
  const int n = 101;
  const SystemOperators sys = make_sys(n, 0.65);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ge(Eigen::MatrixXd(sys.fem.stiffness),
                                                               Eigen::MatrixXd(sys.fem.mass));
  const Vec lam = ge.eigenvalues();

  const FlatRoot fsi = fcss_roots(sys.params)[1];
  ContinuationOptions co;
  co.spectra = false;
  const Branch br = continue_branch(newton_css(flat_state(fsi.P, fsi.q, n), sys), sys, +1, co);
  int bifs = 0;
  for (const auto& pt : br.points) {
    if (pt.flag != PointFlag::bif) continue;
    ++bifs;
    const auto [phi, k] = bifurcation_kernel(pt, sys);
    const int j = static_cast<int>(std::lround(k * 2 * kL / std::numbers::pi));
    REQUIRE(j >= 1);
    REQUIRE(j < n);
    ModelParams pb = sys.params;
    pb.b = pt.css.b;
    const double P = pt.css.u[0];
    const double q = pt.css.u[n];
    auto det = [&](double mu) {
      const double g1 = recycling_d1(P), g2 = recycling_d2(P);
      const double a = g1 - pb.b - pb.D * mu, d = pb.r + pb.b - g1 + pb.D * mu;
      return a * d - (2 * pb.gamma - q * g2) / (q * q);
    };
    CHECK(std::abs(det(lam[j])) / (std::abs(det(0.0)) + 1e-3) < 1e-4);
    CHECK(sign_changes(phi.head(n)) == j);
  }
  CHECK(bifs >= 4);
}

TEST_CASE("branch switching leaves the flat branch") {
  const int n = 51;
  const SystemOperators sys = make_sys(n, 0.65);
  const FlatRoot fsi = fcss_roots(sys.params)[1];
  ContinuationOptions co;
  co.spectra = false;
  const Branch br = continue_branch(newton_css(flat_state(fsi.P, fsi.q, n), sys), sys, +1, co);
  const BranchPoint* last_bif = nullptr;
  for (const auto& pt : br.points) {
    if (pt.flag == PointFlag::bif) last_bif = &pt;
  }
  REQUIRE(last_bif != nullptr);
  const BranchPoint sw = branch_switch(*last_bif, sys);
  CHECK(sw.css.kind == CssKind::patterned);
  CHECK(residual(sw.css.u, sys.with_b(sw.css.b)).lpNorm<Eigen::Infinity>() < 1e-8);
  const Vec dev = state_part(sw.css.u).array() - sw.css.avgP;
  CHECK(sign_changes(dev) == 1);
}
