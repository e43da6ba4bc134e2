#include "sloc/css.hpp"
#include "sloc/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace sloc;

namespace {

const double kL = 2 * std::numbers::pi / 0.44;

SystemOperators make_sys(int n, double b = 0.65) {
  ModelParams p;
  p.b = b;
  return SystemOperators::make(p, build_mesh(kL, n));
}

CanonicalState flat(const SystemOperators& sys, int which) {
  const FlatRoot r = fcss_roots(sys.params).at(which);
  return flat_state(r.P, r.q, sys.nodes());
}

}  // namespace

TEST_CASE("flat spectra are the union of the per-mode eigenvalues") {
  const int n = 41;
  const SystemOperators sys = make_sys(n);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ge(Eigen::MatrixXd(sys.fem.stiffness),
                                                               Eigen::MatrixXd(sys.fem.mass));
  for (int which = 0; which < 3; ++which) {
    const CanonicalState u = flat(sys, which);
    const double P = u[0], q = u[n];
    const ModelParams& p = sys.params;
    std::vector<Complex> ref;
    for (int j = 0; j < n; ++j) {
      const double mu = ge.eigenvalues()[j];
      const double g1 = recycling_d1(P), g2 = recycling_d2(P);
      const double a = g1 - p.b - p.D * mu, d = p.r + p.b - g1 + p.D * mu;
      const double det = a * d - (2 * p.gamma - q * g2) / (q * q);
      const Complex disc = std::sqrt(Complex(0.25 * (a + d) * (a + d) - det, 0.0));
      ref.push_back(0.5 * (a + d) - disc);
      ref.push_back(0.5 * (a + d) + disc);
    }
    const SpectrumReport rep = spectrum(u, sys);
    REQUIRE(rep.eigenvalues.size() == ref.size());
    for (const Complex& z : ref) {
      double best = 1e300;
      for (const Complex& w : rep.eigenvalues) best = std::min(best, std::abs(z - w));
      CHECK(best < 1e-8 * (1.0 + std::abs(z)));
    }
  }
}

TEST_CASE("spectra are symmetric about r/2 and defects are non-positive") {
  const SystemOperators sys = make_sys(101);
  const int expected[3] = {0, -5, 0};
  for (int which = 0; which < 3; ++which) {
    const SpectrumReport rep = spectrum(flat(sys, which), sys);
    CHECK(rep.symmetry_residual < 1e-6);
    CHECK(rep.defect <= 0);
    CHECK(rep.defect == expected[which]);
    CHECK(rep.n_stable + rep.n_unstable + rep.n_center == 2 * sys.nodes());
  }
}

TEST_CASE("defects are stable under mesh refinement") {
  const SystemOperators coarse = make_sys(101);
  const SystemOperators fine = make_sys(201);
  for (int which = 0; which < 3; ++which) {
    CHECK(spectrum(flat(coarse, which), coarse).defect == spectrum(flat(fine, which), fine).defect);
  }
}

TEST_CASE("saddle-point decisions") {
  const SystemOperators sys = make_sys(41);
  const ModelParams& p = sys.params;
  CHECK(has_spp(spectrum(flat(sys, 0), sys), p));
  CHECK_FALSE(has_spp(spectrum(flat(sys, 1), sys), p));

  SpectrumReport center = spectrum(flat(sys, 0), sys);
  center.eigenvalues.push_back(Complex(0.0, 0.3));
  center.n_center = 1;
  CHECK_THROWS_AS(has_spp(center, p), SolverError);

  SpectrumReport edge = spectrum(flat(sys, 0), sys);
  edge.eigenvalues.front() = Complex(p.r, 0.0);
  CHECK_THROWS_AS(has_spp(edge, p), SolverError);
}

TEST_CASE("reflection residual detects asymmetric sets") {
  const double r = 0.03;
  CHECK(reflection_residual({Complex(-1, 2), Complex(1.03, 2)}, r) < 1e-14);
  CHECK(reflection_residual({Complex(-1, 0), Complex(1.5, 0)}, r) > 1e-2);
}

TEST_CASE("projection rows span the adjoint unstable space") {
  const SystemOperators sys = make_sys(101);
  for (int which : {0, 2}) {
    const CanonicalState u = flat(sys, which);
    const ProjectionPsi pr = build_psi(u, sys);
    const int n = sys.nodes();
    CHECK(pr.psi.rows() == n);
    CHECK(pr.psi.cols() == 2 * n);
    CHECK((pr.psi * pr.psi.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(pr.psi);
    CHECK(lu.rank() == n);
    const Eigen::MatrixXcd vs = stable_eigenvectors(u, sys);
    CHECK(vs.cols() == n);
    CHECK((pr.psi.cast<Complex>() * vs).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(pr.slowest_rate > 0);
  }
  const ProjectionPsi fsm = build_psi(flat(sys, 2), sys);
  CHECK(fsm.horizon_bound() < 100.0);
}

TEST_CASE("defective states have no projection") {
  const SystemOperators sys = make_sys(41);
  try {
    build_psi(flat(sys, 1), sys);
    FAIL("expected an error");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("defect -5") != std::string::npos);
  }
}
