#include "sloc/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace sloc {

namespace {

Eigen::MatrixXd block_mass_solve_dense(const SystemOperators& sys, const Eigen::MatrixXd& a) {
  const int n = sys.nodes();
  Eigen::MatrixXd out(a.rows(), a.cols());
  out.topRows(n) = sys.mass_solver->solve(a.topRows(n));
  out.bottomRows(n) = sys.mass_solver->solve(a.bottomRows(n));
  return out;
}

double directed_distance(const std::vector<Complex>& from, const std::vector<Complex>& to) {
  double worst = 0.0;
  for (const Complex& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Complex& b : to) best = std::min(best, std::abs(a - b));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

Eigen::MatrixXd evolution_matrix(const CanonicalState& u, const SystemOperators& sys) {
  const Eigen::MatrixXd minus_dg = -Eigen::MatrixXd(jacobian(u, sys));
  return block_mass_solve_dense(sys, minus_dg);
}

double reflection_residual(const std::vector<Complex>& eigenvalues, double r) {
  std::vector<Complex> mirrored;
  mirrored.reserve(eigenvalues.size());
  double scale = 1.0;
  for (const Complex& l : eigenvalues) {
    mirrored.push_back(r - std::conj(l));
    scale = std::max(scale, 1.0 + std::abs(l));
  }
  const double d = std::max(directed_distance(eigenvalues, mirrored),
                            directed_distance(mirrored, eigenvalues));
  return d / scale;
}

SpectrumReport spectrum(const CanonicalState& u, const SystemOperators& sys, double center_tol) {
  const Eigen::MatrixXd C = evolution_matrix(u, sys);
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  if (es.info() != Eigen::Success) {
    throw SolverError("spectrum: eigenvalue iteration did not converge");
  }
  SpectrumReport rep;
  rep.r = sys.params.r;
  rep.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](const Complex& a, const Complex& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  for (const Complex& l : rep.eigenvalues) {
    if (std::abs(l.real()) <= center_tol) {
      ++rep.n_center;
    } else if (l.real() < 0.0) {
      ++rep.n_stable;
    } else {
      ++rep.n_unstable;
    }
  }
  rep.defect = rep.n_stable - sys.nodes();
  rep.symmetry_residual = reflection_residual(rep.eigenvalues, rep.r);
  return rep;
}

bool has_spp(const SpectrumReport& report, const ModelParams& params, double tol) {
  if (report.n_center > 0) {
    throw SolverError("has_spp: spectrum has " + std::to_string(report.n_center) +
                      " center eigenvalue(s); no SPP decision");
  }
  const double r = params.r;
  bool band = true;
  for (const Complex& l : report.eigenvalues) {
    const double re = l.real();
    if (std::abs(re) <= tol || std::abs(re - r) <= tol) {
      throw SolverError("has_spp: eigenvalue on the band edge; no SPP decision");
    }
    if (!(std::abs(re - 0.5 * r) > 0.5 * r)) band = false;
  }
  const bool count = report.defect == 0;
  if (count != band) {
    throw SolverError("has_spp: count and band criteria disagree");
  }
  return count;
}

ProjectionPsi build_psi(const CanonicalState& u, const SystemOperators& sys, double center_tol) {
  const int n = sys.nodes();
  const Eigen::MatrixXd C = evolution_matrix(u, sys);
  // Left eigenvectors of C are right eigenvectors of C^T.
  Eigen::EigenSolver<Eigen::MatrixXd> left(C.transpose(), true);
  if (left.info() != Eigen::Success) {
    throw SolverError("build_psi: eigenvalue iteration did not converge");
  }
  const auto& lam = left.eigenvalues();
  const auto& vec = left.eigenvectors();

  int stable = 0, center = 0;
  Complex mu1(-std::numeric_limits<double>::infinity(), 0.0);
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    const double re = lam[i].real();
    if (std::abs(re) <= center_tol) {
      ++center;
    } else if (re < 0.0) {
      ++stable;
      if (re > mu1.real()) mu1 = lam[i];
    }
  }
  if (center > 0 || stable != n) {
    throw SolverError("no SPP (defect " + std::to_string(stable - n) + ")");
  }

  Eigen::MatrixXd rows(2 * n, n);
  int k = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i].real() <= center_tol) continue;
    if (std::abs(lam[i].imag()) > 1e-12 * (1.0 + std::abs(lam[i]))) {
      // One member of each conjugate pair contributes its real and imaginary parts.
      if (lam[i].imag() < 0.0) continue;
      rows.col(k++) = vec.col(i).real();
      rows.col(k++) = vec.col(i).imag();
    } else {
      rows.col(k++) = vec.col(i).real();
    }
  }
  if (k != n) {
    throw SolverError("build_psi: could not form a real basis of the unstable eigenspace");
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(rows);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(2 * n, n);

  ProjectionPsi out;
  out.psi = Q.transpose();
  out.target = u;
  out.mu1 = mu1;
  out.slowest_rate = -mu1.real();
  return out;
}

Eigen::MatrixXcd stable_eigenvectors(const CanonicalState& u, const SystemOperators& sys) {
  const Eigen::MatrixXd C = evolution_matrix(u, sys);
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, true);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i].real() < 0.0) idx.push_back(i);
  }
  Eigen::MatrixXcd V(C.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    V.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(idx[j]).normalized();
  }
  return V;
}

}  // namespace sloc
