#pragma once

// Spectra of canonical steady states, the saddle-point property and the
// projection onto the unstable adjoint eigenspace used as a right boundary
// condition of connecting orbits.

#include "sloc/cansys.hpp"

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace sloc {

using Complex = std::complex<double>;

struct SpectrumReport {
  std::vector<Complex> eigenvalues;  ///< sorted by real part, ascending
  int n_stable = 0;
  int n_unstable = 0;
  int n_center = 0;
  int defect = 0;                    ///< n_stable - n
  double symmetry_residual = 0.0;    ///< relative distance to the reflection r - conj(lambda)
  double r = 0.0;
};

/// Dense C = M^{-1} (-dG/du), the linearization of du/dt = -M^{-1} G(u).
Eigen::MatrixXd evolution_matrix(const CanonicalState& u, const SystemOperators& sys);

/// Eigenvalues with |Re| <= center_tol count as center.
SpectrumReport spectrum(const CanonicalState& u, const SystemOperators& sys,
                        double center_tol = 1e-8);

/// Saddle-point property. Evaluates the stable-count criterion and the band
/// criterion |Re lambda - r/2| > r/2, which must agree. Throws SolverError on
/// center eigenvalues, on eigenvalues within tol of either band edge, or on
/// disagreement.
bool has_spp(const SpectrumReport& report, const ModelParams& params, double tol = 1e-8);

/// Relative Hausdorff distance between a spectrum and its reflection
/// lambda -> r - conj(lambda).
double reflection_residual(const std::vector<Complex>& eigenvalues, double r);

struct ProjectionPsi {
  Eigen::MatrixXd psi;       ///< n x 2n, orthonormal rows
  CanonicalState target;     ///< the steady state
  Complex mu1;               ///< stable eigenvalue closest to the imaginary axis
  double slowest_rate = 0.0; ///< -Re mu1

  /// Lower bound 1 / slowest_rate for the truncation horizon.
  double horizon_bound() const { return 1.0 / slowest_rate; }
};

/// Throws SolverError unless the state has defect 0.
ProjectionPsi build_psi(const CanonicalState& u, const SystemOperators& sys,
                        double center_tol = 1e-8);

/// Right eigenvectors of C for the stable eigenvalues (complex), for checks.
Eigen::MatrixXcd stable_eigenvectors(const CanonicalState& u, const SystemOperators& sys);

}  // namespace sloc
