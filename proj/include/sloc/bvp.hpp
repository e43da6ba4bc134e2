#pragma once

// Connecting orbits to a saddle-type steady state on a truncated horizon:
// trapezoidal collocation of M du/dt = -G(u) with the state fixed at t = 0
// and the projection condition Psi (u(T) - u_hat) = 0 at t = T.

#include "sloc/cansys.hpp"
#include "sloc/kernels.hpp"
#include "sloc/spectral.hpp"

#include <Eigen/SparseLU>

#include <string>
#include <vector>

namespace sloc {

struct BvpOptions {
  double tol = 1e-8;          ///< max collocation residual / (1 + ||u||_inf)
  int max_iter = 30;
  bool refine = true;
  double mesh_tol = 2e-3;     ///< midpoint defect target / (1 + ||u||_inf)
  double median_factor = 10.0;
  int max_intervals = 2000;
  bool lumped = false;        ///< approximate Jacobian from thresholded M^{-1} K
  double delta = 0.0;
  kernels::Backend backend = kernels::Backend::openmp;
};

struct PathSolution {
  std::vector<double> times;
  std::vector<CanonicalState> states;
  double alpha = 0.0;
  double J = 0.0;
  double terminal_gap = 0.0;   ///< ||u(T) - u_hat||_inf
  double residual_norm = 0.0;  ///< max collocation residual of the exact system
  int newton_iterations = 0;
  std::string target_id;

  double horizon() const { return times.back(); }
  int intervals() const { return static_cast<int>(times.size()) - 1; }
};

struct BvpProblem {
  const SystemOperators* sys = nullptr;
  const ProjectionPsi* psi = nullptr;
  Vec P0;              ///< prescribed nodal P at t = 0
  double alpha = 0.0;  ///< homotopy parameter, recorded only
};

/// The discretized boundary value problem on a fixed time mesh. Unknowns are
/// the stacked states u_0 .. u_m. Rows: n left conditions, m N collocation
/// rows, n projection rows.
class CollocationSystem {
 public:
  CollocationSystem(const SystemOperators& sys, const ProjectionPsi& psi, const BvpOptions& opts);

  int slice_dim() const { return sys_->dim(); }
  int nodes() const { return sys_->nodes(); }

  /// Residual of the system the Newton iteration works on (mass-premultiplied
  /// in lumped mode).
  Vec residual(const std::vector<double>& times, const std::vector<CanonicalState>& states,
               const Vec& P0) const;

  /// Residual with the consistent mass matrix regardless of mode.
  Vec exact_residual(const std::vector<double>& times, const std::vector<CanonicalState>& states,
                     const Vec& P0) const;

  SpMat jacobian(const std::vector<double>& times, const std::vector<CanonicalState>& states) const;

  /// Midpoint defects per interval and endpoint rates.
  std::vector<double> defects(const std::vector<double>& times,
                              const std::vector<CanonicalState>& states,
                              std::vector<Vec>* rates = nullptr) const;

  const SystemOperators& sys() const { return *sys_; }
  const ProjectionPsi& psi() const { return *psi_; }
  const BvpOptions& options() const { return opts_; }

 private:
  Vec assemble_residual(const std::vector<double>& times, const std::vector<CanonicalState>& states,
                        const Vec& P0, bool exact) const;

  const SystemOperators* sys_;
  const ProjectionPsi* psi_;
  BvpOptions opts_;
  SpMat identity_;
  SpMat lumped_block_;  ///< diag(D A, -D A) with A the thresholded M^{-1} K
};

Vec stack(const std::vector<CanonicalState>& states);
std::vector<CanonicalState> unstack(const Vec& x, int slice_dim);

/// Newton on a fixed mesh. Throws SolverError on divergence.
PathSolution bvp_newton(const CollocationSystem& cs, const Vec& P0,
                        const std::vector<double>& times, std::vector<CanonicalState> guess);

/// Newton plus adaptive time-mesh refinement. The guess defines the initial mesh.
PathSolution bvp_solve(const BvpProblem& problem, const PathSolution& guess,
                       const BvpOptions& opts = {});

/// Discounted objective on the time mesh plus the salvage term.
double objective_value(const PathSolution& path, const SystemOperators& sys);

/// u(t) = u_hat on a uniform mesh with m intervals.
PathSolution constant_path(const CanonicalState& u_hat, double T, int m);

/// Linear interpolation of a path onto another time mesh (clamped at the ends).
std::vector<CanonicalState> resample(const PathSolution& path, const std::vector<double>& times);

/// Fills J, terminal gap and residual norm.
void finalize(PathSolution& path, const CollocationSystem& cs, const Vec& P0);

}  // namespace sloc
