#pragma once

// Canonical steady states: flat roots, Newton on G(u) = 0, pseudo-arclength
// continuation in b with fold and branch point detection, branch switching
// and the dispersion relation of flat states.

#include "sloc/cansys.hpp"
#include "sloc/spectral.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace sloc {

struct FlatRoot {
  double P = 0.0;
  double q = 0.0;
  double k = 0.0;  ///< -1/q
  double J = 0.0;  ///< J_c(P, k) / r
};

/// All flat steady states with q < 0, ordered by increasing P.
std::vector<FlatRoot> fcss_roots(const ModelParams& params);

/// b where the flat family changes from three roots to one, by bisection on
/// the root count over [b_lo, b_hi].
double fold_locate(const ModelParams& params, double b_lo = 0.6, double b_hi = 0.8,
                   double tol = 1e-4);

enum class CssKind { flat, patterned };

struct CssRecord {
  CanonicalState u;
  double b = 0.0;
  CssKind kind = CssKind::flat;
  double avgP = 0.0;
  double avgK = 0.0;
  double normP = 0.0;
  double J = 0.0;
  std::optional<int> defect;
  std::vector<Complex> spectrum;

  /// Fills the averages, J and kind from u; leaves defect/spectrum untouched.
  static CssRecord from_state(const CanonicalState& u, const SystemOperators& sys);

  /// Computes and stores the spectrum and defect.
  void attach_spectrum(const SystemOperators& sys);
};

/// Relative deviation from the spatial mean above which a state counts as patterned.
inline constexpr double kPatternThreshold = 1e-6;

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 25;
};

/// Newton on G(u) = 0 at sys.params.b. Converged when
/// ||G||_inf < tol (1 + ||u||_inf).
CssRecord newton_css(const CanonicalState& u0, const SystemOperators& sys,
                     const NewtonOptions& opts = {});

enum class PointFlag { regular, fold, bif };

const char* to_string(PointFlag f);
PointFlag point_flag_from_string(const std::string& s);

struct BranchPoint {
  CssRecord css;
  Vec tangent;  ///< (du, db), unit length in the continuation inner product
  PointFlag flag = PointFlag::regular;
};

struct Branch {
  std::string name;
  std::vector<BranchPoint> points;
};

struct ContinuationOptions {
  double ds0 = 0.02;
  double ds_min = 1e-6;
  double ds_max = 0.2;
  double growth = 1.5;
  double b_min = 0.5;
  double b_max = 0.8;
  int max_steps = 400;
  double newton_tol = 1e-10;
  int max_corrector = 15;
  bool spectra = true;            ///< spectrum and defect at every accepted point
  bool detect = true;             ///< fold and branch point markers
  bool localize = true;           ///< bisect to the exact branch point
  double center_tol = 1e-8;
};

/// Weighted inner product of (u, b) pairs: u.v / dim + b_u b_v.
double continuation_dot(const Vec& x, const Vec& y);

/// Tangent to the solution curve of G(u, b) = 0 at a converged point,
/// oriented along `orient` when given.
Vec branch_tangent(const CanonicalState& u, const SystemOperators& sys, const Vec* orient = nullptr);

/// Pseudo-arclength continuation in b. direction = +1 follows the tangent,
/// -1 reverses it. The initial tangent is computed unless supplied. Stops
/// when b leaves [b_min, b_max], after max_steps, or when the step collapses.
Branch continue_branch(const CssRecord& start, const SystemOperators& sys, int direction,
                       const ContinuationOptions& opts = {}, const Vec* initial_tangent = nullptr);

/// Flat kernel mode count of a patterned state's fundamental wave: number of
/// sign changes of P - <P> along the mesh.
int sign_changes(const Vec& v);

/// Kernel of dG/du at a (localized) branch point, normalized so that the
/// P-part has unit normalized L2 norm; the second return is its wavenumber
/// j pi / (2L) estimated from sign changes.
std::pair<Vec, double> bifurcation_kernel(const BranchPoint& at, const SystemOperators& sys);

struct SwitchOptions {
  double amplitude = 0.1;
  int halvings = 4;
  double newton_tol = 1e-10;
  int max_corrector = 20;
};

/// Switches onto the branch bifurcating at `at`: predictor u + a phi, then a
/// corrector on G(u, b) = 0 with b free and the step fixed along (phi, 0).
/// Tries both signs, halving a on failure. The returned point carries a
/// tangent pointing away from the bifurcation.
BranchPoint branch_switch(const BranchPoint& at, const SystemOperators& sys,
                          const SwitchOptions& opts = {});

/// Points of the branch at parameter b, polished by Newton at fixed b.
/// Ordered by position along the branch.
std::vector<CssRecord> branch_crossings(const Branch& branch, double b, const SystemOperators& sys);

/// Eigenvalues of the per-wavenumber linearization at a flat state.
std::array<Complex, 2> dispersion(double P, double q, const ModelParams& params, double k2);

/// Determinant of the per-wavenumber 2x2 linearization.
double dispersion_det(double P, double q, const ModelParams& params, double k2);

/// Wavenumbers in (0, k_max] where the dispersion determinant changes sign.
std::vector<double> critical_wavenumbers(double P, double q, const ModelParams& params,
                                         double k_max = 2.0);

}  // namespace sloc
