#pragma once

// The spatially discretized canonical system
//
//     M du/dt = -G(u),   G(u) = diag(D K, -D K) u - diag(M, M) F(u),
//
// with u = (P_1..P_n, q_1..q_n) and F the pointwise canonical vector field
// after substituting the optimal control k = -1/q.

#include "sloc/fem1d.hpp"
#include "sloc/model.hpp"

#include <Eigen/SparseCholesky>

#include <functional>
#include <memory>
#include <vector>

namespace sloc {

/// Nodal canonical state: the first n entries are P, the last n are q.
using CanonicalState = Vec;

inline auto state_part(const CanonicalState& u) { return u.head(u.size() / 2); }
inline auto costate_part(const CanonicalState& u) { return u.tail(u.size() / 2); }

/// Flat state (P, ..., P, q, ..., q) with n nodes.
CanonicalState flat_state(double P, double q, int n);

/// Mirror image x -> L - x of both parts. A symmetry of the system on a uniform mesh.
CanonicalState reflect(const CanonicalState& u);

struct SystemOperators {
  ModelParams params;
  Mesh1D mesh;
  FemOperators fem;
  SpMat block_k;  ///< diag(D K, -D K)
  SpMat block_m;  ///< diag(M, M)
  std::shared_ptr<const Eigen::SimplicialLDLT<SpMat>> mass_solver;  ///< factor of M

  int nodes() const { return mesh.size(); }
  int dim() const { return 2 * mesh.size(); }

  static SystemOperators make(const ModelParams& params, const Mesh1D& mesh);

  /// Copy with a different degradation rate b; operators are shared.
  SystemOperators with_b(double b) const;
};

/// Throws DomainError unless every costate entry is negative.
void check_admissible(const CanonicalState& u);

/// Pointwise F(u): (k - bP + g(P), 2 gamma P + q (r + b - g'(P))) with k = -1/q.
Vec nonlinearity(const CanonicalState& u, const ModelParams& params);

/// Nodal control k = -1/q.
Vec control_of(const CanonicalState& u);

Vec residual(const CanonicalState& u, const SystemOperators& sys);

/// dG/du. The Jacobian of the evolution field -G is its negative.
SpMat jacobian(const CanonicalState& u, const SystemOperators& sys);

/// Pointwise dF/du as a 2n x 2n matrix with four diagonal blocks.
SpMat nonlinearity_jacobian(const CanonicalState& u, const ModelParams& params);

/// dG/db, used by continuation in b.
Vec residual_db(const CanonicalState& u, const SystemOperators& sys);

/// Solves M x = v for one n-block.
Vec mass_solve(const SystemOperators& sys, const Vec& v);

/// Solves diag(M, M) x = v for a 2n vector.
Vec block_mass_solve(const SystemOperators& sys, const Vec& v);

/// du/dt = -diag(M, M)^{-1} G(u).
Vec evolution_rate(const CanonicalState& u, const SystemOperators& sys);

/// J_ca(P, k) of a canonical state.
double averaged_objective(const CanonicalState& u, const SystemOperators& sys);

enum class Stepping { backward_euler, trapezoidal };

using ControlField = std::function<double(double x, double t)>;

struct IvpResult {
  std::vector<double> times;
  std::vector<Vec> states;    ///< nodal P per time
  std::vector<Vec> controls;  ///< nodal k per time
  double objective = 0.0;     ///< discounted value with salvage term at the horizon
};

/// Integrates the controlled state equation M dP/dt = -D K P + M f(P, k)
/// forward in time. Only the state equation is well posed forward.
IvpResult forward_ivp(const Vec& P0, const ControlField& control, const SystemOperators& sys,
                      double horizon, double dt, Stepping stepping = Stepping::backward_euler);

}  // namespace sloc
