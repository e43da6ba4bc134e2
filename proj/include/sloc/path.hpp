#pragma once

// Initial-state continuation of connecting orbits, Skiba points and the
// comparison of steady states by the values of paths between them.

#include "sloc/bvp.hpp"
#include "sloc/css.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sloc {

/// A steady state with the saddle-point property, ready as a path target.
struct CssTarget {
  std::string id;
  CssRecord css;
  ProjectionPsi psi;
};

/// Builds Psi. Throws SolverError("no SPP (defect d)") for defective states.
CssTarget make_target(const std::string& id, const CssRecord& css, const SystemOperators& sys);

/// Initial distributions P(0) = from + alpha (to - from).
struct HomotopyLine {
  Vec from;
  Vec to;
  Vec at(double alpha) const { return from + alpha * (to - from); }
  /// Coordinate of P along the line in the M inner product.
  double coordinate(const Vec& P, const FemOperators& fem) const;
};

struct IscontOptions {
  double T = 100.0;
  int m0 = 20;
  double step = 0.25;          ///< initial and maximal alpha step
  double step_min = 1e-4;
  double max_T = 400.0;
  double gap_tol = 0.05;       ///< terminal gap / (1 + ||u_hat||_inf)
  double alpha_end = 1.0;
  bool arclength = true;       ///< fall back to arclength in (path, alpha)
  double ds0 = 0.05;
  double ds_max = 0.2;
  double ds_min = 1e-5;
  int max_arc_steps = 150;
  int max_folds = 3;           ///< arclength stops beyond this many folds
  BvpOptions bvp;
  std::function<void(const PathSolution&)> progress;  ///< called for every new member
};

struct PathFamily {
  std::string target_id;
  HomotopyLine line;
  std::vector<PathSolution> members;  ///< in continuation order
  std::vector<double> folds;          ///< alpha values where alpha turned
  bool reached = false;               ///< a member sits at alpha_end
  std::string message;                ///< reason when not reached

  const PathSolution& last() const { return members.back(); }
};

/// alpha from 0 (P(0) = target state) to 1 (P(0) = P0).
PathFamily iscont(const Vec& P0, const CssTarget& target, const SystemOperators& sys,
                  const IscontOptions& opts = {});

/// alpha along an arbitrary line. Without `start` the first solve is at
/// alpha = 0 from the constant guess at the target.
PathFamily iscont_line(const HomotopyLine& line, const CssTarget& target, const SystemOperators& sys,
                       const IscontOptions& opts = {}, const PathSolution* start = nullptr);

/// Family of paths to `target` whose initial distributions cover `line`.
/// When the target state is not an endpoint of the line, the line is first
/// reached from the nearer endpoint.
PathFamily family_on_line(const HomotopyLine& line, const CssTarget& target,
                          const SystemOperators& sys, const IscontOptions& opts = {});

struct SkibaResult {
  double alpha = 0.0;  ///< coordinate on the common line
  Vec P;               ///< indifference distribution
  double J = 0.0;      ///< common value
  PathSolution pathA;
  PathSolution pathB;
};

/// Intersection of the upper envelopes J_A(alpha), J_B(alpha) over the common
/// alpha range, confirmed by re-solving both problems at alpha*.
SkibaResult skiba_find(const PathFamily& A, const CssTarget& targetA, const PathFamily& B,
                       const CssTarget& targetB, const HomotopyLine& line, const SystemOperators& sys,
                       const IscontOptions& opts = {});

/// (alpha on `line`, J) of every member, in continuation order.
std::vector<std::pair<double, double>> family_curve(const PathFamily& family, const HomotopyLine& line,
                                                    const FemOperators& fem);

struct PairValue {
  std::string to;
  std::optional<double> J;
  std::string error;
};

struct OptimalityEntry {
  std::string id;
  double J_css = 0.0;
  double best_J = 0.0;
  std::string best_target;  ///< id of the best target (itself if undominated)
  bool dominated = false;
  std::vector<PairValue> paths;
};

/// Compares each steady state's value with the paths from its state to all
/// other targets. Solver failures are recorded per pair.
std::vector<OptimalityEntry> classify_optimal(const std::vector<CssTarget>& targets,
                                              const SystemOperators& sys,
                                              const IscontOptions& opts = {});

}  // namespace sloc
