#include "sloc/path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sloc {

CssTarget make_target(const std::string& id, const CssRecord& css, const SystemOperators& sys) {
  const SystemOperators sb = sys.with_b(css.b);
  CssTarget t;
  t.id = id;
  t.css = css;
  t.psi = build_psi(css.u, sb);
  return t;
}

double HomotopyLine::coordinate(const Vec& P, const FemOperators& fem) const {
  const Vec d = to - from;
  const double dd = d.dot(fem.mass * d);
  if (dd == 0.0) throw std::invalid_argument("HomotopyLine: degenerate line");
  return (P - from).dot(fem.mass * d) / dd;
}

namespace {

bool is_solver_failure(const std::exception& e) {
  return dynamic_cast<const SolverError*>(&e) || dynamic_cast<const DomainError*>(&e);
}

PathSolution extend_horizon(const PathSolution& s, const CssTarget& target, double new_T) {
  PathSolution out = s;
  const double T = s.horizon();
  const int extra = std::max(10, s.intervals() / 4);
  const CanonicalState d = s.states.back() - target.css.u;
  for (int k = 1; k <= extra; ++k) {
    const double t = T + (new_T - T) * k / extra;
    out.times.push_back(t);
    out.states.push_back(target.css.u + std::exp(-target.psi.slowest_rate * (t - T)) * d);
  }
  return out;
}

struct Solver {
  const HomotopyLine& line;
  const CssTarget& target;
  const SystemOperators& sys;
  const IscontOptions& opts;

  double gap_limit() const {
    return opts.gap_tol * (1.0 + target.css.u.lpNorm<Eigen::Infinity>());
  }

  PathSolution solve_at(double a, const PathSolution& guess) const {
    const BvpProblem pb{&sys, &target.psi, line.at(a), a};
    PathSolution s = bvp_solve(pb, guess, opts.bvp);
    while (s.terminal_gap >= gap_limit() && 2.0 * s.horizon() <= opts.max_T) {
      s = bvp_solve(pb, extend_horizon(s, target, 2.0 * s.horizon()), opts.bvp);
    }
    if (s.terminal_gap >= gap_limit()) {
      throw SolverError("terminal gap " + std::to_string(s.terminal_gap) +
                        " exceeds the closeness threshold at the largest horizon");
    }
    s.target_id = target.id;
    return s;
  }
};

void add_member(PathFamily& fam, PathSolution s, const IscontOptions& opts) {
  fam.members.push_back(std::move(s));
  if (opts.progress) opts.progress(fam.members.back());
}

std::vector<CanonicalState> secant_guess(const PathSolution& p0, const PathSolution& p1, double a2) {
  const std::vector<CanonicalState> u0 = resample(p0, p1.times);
  const double w = (a2 - p1.alpha) / (p1.alpha - p0.alpha);
  std::vector<CanonicalState> out(p1.states.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = p1.states[j] + w * (p1.states[j] - u0[j]);
  return out;
}

// Arclength in (path, alpha) on the fixed mesh of `from`.
void arclength(PathFamily& fam, const Solver& solver, const PathSolution from) {
  const IscontOptions& opts = solver.opts;
  const SystemOperators& sys = solver.sys;
  CollocationSystem cs(sys, solver.target.psi, opts.bvp);
  const int n = sys.nodes();
  const int N = sys.dim();
  const std::vector<double>& times = from.times;
  const Eigen::Index X = static_cast<Eigen::Index>(times.size()) * N;
  const double w = 1.0 / static_cast<double>(X);
  const Vec dP = solver.line.to - solver.line.from;

  auto dot = [&](const Vec& a, const Vec& b) { return w * a.head(X).dot(b.head(X)) + a[X] * b[X]; };
  auto extended = [&](const std::vector<CanonicalState>& states, const Vec& t) {
    const SpMat A = cs.jacobian(times, states);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(A.nonZeros() + X + n + 1);
    for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A, k); it; ++it) trips.emplace_back(it.row(), k, it.value());
    }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, X, -dP[i]);
    for (Eigen::Index k = 0; k < X; ++k) {
      if (t[k] != 0.0) trips.emplace_back(X, k, w * t[k]);
    }
    trips.emplace_back(X, X, t[X]);
    SpMat E(X + 1, X + 1);
    E.setFromTriplets(trips.begin(), trips.end());
    E.makeCompressed();
    return E;
  };
  auto tangent = [&](const std::vector<CanonicalState>& states, const Vec& border) {
    Eigen::SparseLU<SpMat> lu(extended(states, border));
    if (lu.info() != Eigen::Success) throw SolverError("iscont: singular extended system");
    Vec rhs = Vec::Zero(X + 1);
    rhs[X] = 1.0;
    Vec t = lu.solve(rhs);
    t /= std::sqrt(dot(t, t));
    return t;
  };

  Vec y(X + 1);
  y.head(X) = stack(from.states);
  y[X] = from.alpha;
  Vec border = Vec::Zero(X + 1);
  border[X] = 1.0;
  Vec t = tangent(from.states, border);
  if (t[X] < 0.0) t = -t;

  double ds = opts.ds0;
  int steps = 0;
  const double end = opts.alpha_end;
  while (steps < opts.max_arc_steps) {
    Vec z = y + ds * t;
    bool ok = false;
    try {
      Eigen::SparseLU<SpMat> lu;
      for (int it = 0; it < 12; ++it) {
        const auto states = unstack(z.head(X), N);
        const Vec R = cs.residual(times, states, solver.line.at(z[X]));
        const double arc = dot(t, z - y) - ds;
        double umax = 0.0;
        for (const auto& u : states) umax = std::max(umax, u.lpNorm<Eigen::Infinity>());
        if (R.lpNorm<Eigen::Infinity>() < opts.bvp.tol * (1.0 + umax) && std::abs(arc) < 1e-9) {
          ok = true;
          break;
        }
        lu.compute(extended(states, t));
        if (lu.info() != Eigen::Success) break;
        Vec rhs(X + 1);
        rhs.head(X) = -R;
        rhs[X] = -arc;
        z += lu.solve(rhs);
        if (!z.allFinite()) break;
      }
    } catch (const std::exception& e) {
      if (!is_solver_failure(e)) throw;
      ok = false;
    }
    if (!ok) {
      ds *= 0.5;
      if (ds < opts.ds_min) {
        fam.message = "arclength step collapsed at alpha " + std::to_string(y[X]);
        return;
      }
      continue;
    }
    const auto states = unstack(z.head(X), N);
    PathSolution s;
    s.times = times;
    s.states = states;
    s.alpha = z[X];
    s.target_id = solver.target.id;
    finalize(s, cs, solver.line.at(z[X]));
    if (s.terminal_gap >= solver.gap_limit()) {
      // The curve has left the paths that end near the target.
      fam.message = "arclength left the neighbourhood of the target at alpha " + std::to_string(z[X]);
      return;
    }

    if (z[X] >= end) {
      // Land exactly on alpha_end from the bracketing solutions; retreat with
      // a shorter step when the landing does not converge.
      const PathSolution& prev = fam.members.back();
      const double lam = (end - prev.alpha) / (s.alpha - prev.alpha);
      PathSolution guess = s;
      const auto u0 = resample(prev, s.times);
      for (std::size_t j = 0; j < guess.states.size(); ++j) {
        guess.states[j] = (1.0 - lam) * u0[j] + lam * s.states[j];
      }
      try {
        PathSolution landed = solver.solve_at(end, guess);
        add_member(fam, s, opts);
        add_member(fam, std::move(landed), opts);
        fam.reached = true;
        return;
      } catch (const std::exception& e) {
        if (!is_solver_failure(e)) throw;
        ds *= 0.25;
        if (ds < opts.ds_min) {
          fam.message = std::string("final solve at alpha_end failed: ") + e.what();
          return;
        }
        continue;
      }
    }

    Vec tn = tangent(states, t);
    if (dot(tn, t) < 0.0) tn = -tn;
    if ((tn[X] > 0.0) != (t[X] > 0.0)) fam.folds.push_back(z[X]);
    add_member(fam, s, opts);
    if (static_cast<int>(fam.folds.size()) > opts.max_folds) {
      fam.message = "more than " + std::to_string(opts.max_folds) + " folds, stopped at alpha " + std::to_string(z[X]);
      return;
    }
    y = z;
    t = tn;
    ++steps;

    if (z[X] < -0.25) {
      fam.message = "arclength turned back below alpha = 0";
      return;
    }
    ds = std::min(ds * 1.5, opts.ds_max);
  }
  fam.message = "arclength step budget exhausted at alpha " + std::to_string(y[X]);
}

}  // namespace

PathFamily iscont_line(const HomotopyLine& line, const CssTarget& target, const SystemOperators& sys,
                       const IscontOptions& opts, const PathSolution* start) {
  const SystemOperators sb = sys.with_b(target.css.b);
  PathFamily fam;
  fam.target_id = target.id;
  fam.line = line;
  const Solver solver{fam.line, target, sb, opts};
  const double T = std::max(opts.T, target.psi.horizon_bound());

  PathSolution cur;
  if (start) {
    cur = *start;
    cur.alpha = 0.0;
    cur.target_id = target.id;
  } else {
    cur = solver.solve_at(0.0, constant_path(target.css.u, T, opts.m0));
  }
  add_member(fam, cur, opts);

  double a = 0.0;
  double da = opts.step;
  int fresh = 1;  // members produced by the alpha stepping so far
  while (a < opts.alpha_end - 1e-14) {
    const double a2 = std::min(opts.alpha_end, a + da);
    PathSolution guess = fam.last();
    if (fresh >= 2) {
      const auto& m = fam.members;
      guess.states = secant_guess(m[m.size() - 2], m.back(), a2);
    }
    try {
      add_member(fam, solver.solve_at(a2, guess), opts);
      a = a2;
      ++fresh;
      da = std::min(opts.step, 2.0 * da);
    } catch (const std::exception& e) {
      if (!is_solver_failure(e)) throw;
      da *= 0.5;
      if (da < opts.step_min) {
        fam.message = std::string("alpha stepping stalled: ") + e.what();
        break;
      }
    }
  }
  if (a >= opts.alpha_end - 1e-14) {
    fam.reached = true;
    return fam;
  }
  if (opts.arclength) {
    fam.message.clear();
    arclength(fam, solver, fam.last());
  }
  return fam;
}

PathFamily iscont(const Vec& P0, const CssTarget& target, const SystemOperators& sys,
                  const IscontOptions& opts) {
  HomotopyLine line{state_part(target.css.u), P0};
  return iscont_line(line, target, sys, opts);
}

PathFamily family_on_line(const HomotopyLine& line, const CssTarget& target,
                          const SystemOperators& sys, const IscontOptions& opts) {
  const SystemOperators sb = sys.with_b(target.css.b);
  const Vec Phat = state_part(target.css.u);
  const double d_from = normalized_l2(Vec(line.from - Phat), sb.fem);
  const double d_to = normalized_l2(Vec(line.to - Phat), sb.fem);
  const HomotopyLine reversed{line.to, line.from};
  constexpr double same = 1e-10;
  if (d_from < same) return iscont_line(line, target, sb, opts);
  if (d_to < same) return iscont_line(reversed, target, sb, opts);
  const HomotopyLine& oriented = d_from <= d_to ? line : reversed;
  PathFamily approach = iscont(oriented.from, target, sb, opts);
  if (!approach.reached) {
    approach.message = "could not reach the line: " + approach.message;
    return approach;
  }
  return iscont_line(oriented, target, sb, opts, &approach.last());
}

std::vector<std::pair<double, double>> family_curve(const PathFamily& family, const HomotopyLine& line,
                                                    const FemOperators& fem) {
  std::vector<std::pair<double, double>> out;
  const int n = static_cast<int>(line.from.size());
  for (const auto& m : family.members) {
    out.emplace_back(line.coordinate(m.states.front().head(n), fem), m.J);
  }
  return out;
}

namespace {

struct EnvelopeHit {
  double J;
  std::size_t segment;
  double weight;
};

std::optional<EnvelopeHit> envelope(const std::vector<std::pair<double, double>>& c, double a) {
  std::optional<EnvelopeHit> best;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const double a0 = c[i].first, a1 = c[i + 1].first;
    if (a < std::min(a0, a1) || a > std::max(a0, a1)) continue;
    const double w = a1 == a0 ? 0.0 : (a - a0) / (a1 - a0);
    const double J = (1.0 - w) * c[i].second + w * c[i + 1].second;
    if (!best || J > best->J) best = EnvelopeHit{J, i, w};
  }
  return best;
}

std::pair<double, double> curve_range(const std::vector<std::pair<double, double>>& c) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [a, J] : c) {
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  return {lo, hi};
}

PathSolution envelope_guess(const PathFamily& fam, const EnvelopeHit& hit) {
  const PathSolution& p1 = fam.members[hit.segment + 1];
  const auto u0 = resample(fam.members[hit.segment], p1.times);
  PathSolution g = p1;
  for (std::size_t j = 0; j < g.states.size(); ++j) {
    g.states[j] = (1.0 - hit.weight) * u0[j] + hit.weight * p1.states[j];
  }
  return g;
}

}  // namespace

SkibaResult skiba_find(const PathFamily& A, const CssTarget& targetA, const PathFamily& B,
                       const CssTarget& targetB, const HomotopyLine& line, const SystemOperators& sys,
                       const IscontOptions& opts) {
  const SystemOperators sb = sys.with_b(targetA.css.b);
  const auto cA = family_curve(A, line, sb.fem);
  const auto cB = family_curve(B, line, sb.fem);
  if (cA.size() < 2 || cB.size() < 2) throw SolverError("skiba_find: families too short");
  const auto [loA, hiA] = curve_range(cA);
  const auto [loB, hiB] = curve_range(cB);
  const double lo = std::max(loA, loB), hi = std::min(hiA, hiB);
  if (!(lo < hi)) throw SolverError("skiba_find: no intersection (alpha ranges do not overlap)");

  auto diff = [&](double a) -> std::optional<double> {
    const auto ea = envelope(cA, a);
    const auto eb = envelope(cB, a);
    if (!ea || !eb) return std::nullopt;
    return ea->J - eb->J;
  };
  constexpr int grid = 4000;
  std::optional<double> prev;
  double a_prev = lo;
  double left = 0.0, right = 0.0;
  bool found = false;
  for (int i = 0; i <= grid && !found; ++i) {
    const double a = lo + (hi - lo) * i / grid;
    const auto d = diff(a);
    if (d && prev && ((*d < 0.0) != (*prev < 0.0))) {
      left = a_prev;
      right = a;
      found = true;
    }
    if (d) {
      prev = d;
      a_prev = a;
    }
  }
  if (!found) throw SolverError("skiba_find: no intersection");
  const bool left_neg = *diff(left) < 0.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (left + right);
    const auto d = diff(mid);
    if (!d) break;
    if ((*d < 0.0) == left_neg) {
      left = mid;
    } else {
      right = mid;
    }
  }
  double a_star = 0.5 * (left + right);

  // Re-solve both problems at alpha* and refine by secant steps on the
  // resolved difference.
  PathSolution gA = envelope_guess(A, *envelope(cA, a_star));
  PathSolution gB = envelope_guess(B, *envelope(cB, a_star));
  auto solve_pair = [&](double a, PathSolution& pa, PathSolution& pbv) {
    const BvpProblem pa_problem{&sb, &targetA.psi, line.at(a), a};
    const BvpProblem pb_problem{&sb, &targetB.psi, line.at(a), a};
    pa = bvp_solve(pa_problem, pa, opts.bvp);
    pbv = bvp_solve(pb_problem, pbv, opts.bvp);
    pa.target_id = targetA.id;
    pbv.target_id = targetB.id;
    return pa.J - pbv.J;
  };
  double f0 = solve_pair(a_star, gA, gB);
  SkibaResult best{a_star, line.at(a_star), 0.5 * (gA.J + gB.J), gA, gB};
  double best_f = f0;
  double a0 = a_star;
  double a1 = a_star + 1e-3 * ((right - left) > 0 ? 1.0 : -1.0);
  try {
    PathSolution hA = gA, hB = gB;
    double f1 = solve_pair(a1, hA, hB);
    for (int it = 0; it < 8; ++it) {
      if (std::abs(f1) < std::abs(best_f)) {
        best = SkibaResult{a1, line.at(a1), 0.5 * (hA.J + hB.J), hA, hB};
        best_f = f1;
      }
      if (std::abs(best_f) < 1e-8 * std::abs(best.J) || f1 == f0) break;
      const double a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
      if (!(std::abs(a2 - a1) < 0.05)) break;
      a0 = a1;
      f0 = f1;
      a1 = a2;
      f1 = solve_pair(a1, hA, hB);
    }
  } catch (const std::exception& e) {
    if (!is_solver_failure(e)) throw;
  }
  if (!(std::abs(best_f) < 1e-3 * std::abs(best.J))) {
    throw SolverError("skiba_find: re-solved values differ by " + std::to_string(best_f));
  }
  return best;
}

std::vector<OptimalityEntry> classify_optimal(const std::vector<CssTarget>& targets,
                                              const SystemOperators& sys,
                                              const IscontOptions& opts) {
  if (targets.empty()) throw std::invalid_argument("classify_optimal: no steady states given");
  std::vector<OptimalityEntry> out;
  for (const auto& from : targets) {
    OptimalityEntry e;
    e.id = from.id;
    e.J_css = from.css.J;
    e.best_J = from.css.J;
    e.best_target = from.id;
    const Vec P0 = state_part(from.css.u);
    for (const auto& to : targets) {
      if (&to == &from) continue;
      PairValue pv;
      pv.to = to.id;
      try {
        const PathFamily fam = iscont(P0, to, sys, opts);
        if (fam.reached) {
          pv.J = fam.last().J;
        } else {
          pv.error = fam.message.empty() ? "alpha = 1 not reached" : fam.message;
        }
      } catch (const std::exception& ex) {
        if (!is_solver_failure(ex)) throw;
        pv.error = ex.what();
      }
      if (pv.J && *pv.J > e.best_J) {
        e.best_J = *pv.J;
        e.best_target = to.id;
      }
      e.paths.push_back(pv);
    }
    e.dominated = e.best_J > e.J_css + 1e-3 * std::abs(e.J_css);
    if (!e.dominated) e.best_target = e.id;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sloc
