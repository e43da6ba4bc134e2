#include "sloc/bvp.hpp"

#include "sloc/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sloc {

namespace {

SpMat block_diag_pm(const SpMat& a) {
  const Eigen::Index n = a.rows();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * a.nonZeros());
  for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
    for (SpMat::InnerIterator it(a, k); it; ++it) {
      trips.emplace_back(it.row(), k, it.value());
      trips.emplace_back(it.row() + n, k + n, -it.value());
    }
  }
  SpMat out(2 * n, 2 * n);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

double max_abs(const std::vector<CanonicalState>& states) {
  double m = 0.0;
  for (const auto& u : states) m = std::max(m, u.lpNorm<Eigen::Infinity>());
  return m;
}

void check_mesh(const std::vector<double>& times, std::size_t states) {
  if (times.size() < 2 || times.size() != states) {
    throw std::invalid_argument("bvp: time mesh and states differ in length");
  }
  for (std::size_t j = 0; j + 1 < times.size(); ++j) {
    if (!(times[j + 1] > times[j])) throw std::invalid_argument("bvp: time mesh not increasing");
  }
}

}  // namespace

Vec stack(const std::vector<CanonicalState>& states) {
  const Eigen::Index N = states.front().size();
  Vec x(N * static_cast<Eigen::Index>(states.size()));
  for (std::size_t j = 0; j < states.size(); ++j) {
    x.segment(static_cast<Eigen::Index>(j) * N, N) = states[j];
  }
  return x;
}

std::vector<CanonicalState> unstack(const Vec& x, int slice_dim) {
  const Eigen::Index count = x.size() / slice_dim;
  std::vector<CanonicalState> out(count);
  for (Eigen::Index j = 0; j < count; ++j) out[j] = x.segment(j * slice_dim, slice_dim);
  return out;
}

CollocationSystem::CollocationSystem(const SystemOperators& sys, const ProjectionPsi& psi,
                                     const BvpOptions& opts)
    : sys_(&sys), psi_(&psi), opts_(opts) {
  identity_.resize(sys.dim(), sys.dim());
  identity_.setIdentity();
  if (opts.lumped) {
    lumped_block_ = block_diag_pm(SpMat(sys.params.D * lumped_product(sys.fem, opts.delta)));
  }
}

Vec CollocationSystem::assemble_residual(const std::vector<double>& times,
                                         const std::vector<CanonicalState>& states, const Vec& P0,
                                         bool exact) const {
  check_mesh(times, states.size());
  const int n = nodes();
  const int N = slice_dim();
  const Eigen::Index m = static_cast<Eigen::Index>(times.size()) - 1;
  const SystemOperators& sys = *sys_;
  const bool premultiply = opts_.lumped && !exact;

  std::vector<Vec> g;
  kernels::SliceFunction fn = [&](const Vec& u, Vec& out, SpMat*) {
    out = premultiply ? block_mass_solve(sys, sloc::residual(u, sys)) : sloc::residual(u, sys);
  };
  kernels::evaluate_slices(fn, states, g, nullptr, opts_.backend);
  std::vector<Vec> coll;
  kernels::collocation_residuals(premultiply ? identity_ : sys.block_m, times, states, g, coll,
                                 opts_.backend);

  Vec R((m + 1) * N);
  R.head(n) = states.front().head(n) - P0;
  for (Eigen::Index j = 0; j < m; ++j) R.segment(n + j * N, N) = coll[j];
  R.tail(n) = psi_->psi * (states.back() - psi_->target);
  return R;
}

Vec CollocationSystem::residual(const std::vector<double>& times,
                                const std::vector<CanonicalState>& states, const Vec& P0) const {
  return assemble_residual(times, states, P0, false);
}

Vec CollocationSystem::exact_residual(const std::vector<double>& times,
                                      const std::vector<CanonicalState>& states,
                                      const Vec& P0) const {
  return assemble_residual(times, states, P0, true);
}

SpMat CollocationSystem::jacobian(const std::vector<double>& times,
                                  const std::vector<CanonicalState>& states) const {
  check_mesh(times, states.size());
  const int n = nodes();
  const int N = slice_dim();
  const Eigen::Index m = static_cast<Eigen::Index>(times.size()) - 1;
  const SystemOperators& sys = *sys_;

  std::vector<Vec> g;
  std::vector<SpMat> jac;
  kernels::SliceFunction fn = [&](const Vec& u, Vec& out, SpMat* J) {
    out.resize(0);
    if (opts_.lumped) {
      *J = lumped_block_ - nonlinearity_jacobian(u, sys.params);
    } else {
      *J = sloc::jacobian(u, sys);
    }
  };
  kernels::evaluate_slices(fn, states, g, &jac, opts_.backend);

  std::vector<kernels::Triplet> trips;
  trips.reserve(static_cast<std::size_t>(n) + static_cast<std::size_t>(n) * N +
                static_cast<std::size_t>(m) * 12 * N);
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 1.0);
  kernels::collocation_triplets(opts_.lumped ? identity_ : sys.block_m, times, jac, n, trips,
                                opts_.backend);
  const Eigen::Index row0 = n + m * N;
  const Eigen::Index col0 = m * N;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < N; ++k) {
      const double v = psi_->psi(i, k);
      if (v != 0.0) trips.emplace_back(row0 + i, col0 + k, v);
    }
  }
  SpMat A((m + 1) * N, (m + 1) * N);
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

std::vector<double> CollocationSystem::defects(const std::vector<double>& times,
                                               const std::vector<CanonicalState>& states,
                                               std::vector<Vec>* rates) const {
  const SystemOperators& sys = *sys_;
  std::vector<Vec> f;
  kernels::SliceFunction fn = [&](const Vec& u, Vec& out, SpMat*) { out = evolution_rate(u, sys); };
  kernels::evaluate_slices(fn, states, f, nullptr, opts_.backend);
  kernels::RateFunction rate = [&](const Vec& u) { return evolution_rate(u, sys); };
  std::vector<double> d;
  kernels::midpoint_defects(rate, times, states, f, d, opts_.backend);
  if (rates) *rates = std::move(f);
  return d;
}

void finalize(PathSolution& path, const CollocationSystem& cs, const Vec& P0) {
  path.J = objective_value(path, cs.sys());
  path.terminal_gap = (path.states.back() - cs.psi().target).lpNorm<Eigen::Infinity>();
  const Vec R = cs.exact_residual(path.times, path.states, P0);
  path.residual_norm = R.lpNorm<Eigen::Infinity>();
}

PathSolution bvp_newton(const CollocationSystem& cs, const Vec& P0,
                        const std::vector<double>& times, std::vector<CanonicalState> guess) {
  const BvpOptions& opts = cs.options();
  const int N = cs.slice_dim();
  Vec x = stack(guess);
  Vec R = cs.residual(times, guess, P0);
  double res = R.lpNorm<Eigen::Infinity>();
  Eigen::SparseLU<SpMat> lu;
  bool analyzed = false;
  int stalls = 0;
  for (int it = 0; it <= opts.max_iter; ++it) {
    std::vector<CanonicalState> states = unstack(x, N);
    if (res < opts.tol * (1.0 + max_abs(states))) {
      PathSolution out;
      out.times = times;
      out.states = std::move(states);
      out.newton_iterations = it;
      return out;
    }
    if (it == opts.max_iter) break;
    const SpMat A = cs.jacobian(times, states);
    if (!analyzed) {
      lu.analyzePattern(A);
      analyzed = true;
    }
    lu.factorize(A);
    if (lu.info() != Eigen::Success) {
      throw SolverError("bvp: singular collocation Jacobian", res);
    }
    const Vec dx = lu.solve(-R);
    if (!dx.allFinite()) throw SolverError("bvp: non-finite Newton step", res);

    // Backtracking on the residual norm; also recovers from steps that leave
    // the admissible set q < 0.
    double lambda = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 6; ++bt, lambda *= 0.5) {
      const Vec trial = x + lambda * dx;
      try {
        const auto ts = unstack(trial, N);
        const Vec Rt = cs.residual(times, ts, P0);
        const double rt = Rt.lpNorm<Eigen::Infinity>();
        if (std::isfinite(rt) && (rt < res || bt == 5)) {
          stalls = rt < res ? 0 : stalls + 1;
          x = trial;
          R = Rt;
          res = rt;
          accepted = true;
          break;
        }
      } catch (const DomainError&) {
        if (bt == 5) throw;
      }
    }
    if (!accepted) throw SolverError("bvp: line search failed", res);
    if (res > 1e8) throw SolverError("bvp: Newton diverged", res);
    if (stalls >= 3) throw SolverError("bvp: Newton stagnated", res);
  }
  throw SolverError("bvp: no convergence, last residual " + std::to_string(res), res);
}

namespace {

void refine_mesh(const std::vector<double>& times, const std::vector<CanonicalState>& states,
                 const std::vector<Vec>& rates, const std::vector<bool>& mark,
                 std::vector<double>& new_times, std::vector<CanonicalState>& new_states) {
  new_times.clear();
  new_states.clear();
  for (std::size_t j = 0; j + 1 < times.size(); ++j) {
    new_times.push_back(times[j]);
    new_states.push_back(states[j]);
    if (mark[j]) {
      const double h = times[j + 1] - times[j];
      new_times.push_back(times[j] + 0.5 * h);
      new_states.push_back(0.5 * (states[j] + states[j + 1]) + (h / 8.0) * (rates[j] - rates[j + 1]));
    }
  }
  new_times.push_back(times.back());
  new_states.push_back(states.back());
}

}  // namespace

PathSolution bvp_solve(const BvpProblem& problem, const PathSolution& guess,
                       const BvpOptions& opts) {
  if (!problem.sys || !problem.psi) throw std::invalid_argument("bvp_solve: incomplete problem");
  const SystemOperators& sys = *problem.sys;
  if (problem.P0.size() != sys.nodes()) {
    throw std::invalid_argument("bvp_solve: initial distribution has the wrong length");
  }
  CollocationSystem cs(sys, *problem.psi, opts);
  std::vector<double> times = guess.times;
  std::vector<CanonicalState> states = guess.states;
  PathSolution sol;
  for (;;) {
    sol = bvp_newton(cs, problem.P0, times, states);
    if (!opts.refine) break;
    std::vector<Vec> rates;
    const std::vector<double> d = cs.defects(sol.times, sol.states, &rates);
    const double scale = 1.0 + max_abs(sol.states);
    const double worst = *std::max_element(d.begin(), d.end());
    if (worst <= opts.mesh_tol * scale) break;
    const int m = sol.intervals();
    if (m >= opts.max_intervals) break;
    std::vector<double> sorted = d;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    std::vector<bool> mark(d.size(), false);
    int budget = opts.max_intervals - m;
    // Worst intervals first so the budget goes where it matters.
    std::vector<std::size_t> order(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
    for (std::size_t j : order) {
      if (budget <= 0) break;
      if (d[j] > opts.mesh_tol * scale || d[j] > opts.median_factor * median) {
        mark[j] = true;
        --budget;
      }
    }
    refine_mesh(sol.times, sol.states, rates, mark, times, states);
  }
  sol.alpha = problem.alpha;
  sol.target_id = guess.target_id;
  finalize(sol, cs, problem.P0);
  return sol;
}

double objective_value(const PathSolution& path, const SystemOperators& sys) {
  std::vector<double> jca(path.states.size());
  for (std::size_t j = 0; j < jca.size(); ++j) jca[j] = averaged_objective(path.states[j], sys);
  return discounted_value(path.times, jca, sys.params.r);
}

PathSolution constant_path(const CanonicalState& u_hat, double T, int m) {
  if (m < 1 || !(T > 0.0)) throw std::invalid_argument("constant_path: need m >= 1 and T > 0");
  PathSolution p;
  p.times.resize(m + 1);
  for (int j = 0; j <= m; ++j) p.times[j] = T * j / m;
  p.states.assign(m + 1, u_hat);
  return p;
}

std::vector<CanonicalState> resample(const PathSolution& path, const std::vector<double>& times) {
  std::vector<CanonicalState> out;
  out.reserve(times.size());
  const auto& ts = path.times;
  for (double t : times) {
    if (t <= ts.front()) {
      out.push_back(path.states.front());
      continue;
    }
    if (t >= ts.back()) {
      out.push_back(path.states.back());
      continue;
    }
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - ts.begin()) - 1;
    const double w = (t - ts[j]) / (ts[j + 1] - ts[j]);
    out.push_back((1.0 - w) * path.states[j] + w * path.states[j + 1]);
  }
  return out;
}

}  // namespace sloc
