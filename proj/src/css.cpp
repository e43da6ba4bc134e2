#include "sloc/css.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <functional>
#include <stdexcept>

namespace sloc {

// ---------------------------------------------------------------- flat roots

namespace {

double flat_costate(double P, const ModelParams& p) {
  return -2.0 * p.gamma * P / (p.r + p.b - recycling_d1(P));
}

double flat_residual(double P, const ModelParams& p) {
  const double q = flat_costate(P, p);
  return -1.0 / q - (p.b * P - recycling(P));
}

}  // namespace

std::vector<FlatRoot> fcss_roots(const ModelParams& params) {
  params.validate();
  constexpr int samples = 3000;
  constexpr double p_max = 3.0;
  std::vector<FlatRoot> out;
  double a = p_max / samples;
  double fa = flat_residual(a, params);
  for (int i = 2; i <= samples; ++i) {
    const double c = p_max * i / samples;
    const double fc = flat_residual(c, params);
    if (std::isfinite(fa) && std::isfinite(fc) && (fa < 0.0) != (fc < 0.0)) {
      double lo = a, hi = c, flo = fa;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = flat_residual(mid, params);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      const double P = 0.5 * (lo + hi);
      const double q = flat_costate(P, params);
      // Sign changes across the pole of q are not roots.
      if (q < 0.0 && std::abs(flat_residual(P, params)) < 1e-9) {
        const double k = -1.0 / q;
        out.push_back({P, q, k, current_objective(P, k, params) / params.r});
      }
    }
    a = c;
    fa = fc;
  }
  return out;
}

double fold_locate(const ModelParams& params, double b_lo, double b_hi, double tol) {
  auto count = [&](double b) {
    ModelParams p = params;
    p.b = b;
    return fcss_roots(p).size();
  };
  if (count(b_lo) < 3 || count(b_hi) != 1) {
    throw SolverError("fold_locate: no 3 -> 1 root transition in the bracket");
  }
  while (b_hi - b_lo > tol) {
    const double mid = 0.5 * (b_lo + b_hi);
    if (count(mid) >= 3) {
      b_lo = mid;
    } else {
      b_hi = mid;
    }
  }
  return 0.5 * (b_lo + b_hi);
}

// ---------------------------------------------------------------- records

CssRecord CssRecord::from_state(const CanonicalState& u, const SystemOperators& sys) {
  CssRecord rec;
  rec.u = u;
  rec.b = sys.params.b;
  const Vec P = state_part(u);
  const Vec k = control_of(u);
  rec.avgP = average(P, sys.fem);
  rec.avgK = average(k, sys.fem);
  rec.normP = normalized_l2(P, sys.fem);
  rec.J = averaged_objective(u, sys) / sys.params.r;
  const Vec dev = (P.array() - rec.avgP).matrix();
  rec.kind = normalized_l2(dev, sys.fem) > kPatternThreshold * (1.0 + std::abs(rec.avgP))
                 ? CssKind::patterned
                 : CssKind::flat;
  return rec;
}

void CssRecord::attach_spectrum(const SystemOperators& sys) {
  const SpectrumReport rep = sloc::spectrum(u, sys.with_b(b));
  spectrum = rep.eigenvalues;
  defect = rep.defect;
}

CssRecord newton_css(const CanonicalState& u0, const SystemOperators& sys,
                     const NewtonOptions& opts) {
  check_admissible(u0);
  CanonicalState u = u0;
  Eigen::SparseLU<SpMat> lu;
  double res = 0.0;
  for (int it = 0; it <= opts.max_iter; ++it) {
    const Vec G = residual(u, sys);
    res = G.lpNorm<Eigen::Infinity>();
    if (res < opts.tol * (1.0 + u.lpNorm<Eigen::Infinity>())) {
      return CssRecord::from_state(u, sys);
    }
    if (it == opts.max_iter) break;
    lu.compute(jacobian(u, sys));
    if (lu.info() != Eigen::Success) {
      throw SolverError("newton_css: singular Jacobian", res);
    }
    u -= lu.solve(G);
    check_admissible(u);
  }
  throw SolverError("newton_css: no convergence, last residual " + std::to_string(res), res);
}

const char* to_string(PointFlag f) {
  switch (f) {
    case PointFlag::fold: return "fold";
    case PointFlag::bif: return "bif";
    default: return "regular";
  }
}

PointFlag point_flag_from_string(const std::string& s) {
  if (s == "regular") return PointFlag::regular;
  if (s == "fold") return PointFlag::fold;
  if (s == "bif") return PointFlag::bif;
  throw std::invalid_argument("unknown point flag '" + s + "'");
}

// ---------------------------------------------------------------- continuation

double continuation_dot(const Vec& x, const Vec& y) {
  const Eigen::Index N = x.size() - 1;
  return x.head(N).dot(y.head(N)) / static_cast<double>(N) + x[N] * y[N];
}

namespace {

Vec pack(const CanonicalState& u, double b) {
  Vec x(u.size() + 1);
  x.head(u.size()) = u;
  x[u.size()] = b;
  return x;
}

// [[dG/du, dG/db], [w t_u^T, t_b]]
SpMat bordered(const CanonicalState& u, const SystemOperators& sys, const Vec& t) {
  const Eigen::Index N = u.size();
  const SpMat J = jacobian(u, sys);
  const Vec gb = residual_db(u, sys);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(J.nonZeros() + 2 * N + 1);
  for (Eigen::Index k = 0; k < J.outerSize(); ++k) {
    for (SpMat::InnerIterator it(J, k); it; ++it) trips.emplace_back(it.row(), k, it.value());
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    trips.emplace_back(i, N, gb[i]);
    trips.emplace_back(N, i, t[i] / static_cast<double>(N));
  }
  trips.emplace_back(N, N, t[N]);
  SpMat A(N + 1, N + 1);
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

int det_sign(const SpMat& A) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(A)};
  double s = lu.permutationP().determinant();
  const auto& LU = lu.matrixLU();
  for (Eigen::Index i = 0; i < LU.rows(); ++i) {
    if (LU(i, i) < 0.0) s = -s;
    if (LU(i, i) == 0.0) return 0;
  }
  return s > 0.0 ? 1 : -1;
}

Vec tangent_from(const CanonicalState& u, const SystemOperators& sys, const Vec& border) {
  const Eigen::Index N = u.size();
  Eigen::SparseLU<SpMat> lu(bordered(u, sys, border));
  if (lu.info() != Eigen::Success) {
    throw SolverError("branch_tangent: singular bordered system");
  }
  Vec rhs = Vec::Zero(N + 1);
  rhs[N] = 1.0;
  Vec t = lu.solve(rhs);
  t /= std::sqrt(continuation_dot(t, t));
  return t;
}

struct Corrected {
  CanonicalState u;
  double b;
};

std::optional<Corrected> correct(const Vec& x0, const Vec& t, double ds, const Vec& predictor,
                                 const SystemOperators& sys, double tol, int max_it) {
  const Eigen::Index N = x0.size() - 1;
  Vec y = predictor;
  Eigen::SparseLU<SpMat> lu;
  try {
    for (int it = 0; it <= max_it; ++it) {
      const CanonicalState u = y.head(N);
      const SystemOperators sb = sys.with_b(y[N]);
      const Vec G = residual(u, sb);
      const double arc = continuation_dot(t, y - x0) - ds;
      if (G.lpNorm<Eigen::Infinity>() < tol * (1.0 + u.lpNorm<Eigen::Infinity>()) &&
          std::abs(arc) < 1e-10) {
        return Corrected{u, y[N]};
      }
      if (it == max_it) break;
      lu.compute(bordered(u, sb, t));
      if (lu.info() != Eigen::Success) return std::nullopt;
      Vec rhs(N + 1);
      rhs.head(N) = -G;
      rhs[N] = -arc;
      y += lu.solve(rhs);
      if (!y.allFinite()) return std::nullopt;
    }
  } catch (const DomainError&) {
    return std::nullopt;
  } catch (const std::invalid_argument&) {
    return std::nullopt;  // b left the admissible range
  }
  return std::nullopt;
}

struct StepInfo {
  Corrected point;
  Vec tangent;
  int bordered_sign;
};

std::optional<StepInfo> step(const Vec& x0, const Vec& t0, double ds, const SystemOperators& sys,
                             const ContinuationOptions& opts) {
  auto c = correct(x0, t0, ds, x0 + ds * t0, sys, opts.newton_tol, opts.max_corrector);
  if (!c) return std::nullopt;
  const SystemOperators sb = sys.with_b(c->b);
  Vec t = tangent_from(c->u, sb, t0);
  if (continuation_dot(t, t0) < 0.0) t = -t;
  return StepInfo{*c, t, det_sign(bordered(c->u, sb, t))};
}

BranchPoint make_point(const Corrected& c, const Vec& t, const SystemOperators& sys,
                       const ContinuationOptions& opts, PointFlag flag) {
  const SystemOperators sb = sys.with_b(c.b);
  BranchPoint bp;
  bp.css = CssRecord::from_state(c.u, sb);
  if (opts.spectra) bp.css.attach_spectrum(sb);
  bp.tangent = t;
  bp.flag = flag;
  return bp;
}

// Bisection in arclength on a predicate that differs between s = 0 and s = ds.
// Returns the first point past the change and its arclength.
std::optional<std::pair<double, StepInfo>> localize(
    const Vec& x0, const Vec& t0, double ds, const SystemOperators& sys,
    const ContinuationOptions& opts, const std::function<bool(const StepInfo&)>& past) {
  double lo = 0.0, hi = ds;
  std::optional<std::pair<double, StepInfo>> best;
  for (int it = 0; it < 48 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto s = step(x0, t0, mid, sys, opts);
    if (!s) break;
    if (past(*s)) {
      hi = mid;
      best.emplace(mid, *s);
    } else {
      lo = mid;
    }
  }
  return best;
}

}  // namespace

Vec branch_tangent(const CanonicalState& u, const SystemOperators& sys, const Vec* orient) {
  const Eigen::Index N = u.size();
  Vec border = Vec::Zero(N + 1);
  if (orient) {
    border = *orient;
  } else {
    border[N] = 1.0;
  }
  Vec t;
  try {
    t = tangent_from(u, sys, border);
  } catch (const SolverError&) {
    // Near a fold the b-row is a poor border; fall back to the u-direction.
    border.setZero();
    border.head(N).setOnes();
    t = tangent_from(u, sys, border);
  }
  if (orient && continuation_dot(t, *orient) < 0.0) t = -t;
  return t;
}

Branch continue_branch(const CssRecord& start, const SystemOperators& sys, int direction,
                       const ContinuationOptions& opts, const Vec* initial_tangent) {
  if (direction != 1 && direction != -1) {
    throw std::invalid_argument("continue_branch: direction must be +1 or -1");
  }
  const SystemOperators s0 = sys.with_b(start.b);
  Vec t = initial_tangent ? *initial_tangent : branch_tangent(start.u, s0);
  t /= std::sqrt(continuation_dot(t, t));
  t *= direction;

  Branch br;
  {
    BranchPoint bp;
    bp.css = start;
    if (opts.spectra && !bp.css.defect) bp.css.attach_spectrum(s0);
    bp.tangent = t;
    br.points.push_back(std::move(bp));
  }
  const Eigen::Index N = start.u.size();
  Vec x = pack(start.u, start.b);
  int sign = det_sign(bordered(start.u, s0, t));
  double ds = opts.ds0;

  for (int k = 0; k < opts.max_steps;) {
    auto s = step(x, t, ds, sys, opts);
    if (!s) {
      ds *= 0.5;
      if (ds < opts.ds_min) break;
      continue;
    }
    BranchPoint next = make_point(s->point, s->tangent, sys, opts, PointFlag::regular);
    if (opts.detect) {
      const bool fold = (s->tangent[N] > 0.0) != (t[N] > 0.0);
      const bool bif = s->bordered_sign != sign && s->bordered_sign != 0 && sign != 0;
      std::vector<std::pair<double, BranchPoint>> marks;
      if (bif) {
        std::optional<std::pair<double, StepInfo>> at;
        if (opts.localize) {
          at = localize(x, t, ds, sys, opts,
                        [&](const StepInfo& si) { return si.bordered_sign != sign; });
        }
        if (at) {
          marks.emplace_back(at->first, make_point(at->second.point, at->second.tangent, sys, opts,
                                                   PointFlag::bif));
        } else {
          next.flag = PointFlag::bif;
        }
      }
      if (fold) {
        std::optional<std::pair<double, StepInfo>> at;
        if (opts.localize) {
          const bool up = t[N] > 0.0;
          at = localize(x, t, ds, sys, opts,
                        [&](const StepInfo& si) { return (si.tangent[N] > 0.0) != up; });
        }
        if (at) {
          marks.emplace_back(at->first, make_point(at->second.point, at->second.tangent, sys, opts,
                                                   PointFlag::fold));
        } else if (next.flag == PointFlag::regular) {
          next.flag = PointFlag::fold;
        }
      }
      std::sort(marks.begin(), marks.end(),
                [](const auto& l, const auto& r) { return l.first < r.first; });
      for (auto& m : marks) br.points.push_back(std::move(m.second));
    }
    sign = s->bordered_sign;
    x = pack(s->point.u, s->point.b);
    t = s->tangent;
    br.points.push_back(std::move(next));
    ++k;
    ds = std::min(ds * opts.growth, opts.ds_max);
    if (s->point.b < opts.b_min || s->point.b > opts.b_max) break;
  }
  return br;
}

// ---------------------------------------------------------------- switching

int sign_changes(const Vec& v) {
  int count = 0;
  int last = 0;
  const double scale = v.lpNorm<Eigen::Infinity>();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) <= 1e-8 * scale) continue;
    const int s = v[i] > 0.0 ? 1 : -1;
    if (last != 0 && s != last) ++count;
    last = s;
  }
  return count;
}

std::pair<Vec, double> bifurcation_kernel(const BranchPoint& at, const SystemOperators& sys) {
  const SystemOperators sb = sys.with_b(at.css.b);
  const Eigen::MatrixXd C = evolution_matrix(at.css.u, sb);
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, true);
  if (es.info() != Eigen::Success) {
    throw SolverError("bifurcation_kernel: eigenvalue iteration did not converge");
  }
  const auto& lam = es.eigenvalues();
  std::vector<Eigen::Index> order(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::abs(lam[a]) < std::abs(lam[b]); });
  const Eigen::Index N = at.css.u.size();
  const Vec tu = at.tangent.size() == N + 1 ? Vec(at.tangent.head(N)) : Vec::Zero(N);
  auto alignment = [&](Eigen::Index i) {
    const Vec v = es.eigenvectors().col(i).real();
    const double nt = tu.norm();
    return nt > 0.0 ? std::abs(v.dot(tu)) / (v.norm() * nt) : 0.0;
  };
  Eigen::Index pick = order[0];
  if (order.size() > 1 && std::abs(lam[order[1]]) < 10.0 * std::abs(lam[order[0]]) + 1e-12 &&
      alignment(order[1]) < alignment(order[0])) {
    pick = order[1];
  }
  Vec phi = es.eigenvectors().col(pick).real();
  if (phi.norm() == 0.0) phi = es.eigenvectors().col(pick).imag();
  const int n = sys.nodes();
  phi /= normalized_l2(phi.head(n), sys.fem);
  const int j = sign_changes(phi.head(n));
  const double k = j * std::numbers::pi / sys.mesh.domain_size();
  return {phi, k};
}

BranchPoint branch_switch(const BranchPoint& at, const SystemOperators& sys,
                          const SwitchOptions& opts) {
  const auto [phi, k] = bifurcation_kernel(at, sys);
  (void)k;
  const Eigen::Index N = at.css.u.size();
  const int n = sys.nodes();
  Vec dir = Vec::Zero(N + 1);
  dir.head(N) = phi;
  const Vec x0 = pack(at.css.u, at.css.b);
  const double norm2 = continuation_dot(dir, dir);

  double amp = opts.amplitude;
  for (int h = 0; h <= opts.halvings; ++h, amp *= 0.5) {
    for (int sgn : {1, -1}) {
      const Vec t = sgn * dir / std::sqrt(norm2);
      const double ds = amp * std::sqrt(norm2);
      auto c = correct(x0, t, ds, x0 + ds * t, sys, opts.newton_tol, opts.max_corrector);
      if (!c) continue;
      const Vec P = c->u.head(n);
      const Vec dev = (P.array() - average(P, sys.fem)).matrix();
      if (normalized_l2(dev, sys.fem) < 0.25 * amp) continue;  // fell back onto a flat state
      const SystemOperators sb = sys.with_b(c->b);
      BranchPoint out;
      out.css = CssRecord::from_state(c->u, sb);
      out.tangent = branch_tangent(c->u, sb, &t);
      out.flag = PointFlag::regular;
      return out;
    }
  }
  throw SolverError("branch_switch: corrector failed for all amplitudes; try a smaller amplitude");
}

std::vector<CssRecord> branch_crossings(const Branch& branch, double b, const SystemOperators& sys) {
  const SystemOperators sb = sys.with_b(b);
  std::vector<CssRecord> out;
  const auto& pts = branch.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double b0 = pts[i].css.b - b, b1 = pts[i + 1].css.b - b;
    if (b0 == 0.0 && i > 0) continue;  // counted with the previous interval
    if (!(b0 * b1 <= 0.0)) continue;
    const double w = b1 == b0 ? 0.0 : b0 / (b0 - b1);
    const CanonicalState guess = (1.0 - w) * pts[i].css.u + w * pts[i + 1].css.u;
    std::optional<CssRecord> rec;
    for (const CanonicalState* g : {&guess, &pts[i].css.u, &pts[i + 1].css.u}) {
      try {
        rec = newton_css(*g, sb);
        break;
      } catch (const std::exception&) {
      }
    }
    if (!rec) continue;
    bool dup = false;
    for (const auto& o : out) {
      if ((o.u - rec->u).lpNorm<Eigen::Infinity>() < 1e-6) dup = true;
    }
    if (dup) continue;
    rec->attach_spectrum(sb);
    out.push_back(std::move(*rec));
  }
  return out;
}

// ---------------------------------------------------------------- dispersion

double dispersion_det(double P, double q, const ModelParams& p, double k2) {
  const double a = recycling_d1(P) - p.b - p.D * k2;
  const double d = p.r + p.b - recycling_d1(P) + p.D * k2;
  return a * d - (1.0 / (q * q)) * (2.0 * p.gamma - q * recycling_d2(P));
}

std::array<Complex, 2> dispersion(double P, double q, const ModelParams& p, double k2) {
  const double a = recycling_d1(P) - p.b - p.D * k2;
  const double d = p.r + p.b - recycling_d1(P) + p.D * k2;
  const double tr = a + d;
  const double det = dispersion_det(P, q, p, k2);
  const Complex disc = std::sqrt(Complex(0.25 * tr * tr - det, 0.0));
  return {Complex(0.5 * tr, 0.0) - disc, Complex(0.5 * tr, 0.0) + disc};
}

std::vector<double> critical_wavenumbers(double P, double q, const ModelParams& params,
                                         double k_max) {
  constexpr int samples = 20000;
  std::vector<double> out;
  auto f = [&](double k) { return dispersion_det(P, q, params, k * k); };
  double a = 0.0, fa = f(0.0);
  for (int i = 1; i <= samples; ++i) {
    const double c = k_max * i / samples;
    const double fc = f(c);
    if ((fa < 0.0) != (fc < 0.0)) {
      double lo = a, hi = c, flo = fa;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      out.push_back(0.5 * (lo + hi));
    }
    a = c;
    fa = fc;
  }
  return out;
}

}  // namespace sloc
