// Acceptance run: one PASS/FAIL line per criterion. The exit code is 0 unless
// the program itself crashes; failing criteria are reported, not fatal.

#include "sloc/commands.hpp"

#include "flat_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace sloc;

namespace {

const double kL = 2 * std::numbers::pi / 0.44;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a check; the first failures are listed in the detail.
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [miss: " << what << "]";
    }
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool near(double v, double ref, double tol) { return std::abs(v - ref) <= tol; }

SystemOperators make_sys(double b, int n = 101) {
  ModelParams p;
  p.b = b;
  return SystemOperators::make(p, build_mesh(kL, n));
}

CssRecord flat_css(const SystemOperators& sys, int which) {
  const FlatRoot r = fcss_roots(sys.params).at(which);
  CssRecord c = newton_css(flat_state(r.P, r.q, sys.nodes()), sys);
  c.attach_spectrum(sys);
  return c;
}

// Lazily built shared state at b = 0.65.
struct Context {
  SystemOperators sys = make_sys(0.65);
  RunConfig cfg;
  std::optional<CssCatalog> cat;
  std::map<std::string, CssTarget> targets;

  const CssCatalog& catalog() {
    if (!cat) cat = build_catalog(sys);
    return *cat;
  }
  const CssRecord& css(const std::string& id) {
    const CatalogEntry* e = catalog().find(id);
    if (e == nullptr) throw std::runtime_error("state " + id + " not in the catalog");
    return e->css;
  }
  const CssTarget& target(const std::string& id) {
    auto it = targets.find(id);
    if (it == targets.end()) it = targets.emplace(id, make_target(id, css(id), sys)).first;
    return it->second;
  }
  IscontOptions opts() const { return iscont_options(cfg); }
};

// Catalog ids of the reference states p3/pt19 and p1/pt71 (the PS).
const char* kP3 = "p3#1";
const char* kPS = "p1#2";

void c1_flat_table(Context&, Outcome& o) {
  struct Row {
    double b;
    int which;
    const char* name;
    double P, k, J;
  };
  const Row rows[] = {{0.75, 0, "FSM(0.75)", 1.22, 0.32, -63.11},
                      {0.65, 2, "FSM", 1.44, 0.26, -79.28},
                      {0.65, 1, "FSI", 0.87, 0.13, -79.47},
                      {0.65, 0, "FSC", 0.45, 0.12, -72.95}};
  for (const Row& r : rows) {
    const SystemOperators sys = make_sys(r.b);
    const auto roots = fcss_roots(sys.params);
    if (r.b == 0.75) o.check(roots.size() == 1, "one flat root at b=0.75");
    const CssRecord c = newton_css(flat_state(roots.at(r.which).P, roots.at(r.which).q, sys.nodes()), sys);
    o.detail << ' ' << r.name << "(" << num(c.avgP, 3) << "," << num(c.avgK, 3) << "," << num(c.J, 2) << ")";
    o.check(near(c.avgP, r.P, 0.02) && near(c.avgK, r.k, 0.02), std::string(r.name) + " averages");
    o.check(near(c.J, r.J, 0.5), std::string(r.name) + " J");
  }
}

void c2_fold(Context& ctx, Outcome& o) {
  const double bf = fold_locate(ctx.sys.params);
  ModelParams below = ctx.sys.params, above = ctx.sys.params;
  below.b = bf - 1e-3;
  above.b = bf + 1e-3;
  o.detail << " b_fold=" << num(bf, 5);
  o.check(bf >= 0.72 && bf <= 0.735, "fold in [0.72, 0.735]");
  o.check(fcss_roots(below).size() == 3 && fcss_roots(above).size() == 1, "root count 3 -> 1 across the fold");
}

void c3_wavenumber(Context& ctx, Outcome& o) {
  ModelParams p = ctx.sys.params;
  p.b = 0.7;
  const auto roots = fcss_roots(p);
  const auto kc = critical_wavenumbers(roots.at(1).P, roots.at(1).q, p);
  if (kc.empty()) {
    o.check(false, "no critical wavenumber");
    return;
  }
  o.detail << " k_c(b=0.7)=" << num(kc[0]);
  o.check(kc[0] >= 0.39 && kc[0] <= 0.49, "k_c in [0.39, 0.49]");

  // Discrete bifurcations on the intermediate branch; take the one nearest b = 0.7.
  const FlatRoot fsi = fcss_roots(ctx.sys.params).at(1);
  ContinuationOptions co;
  co.spectra = false;
  const Branch br = continue_branch(newton_css(flat_state(fsi.P, fsi.q, ctx.sys.nodes()), ctx.sys), ctx.sys, +1, co);
  double best_b = 1e9, best_k = 0;
  for (const auto& pt : br.points) {
    if (pt.flag != PointFlag::bif) continue;
    const double k = bifurcation_kernel(pt, ctx.sys).second;
    if (std::abs(pt.css.b - 0.7) < std::abs(best_b - 0.7)) {
      best_b = pt.css.b;
      best_k = k;
    }
  }
  o.detail << " nearest bif b=" << num(best_b) << " k=" << num(best_k) << " spacing=" << num(std::numbers::pi / kL);
  o.check(best_b < 1e8 && std::abs(best_k - kc[0]) <= std::numbers::pi / kL, "discrete bifurcation within pi/L");
}

void c4_defects(Context& ctx, Outcome& o) {
  const auto& cat = ctx.catalog();
  for (const auto& [id, d] : std::vector<std::pair<std::string, int>>{{"FSM", 0}, {"FSC", 0}, {"FSI", -5}}) {
    const int got = ctx.css(id).defect.value();
    o.detail << ' ' << id << '=' << got;
    o.check(got == d, id + " defect");
  }
  struct Ref {
    const char* label;
    const char* branch;
    double P;
    int d;
  };
  const Ref refs[] = {{"p1/pt16", "p1", 0.61, -1}, {"p1/pt71", "p1", 1.24, 0}, {"p2/pt16", "p2", 0.76, -2},
                      {"p3/pt19", "p3", 1.02, -3}};
  for (const Ref& r : refs) {
    const CatalogEntry* hit = nullptr;
    for (const auto& e : cat.states) {
      if (e.id.rfind(std::string(r.branch) + "#", 0) == 0 && near(e.css.avgP, r.P, 0.05)) hit = &e;
    }
    if (hit == nullptr) {
      o.check(false, std::string(r.label) + " not found");
      continue;
    }
    o.detail << ' ' << r.label << "->" << hit->id << '=' << hit->css.defect.value();
    o.check(hit->css.defect.value() == r.d, std::string(r.label) + " defect");
  }
}

void c5_symmetry(Context& ctx, Outcome& o) {
  double worst = 0;
  int count = 0;
  auto visit = [&](const CssRecord& c) {
    const double res = reflection_residual(c.spectrum, ctx.sys.params.r);
    worst = std::max(worst, res);
    ++count;
    o.check(res < 1e-6, "pairing residual");
    o.check(c.defect.value() <= 0, "defect <= 0");
  };
  for (const auto& e : ctx.catalog().states) visit(e.css);
  const SystemOperators s75 = make_sys(0.75);
  visit(flat_css(s75, 0));
  o.detail << ' ' << count << " states, worst residual " << worst;
}

void c6_ordering(Context& ctx, Outcome& o) {
  const CssRecord& p3 = ctx.css(kP3);
  const Vec P0 = state_part(p3.u);
  struct Leg {
    const char* id;
    const char* label;
    double ref;
  };
  const Leg legs[] = {{"FSC", "FSC", -78.24}, {kPS, "PS", -78.19}, {"FSM", "FSM", -77.5}};
  std::vector<double> values{p3.J};
  o.detail << " J(CSS)=" << num(p3.J);
  for (const Leg& leg : legs) {
    const PathFamily fam = iscont(P0, ctx.target(leg.id), ctx.sys, ctx.opts());
    if (!fam.reached) {
      o.check(false, std::string("path to ") + leg.label + ": " + fam.message);
      return;
    }
    const double J = fam.last().J;
    values.push_back(J);
    o.detail << " ->" << leg.label << '=' << num(J);
    o.check(near(J, leg.ref, 0.3), std::string("J to ") + leg.label);
  }
  bool increasing = true;
  for (std::size_t i = 1; i < values.size(); ++i) increasing = increasing && values[i - 1] < values[i];
  o.check(increasing, "strict ordering");
}

void c7_skiba(Context& ctx, Outcome& o) {
  const CssRecord& ps = ctx.css(kPS);
  const CssRecord& fsc = ctx.css("FSC");
  const HomotopyLine line{state_part(ps.u), state_part(fsc.u)};
  const IscontOptions opts = ctx.opts();

  // iscont from FSC toward P_PS runs alpha = 1 - coordinate on this line.
  const PathFamily fc = family_on_line(line, ctx.target("FSC"), ctx.sys, opts);
  std::vector<double> alpha;
  for (const auto& [c, J] : family_curve(fc, line, ctx.sys.fem)) alpha.push_back(1.0 - c);
  std::size_t i = 1;
  while (i + 1 < alpha.size() && alpha[i + 1] >= alpha[i]) ++i;
  if (i + 1 >= alpha.size()) {
    o.check(false, "no fold toward PS");
  } else {
    const double fold = alpha[i];
    double back = fold;
    for (std::size_t j = i + 1; j < alpha.size() && alpha[j] <= alpha[j - 1]; ++j) back = alpha[j];
    o.detail << " overlap=[" << num(back) << ',' << num(fold) << ']';
    o.check(std::max(back, 0.6) < std::min(fold, 0.71), "overlap meets [0.6, 0.71]");
  }

  const PathFamily fm = family_on_line(line, ctx.target("FSM"), ctx.sys, opts);
  const SkibaResult sk = skiba_find(fc, ctx.target("FSC"), fm, ctx.target("FSM"), line, ctx.sys, opts);
  o.detail << " Skiba alpha=" << num(1.0 - sk.alpha) << " J=" << num(sk.J);
  o.check(near(sk.J, -76.3, 0.5), "Skiba value");
}

void c8_naive(Context& ctx, Outcome& o) {
  const double k = ctx.css("FSC").avgK;
  const IvpResult r = forward_ivp(state_part(ctx.css(kP3).u), [k](double, double) { return k; }, ctx.sys, 100.0, 0.05);
  o.detail << " J=" << num(r.objective) << " (k=" << num(k) << ")";
  o.check(near(r.objective, -80.1, 0.3), "J within 0.3 of -80.1");
  o.check(r.objective < -78.24, "below the optimal path value");
}

void c9_dominance(Context& ctx, Outcome& o) {
  std::vector<CssTarget> targets;
  for (const auto& e : ctx.catalog().states) {
    if (e.css.defect.value() == 0) targets.push_back(ctx.target(e.id));
  }
  const auto entries = classify_optimal(targets, ctx.sys, ctx.opts());
  for (const auto& e : entries) {
    o.detail << ' ' << e.id << (e.dominated ? "<" + e.best_target : "");
    if (e.id == kPS) o.check(e.dominated && e.best_target == "FSM", "PS dominated by FSM");
    if (e.id == "FSC" || e.id == "FSM") o.check(!e.dominated, e.id + " undominated");
  }

  const SystemOperators s75 = make_sys(0.75);
  const CssTarget fsm = make_target("FSM", flat_css(s75, 0), s75);
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> dist(0.1, 2.0);
  int reached = 0;
  for (int trial = 0; trial < 5; ++trial) {
    Vec P0(s75.nodes());
    for (int i = 0; i < P0.size(); ++i) P0[i] = dist(rng);
    reached += iscont(P0, fsm, s75, ctx.opts()).reached ? 1 : 0;
  }
  o.detail << " b=0.75 reached " << reached << "/5";
  o.check(reached == 5, "random starts reach FSM");
}

void c10_properties(Context&, Outcome& o) {
  // Jacobian against central differences at a patterned state.
  {
    const SystemOperators sys = make_sys(0.65, 41);
    Vec u(82);
    for (int i = 0; i < 41; ++i) {
      u[i] = 0.9 + 0.3 * std::cos(0.44 * sys.mesh.nodes[i]);
      u[41 + i] = -6.0 - std::sin(0.3 * sys.mesh.nodes[i]);
    }
    const Eigen::MatrixXd A(jacobian(u, sys));
    double worst = 0;
    for (int j = 0; j < 82; ++j) {
      const double h = 1e-6 * (1 + std::abs(u[j]));
      Vec up = u, um = u;
      up[j] += h;
      um[j] -= h;
      const Vec col = (residual(up, sys) - residual(um, sys)) / (2 * h);
      worst = std::max(worst, (col - A.col(j)).norm() / (1 + A.col(j).norm()));
    }
    o.detail << " jac=" << worst;
    o.check(worst < 1e-6, "Jacobian vs differences");
  }
  const SystemOperators sys = make_sys(0.65, 21);
  // Salvage identity.
  {
    double worst = 0;
    for (int which : {0, 1, 2}) {
      const CssRecord c = flat_css(sys, which);
      const double ref = averaged_objective(c.u, sys) / sys.params.r;
      worst = std::max(worst, std::abs(objective_value(constant_path(c.u, 100.0, 17), sys) - ref) / std::abs(ref));
    }
    o.detail << " salvage=" << worst;
    o.check(worst < 1e-10, "salvage identity");
  }
  // Operators.
  {
    const double k1 = (sys.fem.stiffness * Vec::Ones(21)).lpNorm<Eigen::Infinity>();
    const double m1 = Vec::Ones(21).dot(sys.fem.mass * Vec::Ones(21));
    o.detail << " K1=" << k1 << " 1M1-2L=" << m1 - 2 * kL;
    o.check(k1 < 1e-12 && std::abs(m1 - 2 * kL) < 1e-12 * kL, "K 1 = 0 and 1'M1 = 2L");
  }
  const CssTarget tg = make_target("FSM", flat_css(sys, 2), sys);
  auto solve = [&](const Vec& P0, int m, BvpOptions opts) {
    opts.refine = false;
    const BvpProblem pb{&sys, &tg.psi, P0, 1.0};
    return bvp_solve(pb, constant_path(tg.css.u, 100.0, m), opts);
  };
  // Flat path against the scalar oracle.
  {
    const double P0 = tg.css.u[0] - 0.25;
    BvpOptions opts;
    opts.tol = 1e-13;
    const PathSolution s = solve(Vec::Constant(21, P0), 40, opts);
    const sloc_test::Flat0D m{sys.params};
    const auto ref = sloc_test::solve_0d(m, Eigen::Vector2d(tg.css.u[0], tg.css.u[21]), P0, s.times);
    double diff = 0;
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      diff = std::max(diff, std::abs(s.states[j][0] - ref[j][0]) + std::abs(s.states[j][21] - ref[j][1]));
    }
    o.detail << " flat0D=" << diff;
    o.check(diff < 1e-8, "flat path vs scalar oracle");
  }
  Vec bump(21);
  for (int i = 0; i < 21; ++i) bump[i] = tg.css.u[0] - 0.1 + 0.2 * std::cos(std::numbers::pi * (sys.mesh.nodes[i] + kL) / (2 * kL));
  // Time mesh halving.
  {
    const double j1 = solve(bump, 40, {}).J, j2 = solve(bump, 80, {}).J, j3 = solve(bump, 160, {}).J;
    const double ratio = (j1 - j2) / (j2 - j3);
    o.detail << " halving ratio=" << num(ratio, 2);
    o.check(ratio > 3.0 && ratio < 5.5, "second order in the time step");
  }
  // Lumping.
  {
    BvpOptions exact;
    exact.tol = 1e-11;
    const PathSolution ref = solve(bump, 40, exact);
    double worst = 0;
    for (double delta : {0.0, 1e-6}) {
      BvpOptions lumped = exact;
      lumped.lumped = true;
      lumped.delta = delta;
      lumped.max_iter = 200;
      const PathSolution s = solve(bump, 40, lumped);
      for (std::size_t j = 0; j < s.states.size(); ++j) {
        worst = std::max(worst, (s.states[j] - ref.states[j]).lpNorm<Eigen::Infinity>());
      }
    }
    o.detail << " lumping=" << worst;
    o.check(worst < 1e-8, "lumped Jacobian answers");
  }
}

}  // namespace

int main() {
  Context ctx;
  const std::pair<const char*, void (*)(Context&, Outcome&)> criteria[] = {
      {"flat steady state table", c1_flat_table},
      {"fold location", c2_fold},
      {"critical wavenumber", c3_wavenumber},
      {"defects at b=0.65", c4_defects},
      {"spectrum symmetry", c5_symmetry},
      {"path value ordering", c6_ordering},
      {"fold overlap and Skiba value", c7_skiba},
      {"naive control", c8_naive},
      {"dominance and reachability", c9_dominance},
      {"property suite", c10_properties},
  };
  int index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run(ctx, o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [error: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << index << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << " |"
              << o.detail.str() << " | " << num(secs, 1) << " s" << std::endl;
  }
  return 0;
}
