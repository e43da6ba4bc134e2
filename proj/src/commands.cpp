#include "sloc/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cctype>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace sloc {

namespace fs = std::filesystem;

namespace {

bool is_solver_failure(const std::exception& e) {
  return dynamic_cast<const SolverError*>(&e) || dynamic_cast<const DomainError*>(&e);
}

std::string flat_name(std::size_t index, std::size_t count, double P) {
  if (count == 3) return index == 0 ? "FSC" : index == 1 ? "FSI" : "FSM";
  // A lone flat root sits on the upper (muddy) or lower (clean) sheet.
  if (count == 1) return P > 0.8 ? "FSM" : "FSC";
  return "FS" + std::to_string(index + 1);
}

/// Keeps the points up to and including the first fold.
Branch until_fold(Branch br) {
  for (std::size_t i = 1; i < br.points.size(); ++i) {
    if (br.points[i].flag == PointFlag::fold) {
      br.points.resize(i + 1);
      break;
    }
  }
  return br;
}

/// Joins a downward and an upward run that share their first point.
Branch join(const std::string& name, const Branch& down, const Branch& up) {
  Branch br;
  br.name = name;
  for (auto it = down.points.rbegin(); it != down.points.rend(); ++it) br.points.push_back(*it);
  for (std::size_t i = 1; i < up.points.size(); ++i) br.points.push_back(up.points[i]);
  return br;
}

CssRecord oriented(CssRecord c) {
  const Eigen::Index n = c.u.size() / 2;
  const double tol = 1e-9 * (1.0 + std::abs(c.u[0]));
  if (c.kind == CssKind::patterned && c.u[0] > c.u[n - 1] + tol) c.u = reflect(c.u);
  return c;
}

std::string file_stem(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s;
}

std::string defect_text(const CssRecord& c) {
  return c.defect ? std::to_string(*c.defect) : std::string("?");
}

bool needs_patterned(const std::string& sel) {
  return !sel.empty() && sel[0] == 'p' && sel.find('/') == std::string::npos;
}

std::vector<std::string> split_pair(const std::string& s, const std::string& what) {
  const auto comma = s.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == s.size()) {
    throw ConfigError(what + ": expected A,B");
  }
  return {s.substr(0, comma), s.substr(comma + 1)};
}

fs::path output_dir(const CommandIO& io) {
  const fs::path dir = resolve_output_dir(io.cfg, io.out_dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

const CatalogEntry* CssCatalog::find(const std::string& id) const {
  for (const auto& e : states) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

const Branch* CssCatalog::branch(const std::string& name) const {
  for (const auto& br : branches) {
    if (br.name == name) return &br;
  }
  return nullptr;
}

CssCatalog build_catalog(const SystemOperators& sys, const CatalogOptions& opts) {
  const double b = sys.params.b;
  const int n = sys.nodes();
  CssCatalog cat;
  cat.b = b;

  ContinuationOptions co;
  co.b_min = std::min(opts.b_min, b - 1e-3);
  co.b_max = std::max(opts.b_max, b + 1e-3);
  co.spectra = opts.branch_spectra;

  const auto roots = fcss_roots(sys.params);
  std::vector<Branch> bif_sources;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    const std::string name = flat_name(i, roots.size(), roots[i].P);
    CssRecord start = newton_css(flat_state(roots[i].P, roots[i].q, n), sys);
    if (opts.branch_spectra) start.attach_spectrum(sys);
    const Branch up = continue_branch(start, sys, +1, co);
    const Branch down = continue_branch(start, sys, -1, co);
    cat.branches.push_back(join(name, until_fold(down), until_fold(up)));
    if (name == "FSI") bif_sources = {up, down};

    CssRecord at_b = start;
    if (at_b.spectrum.empty()) at_b.attach_spectrum(sys);
    cat.states.push_back({name, at_b});
  }

  if (!opts.patterned) return cat;

  ContinuationOptions pco = co;
  pco.max_steps = opts.patterned_steps;
  for (const Branch& src : bif_sources) {
    for (const BranchPoint& bp : src.points) {
      if (bp.flag != PointFlag::bif) continue;
      const auto [phi, k] = bifurcation_kernel(bp, sys);
      const long j = std::lround(k * 2.0 * sys.mesh.half_length / std::numbers::pi);
      const std::string base = "p" + std::to_string(j);
      std::string name = base;
      for (int dup = 2; cat.branch(name) != nullptr; ++dup) name = base + "_" + std::to_string(dup);
      const SystemOperators sb = sys.with_b(bp.css.b);
      const BranchPoint sw = branch_switch(bp, sb);
      Branch br = continue_branch(sw.css, sb, +1, pco, &sw.tangent);
      br.name = name;
      br.points.insert(br.points.begin(), bp);
      const auto crossings = branch_crossings(br, b, sys);
      for (std::size_t c = 0; c < crossings.size(); ++c) {
        CssRecord rec = oriented(crossings[c]);
        if (rec.spectrum.empty()) rec.attach_spectrum(sys);
        cat.states.push_back({name + "#" + std::to_string(c + 1), rec});
      }
      cat.branches.push_back(std::move(br));
    }
  }
  return cat;
}

CatalogEntry resolve_state(const std::string& selector, const CssCatalog& catalog,
                           const SystemOperators& sys) {
  if (selector.empty()) throw ConfigError("empty state selector");
  if (selector.back() == '~') {
    CatalogEntry e = resolve_state(selector.substr(0, selector.size() - 1), catalog, sys);
    e.id = selector;
    e.css.u = reflect(e.css.u);
    return e;
  }
  if (const CatalogEntry* e = catalog.find(selector)) return *e;

  if (const auto pos = selector.find(":pt"); pos != std::string::npos) {
    const std::string name = selector.substr(0, pos);
    const Branch* br = catalog.branch(name);
    if (br == nullptr) throw ConfigError("unknown branch '" + name + "'");
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(selector.substr(pos + 3), &used);
      if (used != selector.size() - pos - 3) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad point index in '" + selector + "'");
    }
    if (k >= br->points.size()) {
      throw ConfigError("branch " + name + " has " + std::to_string(br->points.size()) + " points");
    }
    CssRecord css = br->points[k].css;
    if (css.spectrum.empty()) css.attach_spectrum(sys.with_b(css.b));
    return {selector, css};
  }

  if (fs::exists(selector)) {
    const CanonicalState u = read_state(selector);
    if (u.size() != sys.dim()) throw ConfigError(selector + ": state size does not match n");
    return {fs::path(selector).stem().string(), CssRecord::from_state(u, sys)};
  }

  std::string known;
  for (const auto& e : catalog.states) known += " " + e.id;
  throw ConfigError("unknown state '" + selector + "' (known at b=" + fmt_short(catalog.b) + ":" +
                    known + ")");
}

IscontOptions iscont_options(const RunConfig& cfg) {
  IscontOptions o;
  o.T = cfg.T;
  o.m0 = cfg.m0;
  o.bvp.tol = cfg.bvp_tol;
  o.bvp.mesh_tol = cfg.mesh_tol;
  o.bvp.lumped = cfg.lumped;
  o.bvp.delta = cfg.delta;
  return o;
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("range '" + text + "': expected lo:hi");
  RunConfig scratch;
  scratch.set("b", text.substr(0, colon));
  const double lo = scratch.model.b;
  scratch.set("b", text.substr(colon + 1));
  const double hi = scratch.model.b;
  if (!(lo < hi)) throw ConfigError("range '" + text + "': lower end must be below upper end");
  if (!(lo > 0.0)) throw ConfigError("range '" + text + "': b must be positive");
  return {lo, hi};
}

int cmd_css(const CommandIO& io, const CssArgs& args) {
  std::ostream& out = *io.out;
  CatalogOptions co;
  co.branch_spectra = args.spectra;
  RunConfig cfg = io.cfg;
  if (args.range) {
    co.b_min = args.range->first;
    co.b_max = args.range->second;
    if (cfg.model.b < co.b_min || cfg.model.b > co.b_max) {
      cfg.model.b = 0.5 * (co.b_min + co.b_max);
    }
  }
  const SystemOperators sys = cfg.system();
  const CssCatalog cat = build_catalog(sys, co);
  const fs::path dir = output_dir(io);
  for (const auto& br : cat.branches) {
    if (args.range) {
      Branch clipped = br;
      std::erase_if(clipped.points, [&](const BranchPoint& p) {
        return p.css.b < co.b_min - 1e-12 || p.css.b > co.b_max + 1e-12;
      });
      write_branch(dir, clipped, cfg);
    } else {
      write_branch(dir, br, cfg);
    }
  }

  out << "steady states at b = " << fmt_short(cat.b) << '\n';
  out << std::left << std::setw(8) << "name" << std::setw(20) << "<P>" << std::setw(20) << "<k>"
      << std::setw(20) << "J" << "d\n";
  for (const auto& e : cat.states) {
    out << std::setw(8) << e.id << std::setw(20) << fmt_short(e.css.avgP) << std::setw(20)
        << fmt_short(e.css.avgK) << std::setw(20) << fmt_short(e.css.J) << defect_text(e.css) << '\n';
  }
  out << "branches written to " << dir.string() << ':';
  for (const auto& br : cat.branches) out << ' ' << br.name;
  out << '\n';
  return kExitOk;
}

int cmd_path(const CommandIO& io, const PathArgs& args) {
  std::ostream& out = *io.out;
  const SystemOperators sys = io.cfg.system();
  CatalogOptions co;
  co.patterned = needs_patterned(args.from) || needs_patterned(args.to);
  const CssCatalog cat = build_catalog(sys, co);
  const CatalogEntry from = resolve_state(args.from, cat, sys);
  const CatalogEntry to = resolve_state(args.to, cat, sys);

  const SystemOperators st = sys.with_b(to.css.b);
  const CssTarget target = make_target(to.id, to.css, st);
  const PathFamily fam = iscont(state_part(from.css.u), target, st, iscont_options(io.cfg));
  if (fam.members.empty()) {
    *io.err << "error: no path found: " << fam.message << '\n';
    return kExitSolver;
  }
  const PathSolution& p = fam.last();
  const std::string name = args.name.empty() ? file_stem(from.id + "_to_" + to.id) : args.name;
  const fs::path dir = output_dir(io);
  write_path(dir, name, p, io.cfg);

  out << "path " << from.id << " -> " << to.id << " at b = " << fmt_short(st.params.b) << '\n';
  out << "J = " << fmt_short(p.J) << '\n';
  out << "alpha = " << fmt_short(p.alpha) << '\n';
  out << "terminal_gap = " << fmt_short(p.terminal_gap) << '\n';
  out << "T = " << fmt_short(p.horizon()) << "  intervals = " << p.intervals() << '\n';
  out << "folds =";
  if (fam.folds.empty()) out << " none";
  for (double a : fam.folds) out << ' ' << fmt_short(a);
  out << '\n';
  out << "written " << (dir / (name + ".csv")).string() << '\n';
  if (!fam.reached) {
    *io.err << "error: alpha = 1 not reached: " << fam.message << '\n';
    return kExitSolver;
  }
  return kExitOk;
}

int cmd_skiba(const CommandIO& io, const SkibaArgs& args) {
  std::ostream& out = *io.out;
  const SystemOperators sys = io.cfg.system();
  CatalogOptions co;
  co.patterned = needs_patterned(args.a) || needs_patterned(args.b) || needs_patterned(args.line_from) ||
                 needs_patterned(args.line_to);
  const CssCatalog cat = build_catalog(sys, co);
  const CatalogEntry ea = resolve_state(args.a, cat, sys);
  const CatalogEntry eb = resolve_state(args.b, cat, sys);
  const CatalogEntry l0 = resolve_state(args.line_from, cat, sys);
  const CatalogEntry l1 = resolve_state(args.line_to, cat, sys);

  const IscontOptions opts = iscont_options(io.cfg);
  const CssTarget ta = make_target(ea.id, ea.css, sys);
  const CssTarget tb = make_target(eb.id, eb.css, sys);
  const HomotopyLine line{state_part(l0.css.u), state_part(l1.css.u)};
  const PathFamily fa = family_on_line(line, ta, sys, opts);
  const PathFamily fb = family_on_line(line, tb, sys, opts);
  const SkibaResult sk = skiba_find(fa, ta, fb, tb, line, sys, opts);

  const fs::path dir = output_dir(io);
  const std::string stem = file_stem("skiba_" + ea.id + "_" + eb.id);
  write_path(dir, stem + "_A", sk.pathA, io.cfg);
  write_path(dir, stem + "_B", sk.pathB, io.cfg);

  out << "Skiba point between " << ea.id << " and " << eb.id << " on the line " << l0.id << " -> "
      << l1.id << '\n';
  out << "alpha = " << fmt_short(sk.alpha) << '\n';
  out << "J = " << fmt_short(sk.J) << '\n';
  out << "J_" << ea.id << " = " << fmt_short(sk.pathA.J) << "  J_" << eb.id << " = " << fmt_short(sk.pathB.J)
      << '\n';
  out << "<k(0)> " << ea.id << " = " << fmt_short(average(control_of(sk.pathA.states.front()), sys.fem))
      << "  " << eb.id << " = " << fmt_short(average(control_of(sk.pathB.states.front()), sys.fem)) << '\n';
  out << "folds " << ea.id << ":";
  for (double a : fa.folds) out << ' ' << fmt_short(a);
  out << "  " << eb.id << ":";
  for (double a : fb.folds) out << ' ' << fmt_short(a);
  out << '\n';
  return kExitOk;
}

int cmd_simulate(const CommandIO& io, const SimulateArgs& args) {
  std::ostream& out = *io.out;
  if (!(args.horizon > 0.0) || !(args.dt > 0.0) || args.dt > args.horizon) {
    throw ConfigError("simulate: need 0 < dt <= horizon");
  }
  const std::string prefix = "const:";
  if (args.control.rfind(prefix, 0) != 0) throw ConfigError("control must be const:ID or const:VALUE");
  const std::string spec = args.control.substr(prefix.size());

  const SystemOperators sys = io.cfg.system();
  CatalogOptions co;
  co.patterned = needs_patterned(args.P0) || needs_patterned(spec);
  const CssCatalog cat = build_catalog(sys, co);
  const CatalogEntry start = resolve_state(args.P0, cat, sys);

  double k = 0.0;
  try {
    std::size_t used = 0;
    k = std::stod(spec, &used);
    if (used != spec.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    k = resolve_state(spec, cat, sys).css.avgK;
  }
  if (!(k > 0.0)) throw ConfigError("control load must be positive");

  const IvpResult traj = forward_ivp(state_part(start.css.u), [k](double, double) { return k; }, sys,
                                     args.horizon, args.dt);
  const fs::path dir = output_dir(io);
  const fs::path file = dir / (args.name + ".csv");
  write_trajectory(file, traj, io.cfg);

  out << "simulation from " << start.id << " with k = " << fmt_short(k) << '\n';
  out << "J = " << fmt_short(traj.objective) << '\n';
  out << "<P(T)> = " << fmt_short(average(traj.states.back(), sys.fem)) << '\n';
  out << "written " << file.string() << '\n';
  return kExitOk;
}

int cmd_report(const CommandIO& io, const ReportArgs& args) {
  std::ostream& out = *io.out;
  if (args.random < 0) throw ConfigError("--random must be non-negative");
  const SystemOperators sys = io.cfg.system();
  const CssCatalog cat = build_catalog(sys);
  const IscontOptions opts = iscont_options(io.cfg);

  nlohmann::json doc;
  doc["b"] = cat.b;
  std::vector<CssTarget> targets;
  for (const auto& e : cat.states) {
    try {
      targets.push_back(make_target(e.id, e.css, sys));
    } catch (const std::exception& ex) {
      if (!is_solver_failure(ex)) throw;
      doc["excluded"].push_back({{"id", e.id}, {"reason", ex.what()}});
      out << "excluded " << e.id << ": " << ex.what() << '\n';
    }
  }
  if (targets.empty()) {
    *io.err << "error: no steady state with the saddle-point property at b = " << fmt_short(cat.b) << '\n';
    return kExitSolver;
  }

  const auto table = classify_optimal(targets, sys, opts);
  out << std::left << std::setw(8) << "name" << std::setw(20) << "J_css" << std::setw(20) << "best J"
      << std::setw(10) << "via" << "status\n";
  for (const auto& e : table) {
    out << std::setw(8) << e.id << std::setw(20) << fmt_short(e.J_css) << std::setw(20) << fmt_short(e.best_J)
        << std::setw(10) << e.best_target << (e.dominated ? "dominated" : "undominated") << '\n';
    nlohmann::json row{{"id", e.id},
                       {"J_css", e.J_css},
                       {"best_J", e.best_J},
                       {"best_target", e.best_target},
                       {"dominated", e.dominated}};
    for (const auto& pv : e.paths) {
      nlohmann::json pj{{"to", pv.to}};
      if (pv.J) pj["J"] = *pv.J;
      if (!pv.error.empty()) pj["error"] = pv.error;
      row["paths"].push_back(pj);
      out << "    -> " << std::setw(8) << pv.to << (pv.J ? fmt_short(*pv.J) : "failed: " + pv.error) << '\n';
    }
    doc["states"].push_back(row);
  }

  if (args.random > 0) {
    std::mt19937 rng(args.seed);
    std::uniform_real_distribution<double> dist(0.1, 2.0);
    for (const auto& e : table) {
      if (e.dominated) continue;
      const CssTarget& t = *std::find_if(targets.begin(), targets.end(),
                                         [&](const CssTarget& x) { return x.id == e.id; });
      int reached = 0;
      for (int i = 0; i < args.random; ++i) {
        Vec P0(sys.nodes());
        for (auto& v : P0) v = dist(rng);
        bool ok = false;
        try {
          ok = iscont(P0, t, sys, opts).reached;
        } catch (const std::exception& ex) {
          if (!is_solver_failure(ex)) throw;
        }
        reached += ok ? 1 : 0;
      }
      out << e.id << " reached from " << reached << " of " << args.random << " random initial distributions\n";
      doc["random"].push_back({{"target", e.id}, {"reached", reached}, {"trials", args.random}});
    }
  }

  const fs::path dir = output_dir(io);
  std::ofstream js(dir / "report.json");
  if (!js) throw std::runtime_error("cannot write " + (dir / "report.json").string());
  js << std::setw(2) << doc << '\n';
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Steady states and optimal paths of the distributed shallow lake problem", "sloc"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::string out_dir;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "key = value configuration file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", sets, "override key=value, repeatable");

  const std::vector<std::string> keys = {"r",          "gamma",   "b",          "D",        "L",
                                         "n",          "T",       "m0",         "newton_tol", "bvp_tol",
                                         "center_tol", "mesh_tol", "delta"};
  std::map<std::string, std::string> flag_values;
  for (const auto& k : keys) {
    std::string flag = k;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app.add_option("--" + flag, flag_values[k], "override " + k);
  }
  bool lumped = false;
  app.add_flag("--lumped", lumped, "lumped Jacobian in the path solver");

  CssArgs css_args;
  std::string range_text;
  auto* css = app.add_subcommand("css", "steady states and branches");
  css->add_option("--b-range", range_text, "continuation range lo:hi");
  css->add_flag("--spectra", css_args.spectra, "spectra at every branch point");

  PathArgs path_args;
  auto* path = app.add_subcommand("path", "optimal path candidate between states");
  path->add_option("--from", path_args.from, "initial state selector")->required();
  path->add_option("--to", path_args.to, "target steady state selector")->required();
  path->add_option("--name", path_args.name, "output file stem");

  SkibaArgs skiba_args;
  std::string between, line;
  auto* skiba = app.add_subcommand("skiba", "indifference point between two targets");
  skiba->add_option("--between", between, "targets A,B")->required();
  skiba->add_option("--line", line, "line of initial states C,D")->required();

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "forward simulation under a fixed control");
  sim->add_option("--P0", sim_args.P0, "initial state selector")->required();
  sim->add_option("--control", sim_args.control, "const:ID or const:VALUE")->required();
  sim->add_option("--horizon", sim_args.horizon, "simulation horizon");
  sim->add_option("--dt", sim_args.dt, "time step");
  sim->add_option("--name", sim_args.name, "output file stem");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "optimality comparison of the steady states");
  report->add_option("--random", report_args.random, "random initial distributions per candidate");
  report->add_option("--seed", report_args.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CommandIO io;
    io.cfg = config_file.empty() ? RunConfig{} : load_config(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      io.cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& k : keys) {
      std::string flag = k;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (app.count("--" + flag) > 0) io.cfg.set(k, flag_values[k]);
    }
    if (lumped) io.cfg.lumped = true;
    io.cfg.validate();
    io.out_dir = out_dir;
    io.out = &out;
    io.err = &err;

    if (css->parsed()) {
      if (!range_text.empty()) css_args.range = parse_range(range_text);
      return cmd_css(io, css_args);
    }
    if (path->parsed()) return cmd_path(io, path_args);
    if (skiba->parsed()) {
      const auto ab = split_pair(between, "--between");
      const auto cd = split_pair(line, "--line");
      skiba_args = {ab[0], ab[1], cd[0], cd[1]};
      return cmd_skiba(io, skiba_args);
    }
    if (sim->parsed()) return cmd_simulate(io, sim_args);
    if (report->parsed()) return cmd_report(io, report_args);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitUsage;
}

}  // namespace sloc
