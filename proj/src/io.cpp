#include "sloc/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sloc {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ConfigError(what + ": not a number: '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(what + ": not an integer: '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError(what + ": not a boolean: '" + text + "'");
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  return os;
}

std::ifstream open_in(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  return is;
}

double cell_double(const std::string& s, const fs::path& file) {
  try {
    return parse_double(s, file.string());
  } catch (const ConfigError& e) {
    throw std::runtime_error(e.what());
  }
}

std::vector<double> parse_row(const std::string& line, const fs::path& file) {
  std::vector<double> row;
  for (const auto& c : split(line, ',')) row.push_back(cell_double(c, file));
  return row;
}

void check_version(const Header& h, const fs::path& file) {
  const auto it = h.find("format_version");
  if (it == h.end() || it->second != std::to_string(kFormatVersion)) {
    throw std::runtime_error(file.string() + ": unsupported or missing format_version");
  }
}

fs::path sidecar(const fs::path& csv, const std::string& suffix) {
  fs::path p = csv;
  p.replace_extension(suffix);
  return p;
}

std::string state_columns(int n, const char* second) {
  std::string s;
  for (int i = 1; i <= n; ++i) s += ",P" + std::to_string(i);
  for (int i = 1; i <= n; ++i) s += std::string(",") + second + std::to_string(i);
  return s;
}

}  // namespace

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  if (k == "r") model.r = parse_double(value, k);
  else if (k == "gamma") model.gamma = parse_double(value, k);
  else if (k == "b") model.b = parse_double(value, k);
  else if (k == "D") model.D = parse_double(value, k);
  else if (k == "L") L = parse_double(value, k);
  else if (k == "n") n = parse_int(value, k);
  else if (k == "T") T = parse_double(value, k);
  else if (k == "m0") m0 = parse_int(value, k);
  else if (k == "newton_tol") newton_tol = parse_double(value, k);
  else if (k == "bvp_tol") bvp_tol = parse_double(value, k);
  else if (k == "center_tol") center_tol = parse_double(value, k);
  else if (k == "mesh_tol") mesh_tol = parse_double(value, k);
  else if (k == "delta") delta = parse_double(value, k);
  else if (k == "lumped") lumped = parse_bool(value, k);
  else if (k == "output_dir") output_dir = trim(value);
  else throw ConfigError("unknown config key '" + k + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  return {{"r", fmt_full(model.r)},
          {"gamma", fmt_full(model.gamma)},
          {"b", fmt_full(model.b)},
          {"D", fmt_full(model.D)},
          {"L", fmt_full(L)},
          {"n", std::to_string(n)},
          {"T", fmt_full(T)},
          {"m0", std::to_string(m0)},
          {"newton_tol", fmt_full(newton_tol)},
          {"bvp_tol", fmt_full(bvp_tol)},
          {"center_tol", fmt_full(center_tol)},
          {"mesh_tol", fmt_full(mesh_tol)},
          {"delta", fmt_full(delta)},
          {"lumped", lumped ? "true" : "false"},
          {"output_dir", output_dir}};
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(L > 0.0)) throw ConfigError("L must be positive");
  if (n < 3) throw ConfigError("n must be at least 3");
  if (!(T > 0.0)) throw ConfigError("T must be positive");
  if (m0 < 1) throw ConfigError("m0 must be at least 1");
  if (!(newton_tol > 0.0) || !(bvp_tol > 0.0) || !(center_tol > 0.0) || !(mesh_tol > 0.0)) {
    throw ConfigError("tolerances must be positive");
  }
  if (!(delta >= 0.0)) throw ConfigError("delta must be non-negative");
}

Mesh1D RunConfig::mesh() const { return build_mesh(L, n); }

SystemOperators RunConfig::system() const { return SystemOperators::make(model, mesh()); }

void apply_config(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load_config(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot read config " + file.string());
  RunConfig cfg;
  apply_config(cfg, is, file.string());
  return cfg;
}

fs::path resolve_output_dir(const RunConfig& cfg, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

void write_header(std::ostream& os, const std::string& kind, const RunConfig& cfg,
                  const std::vector<std::pair<std::string, std::string>>& extra) {
  os << "# format_version=" << kFormatVersion << '\n';
  os << "# kind=" << kind << '\n';
  for (const auto& [k, v] : cfg.entries()) os << "# " << k << '=' << v << '\n';
  for (const auto& [k, v] : extra) os << "# " << k << '=' << v << '\n';
}

Header read_header(std::istream& is) {
  Header h;
  while (is.peek() == '#') {
    std::string line;
    std::getline(is, line);
    line = trim(line.substr(1));
    const auto eq = line.find('=');
    if (eq != std::string::npos) h[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return h;
}

void write_branch(const fs::path& dir, const Branch& branch, const RunConfig& cfg) {
  const fs::path csv = dir / (branch.name + ".csv");
  const int dim = branch.points.empty() ? 0 : static_cast<int>(branch.points.front().css.u.size());
  const std::vector<std::pair<std::string, std::string>> extra = {
      {"name", branch.name}, {"points", std::to_string(branch.points.size())}};

  auto os = open_out(csv);
  write_header(os, "branch", cfg, extra);
  os << "index,b,avgP,avgK,normP_L2,J,defect,flag\n";
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    const auto& p = branch.points[i];
    const auto& c = p.css;
    os << i << ',' << fmt_full(c.b) << ',' << fmt_full(c.avgP) << ',' << fmt_full(c.avgK) << ','
       << fmt_full(c.normP) << ',' << fmt_full(c.J) << ','
       << (c.defect ? std::to_string(*c.defect) : std::string()) << ',' << to_string(p.flag) << '\n';
  }

  auto ss = open_out(sidecar(csv, ".states.csv"));
  write_header(ss, "branch_states", cfg, extra);
  ss << "index,kind" << state_columns(dim / 2, "q");
  for (int i = 0; i <= dim; ++i) ss << ",t" << i;
  ss << '\n';
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    const auto& p = branch.points[i];
    ss << i << ',' << (p.css.kind == CssKind::flat ? "flat" : "patterned");
    for (double v : p.css.u) ss << ',' << fmt_full(v);
    for (Eigen::Index j = 0; j <= dim; ++j) {
      ss << ',' << (j < p.tangent.size() ? fmt_full(p.tangent[j]) : std::string("0"));
    }
    ss << '\n';
  }

  const bool any_spectrum = std::any_of(branch.points.begin(), branch.points.end(),
                                        [](const BranchPoint& p) { return !p.css.spectrum.empty(); });
  if (any_spectrum) {
    auto es = open_out(sidecar(csv, ".spectra.csv"));
    write_header(es, "branch_spectra", cfg, extra);
    es << "index,re,im\n";
    for (std::size_t i = 0; i < branch.points.size(); ++i) {
      for (const auto& z : branch.points[i].css.spectrum) {
        es << i << ',' << fmt_full(z.real()) << ',' << fmt_full(z.imag()) << '\n';
      }
    }
  }
}

Branch read_branch(const fs::path& csv) {
  auto is = open_in(csv);
  const Header h = read_header(is);
  check_version(h, csv);
  Branch br;
  br.name = h.count("name") ? h.at("name") : csv.stem().string();

  std::string line;
  std::getline(is, line);  // column names
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 8) throw std::runtime_error(csv.string() + ": malformed branch row");
    BranchPoint p;
    p.css.b = cell_double(cells[1], csv);
    p.css.avgP = cell_double(cells[2], csv);
    p.css.avgK = cell_double(cells[3], csv);
    p.css.normP = cell_double(cells[4], csv);
    p.css.J = cell_double(cells[5], csv);
    if (!trim(cells[6]).empty()) p.css.defect = static_cast<int>(cell_double(cells[6], csv));
    p.flag = point_flag_from_string(trim(cells[7]));
    br.points.push_back(std::move(p));
  }

  auto ss = open_in(sidecar(csv, ".states.csv"));
  read_header(ss);
  std::getline(ss, line);
  std::size_t i = 0;
  while (std::getline(ss, line)) {
    if (trim(line).empty()) continue;
    if (i >= br.points.size()) throw std::runtime_error(csv.string() + ": state sidecar too long");
    const auto cells = split(line, ',');
    const int dim = static_cast<int>(cells.size() - 3) / 2;
    if (cells.size() < 3 || static_cast<int>(cells.size()) != 2 * dim + 3) {
      throw std::runtime_error(csv.string() + ": malformed state row");
    }
    auto& c = br.points[i].css;
    c.kind = trim(cells[1]) == "flat" ? CssKind::flat : CssKind::patterned;
    c.u.resize(dim);
    for (int j = 0; j < dim; ++j) c.u[j] = cell_double(cells[2 + j], csv);
    br.points[i].tangent.resize(dim + 1);
    for (int j = 0; j <= dim; ++j) br.points[i].tangent[j] = cell_double(cells[2 + dim + j], csv);
    ++i;
  }
  if (i != br.points.size()) throw std::runtime_error(csv.string() + ": state sidecar too short");

  const fs::path spec = sidecar(csv, ".spectra.csv");
  if (fs::exists(spec)) {
    auto es = open_in(spec);
    read_header(es);
    std::getline(es, line);
    while (std::getline(es, line)) {
      if (trim(line).empty()) continue;
      const auto row = parse_row(line, spec);
      if (row.size() != 3) throw std::runtime_error(spec.string() + ": malformed spectrum row");
      const auto k = static_cast<std::size_t>(row[0]);
      if (k >= br.points.size()) throw std::runtime_error(spec.string() + ": index out of range");
      br.points[k].css.spectrum.emplace_back(row[1], row[2]);
    }
  }
  return br;
}

void write_path(const fs::path& dir, const std::string& name, const PathSolution& path,
                const RunConfig& cfg) {
  const fs::path csv = dir / (name + ".csv");
  const int n = path.states.empty() ? 0 : static_cast<int>(path.states.front().size() / 2);
  auto os = open_out(csv);
  write_header(os, "path", cfg, {{"target", path.target_id}});
  os << "t" << state_columns(n, "q") << '\n';
  for (std::size_t j = 0; j < path.times.size(); ++j) {
    os << fmt_full(path.times[j]);
    for (double v : path.states[j]) os << ',' << fmt_full(v);
    os << '\n';
  }

  auto ms = open_out(sidecar(csv, ".meta"));
  write_header(ms, "path_meta", cfg);
  ms << "alpha=" << fmt_full(path.alpha) << '\n'
     << "J=" << fmt_full(path.J) << '\n'
     << "terminal_gap=" << fmt_full(path.terminal_gap) << '\n'
     << "residual_norm=" << fmt_full(path.residual_norm) << '\n'
     << "newton_iterations=" << path.newton_iterations << '\n'
     << "target=" << path.target_id << '\n';
}

PathSolution read_path(const fs::path& csv) {
  auto is = open_in(csv);
  check_version(read_header(is), csv);
  PathSolution path;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto row = parse_row(line, csv);
    if (row.size() < 3 || row.size() % 2 == 0) throw std::runtime_error(csv.string() + ": malformed path row");
    path.times.push_back(row[0]);
    path.states.emplace_back(Eigen::Map<const Vec>(row.data() + 1, static_cast<Eigen::Index>(row.size() - 1)));
  }

  const fs::path meta = sidecar(csv, ".meta");
  auto ms = open_in(meta);
  check_version(read_header(ms), meta);
  while (std::getline(ms, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (k == "alpha") path.alpha = cell_double(v, meta);
    else if (k == "J") path.J = cell_double(v, meta);
    else if (k == "terminal_gap") path.terminal_gap = cell_double(v, meta);
    else if (k == "residual_norm") path.residual_norm = cell_double(v, meta);
    else if (k == "newton_iterations") path.newton_iterations = static_cast<int>(cell_double(v, meta));
    else if (k == "target") path.target_id = v;
  }
  return path;
}

void write_state(const fs::path& file, const CanonicalState& u, const RunConfig& cfg) {
  auto os = open_out(file);
  write_header(os, "state", cfg);
  os << "t" << state_columns(static_cast<int>(u.size() / 2), "q") << '\n';
  os << "0";
  for (double v : u) os << ',' << fmt_full(v);
  os << '\n';
}

CanonicalState read_state(const fs::path& file) {
  auto is = open_in(file);
  const Header h = read_header(is);
  check_version(h, file);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto row = parse_row(line, file);
    if (row.size() < 3 || row.size() % 2 == 0) throw std::runtime_error(file.string() + ": malformed state row");
    return Eigen::Map<const Vec>(row.data() + 1, static_cast<Eigen::Index>(row.size() - 1));
  }
  throw std::runtime_error(file.string() + ": no state row");
}

void write_trajectory(const fs::path& file, const IvpResult& traj, const RunConfig& cfg) {
  const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
  auto os = open_out(file);
  write_header(os, "trajectory", cfg, {{"J", fmt_full(traj.objective)}});
  os << "t" << state_columns(n, "k") << '\n';
  for (std::size_t j = 0; j < traj.times.size(); ++j) {
    os << fmt_full(traj.times[j]);
    for (double v : traj.states[j]) os << ',' << fmt_full(v);
    for (double v : traj.controls[j]) os << ',' << fmt_full(v);
    os << '\n';
  }
}

}  // namespace sloc
