#pragma once

// Run configuration and the on-disk formats: a `#` key=value header block
// followed by a CSV body. Numbers in files use 17 significant digits so that
// everything written reads back bit-exactly.

#include "sloc/bvp.hpp"
#include "sloc/css.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sloc {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kOutputDirEnv = "SLOC_OUTPUT_DIR";

/// Bad configuration or command line; maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  ModelParams model;
  double L = 2.0 * 3.14159265358979323846 / 0.44;
  int n = 101;
  double T = 100.0;
  int m0 = 20;
  double newton_tol = 1e-10;
  double bvp_tol = 1e-8;
  double center_tol = 1e-8;
  double mesh_tol = 2e-3;
  double delta = 0.0;
  bool lumped = false;
  std::string output_dir = "sloc_out";

  /// Sets one key from its textual value. Throws ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Ordered key=value pairs, for header echoes.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;

  Mesh1D mesh() const;
  SystemOperators system() const;
};

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
void apply_config(RunConfig& cfg, std::istream& in, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& file);

/// Output directory: explicit value, else the environment override, else the config.
std::filesystem::path resolve_output_dir(const RunConfig& cfg, const std::string& explicit_dir = "");

/// 17 significant digits, for files.
std::string fmt_full(double v);
/// 12 significant digits, for terminal output.
std::string fmt_short(double v);

using Header = std::map<std::string, std::string>;

void write_header(std::ostream& os, const std::string& kind, const RunConfig& cfg,
                  const std::vector<std::pair<std::string, std::string>>& extra = {});
/// Parses leading `#` lines into a map and leaves the stream at the first body line.
Header read_header(std::istream& is);

/// Writes `<dir>/<name>.csv` and the state sidecar `<dir>/<name>.states.csv`.
void write_branch(const std::filesystem::path& dir, const Branch& branch, const RunConfig& cfg);
Branch read_branch(const std::filesystem::path& csv);

/// Writes `<dir>/<name>.csv` and the metadata sidecar `<dir>/<name>.meta`.
void write_path(const std::filesystem::path& dir, const std::string& name, const PathSolution& path,
                const RunConfig& cfg);
PathSolution read_path(const std::filesystem::path& csv);

/// Single canonical state as a one-row path-style file (P columns, q columns).
void write_state(const std::filesystem::path& file, const CanonicalState& u, const RunConfig& cfg);
CanonicalState read_state(const std::filesystem::path& file);

/// Trajectory of a forward simulation: t, P columns, k columns.
void write_trajectory(const std::filesystem::path& file, const IvpResult& traj, const RunConfig& cfg);

}  // namespace sloc
