#pragma once

// Command layer behind the `sloc` executable: a catalog of the steady states
// at one b, state selectors, and the css/path/skiba/simulate/report commands.

#include "sloc/io.hpp"
#include "sloc/path.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sloc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSolver = 1;
inline constexpr int kExitUsage = 2;

struct CatalogEntry {
  std::string id;
  CssRecord css;
};

struct CatalogOptions {
  double b_min = 0.5;
  double b_max = 0.8;
  int patterned_steps = 100;  ///< continuation steps on each patterned branch
  bool patterned = true;
  bool branch_spectra = false;  ///< spectra at every branch point, not just at b
};

/// Steady states at sys.params.b. Flat states are named FSC/FSI/FSM; points
/// where a patterned branch pJ crosses b are pJ#1, pJ#2, ... in branch order.
/// Patterned states are stored with P(-L) <= P(L).
struct CssCatalog {
  double b = 0.0;
  std::vector<Branch> branches;
  std::vector<CatalogEntry> states;

  const CatalogEntry* find(const std::string& id) const;
  const Branch* branch(const std::string& name) const;
};

CssCatalog build_catalog(const SystemOperators& sys, const CatalogOptions& opts = {});

/// Resolves `ID`, `ID~` (mirror image), `BRANCH:ptK` (point K of a branch) or
/// the path of a state file. Throws ConfigError for unknown selectors.
CatalogEntry resolve_state(const std::string& selector, const CssCatalog& catalog,
                           const SystemOperators& sys);

IscontOptions iscont_options(const RunConfig& cfg);

struct CommandIO {
  RunConfig cfg;
  std::string out_dir;  ///< explicit --out value, may be empty
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

struct CssArgs {
  std::optional<std::pair<double, double>> range;
  bool spectra = false;
};

struct PathArgs {
  std::string from;
  std::string to;
  std::string name;
};

struct SkibaArgs {
  std::string a, b;            ///< the two targets
  std::string line_from, line_to;
};

struct SimulateArgs {
  std::string P0;
  std::string control;  ///< const:ID or const:VALUE
  double horizon = 100.0;
  double dt = 0.05;
  std::string name = "simulation";
};

struct ReportArgs {
  int random = 0;  ///< randomized initial distributions tested against each optimal candidate
  unsigned seed = 1;
};

int cmd_css(const CommandIO& io, const CssArgs& args);
int cmd_path(const CommandIO& io, const PathArgs& args);
int cmd_skiba(const CommandIO& io, const SkibaArgs& args);
int cmd_simulate(const CommandIO& io, const SimulateArgs& args);
int cmd_report(const CommandIO& io, const ReportArgs& args);

/// Parses the command line and runs one command. Returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Parses "lo:hi". Throws ConfigError.
std::pair<double, double> parse_range(const std::string& text);

}  // namespace sloc
