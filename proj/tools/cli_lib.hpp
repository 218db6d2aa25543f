#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "esgvi/cubature.hpp"
#include "esgvi/solver.hpp"

namespace esgvi::cli {

// Fully resolved run description.  parse_config fills per-command defaults for
// anything the user left unset.
struct RunConfig {
  std::string command;  // exp1 | exp2 | rts-check | solve
  std::uint64_t seed = 42;
  int trials = 0;
  std::vector<std::string> modes;
  std::string rule;
  std::string output_dir = "out";
  std::string graph;  // input path for the solve command
  std::map<std::string, std::string> overrides;
};

// Thrown by parse_config when --help is requested; carries the help text.
struct HelpRequested {
  explicit HelpRequested(std::string t) : text(std::move(t)) {}
  std::string text;
};

// "gh:M" (1 <= M <= 20), "spherical", or "ut:kappa".
CubatureRule parse_rule(const std::string& spec);

// Mode vocabulary: map-newton, map-gn, esgvi-deriv, esgvi-deriv-free,
// esgvi-gn.  MAP modes ignore the configured rule.
SolverMode parse_mode(const std::string& name, const CubatureRule& rule);

// Parses command-line arguments (argv without the program name), merging an
// optional --config JSON file with flag overrides (flags win).  Throws
// ConfigError on any invalid or unknown key.
RunConfig parse_config(const std::vector<std::string>& args);

// Executes the configured command, writing outputs under output_dir.
// Returns the process exit code: 0 success, 1 when the solver-failure
// fraction exceeds 1% (or a run-level failure occurred).  Partial outputs are
// removed when the run throws.
int run_command(const RunConfig& cfg);

// parse + run + error-to-exit-code mapping (ConfigError -> 2).
int cli_main(const std::vector<std::string>& args);

}  // namespace esgvi::cli
