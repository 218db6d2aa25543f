#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "esgvi/factor.hpp"

namespace esgvi {

// Ad-hoc problem description parsed from JSON (schema documented in the CLI
// README section).  The init fields are optional; precision_diag lists
// per-scalar diagonal values for the initial precision.
struct GraphDescription {
  FactorGraph graph;
  std::optional<Vec> init_mean;
  std::optional<Vec> init_precision_diag;
};

GraphDescription load_graph_json(std::istream& in);
GraphDescription load_graph_json_file(const std::string& path);

}  // namespace esgvi
