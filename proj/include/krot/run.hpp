#pragma once

// Experiment dispatch: runs a validated RunConfig and writes its artifacts.

#include <cstddef>
#include <iosfwd>
#include <string>

#include "krot/config.hpp"

namespace krot {

struct RunOptions {
  std::string output_dir;  // overrides config.output_dir when non-empty
  std::size_t threads = 1;
  bool quiet = false;
};

/// Writes report.json (always, also on failure), cells.csv and the
/// experiment's tables into the output directory, and prints one summary line
/// per cell to `out` unless quiet. Returns 0 on success, else the ErrorCode
/// value of the first failure (whose message goes to `err`).
int run(const RunConfig& config, const RunOptions& options, std::ostream& out, std::ostream& err);

}  // namespace krot
