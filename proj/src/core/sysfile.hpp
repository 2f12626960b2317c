#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core/system.hpp"

namespace almreg {

/// Parsed contents of a system definition (.toy) file or catalog entry.
struct SystemSpec {
  std::string name;
  int dim = 0;
  std::vector<std::pair<std::string, double>> params;
  std::string lagrangian;
  std::vector<std::string> primary_candidates;  // expressions in q, p
  Eigen::VectorXd seed_q, seed_v;               // empty when absent
  double t0 = 0.0, t1 = 1.0, dt = 1e-3;
  bool project = true;
  std::vector<std::string> u_exprs;  // free multiplier expressions in q, v
  std::string blurb;                 // catalog one-liner; unused for files
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileParseError : public std::runtime_error {
 public:
  FileParseError(const std::string& what, int line_no)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  int line;
};

/// Parse the flat key-value text format with [sections]. See README for
/// the exact grammar. Throws FileParseError with a line number.
SystemSpec parse_system_text(const std::string& text);

/// Load from a file path, or from the built-in catalog via "@name".
SystemSpec load_system_source(const std::string& path_or_at);

/// Build the Lagrangian system from a parsed spec (parses the expression,
/// checks the seed dimensions).
LagrangianSystem build_from_spec(const SystemSpec& spec);

}  // namespace almreg
