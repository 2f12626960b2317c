#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "core/hamilton.hpp"
#include "core/sysfile.hpp"

namespace almreg {

using ojson = nlohmann::ordered_json;

struct CmdOptions {
  unsigned seed = 42;
  int points = 25;
  double tol_scale = 1.0;  // multiplies the default rank threshold
};

struct CmdResult {
  int exit_code = 0;  // 0 all-pass, 1 any FAIL, 2 input error
  ojson report;
  std::string human;
  std::shared_ptr<Trajectory> trajectory;  // integrate only
};

/// Run one of: analyze, constraints, integrate, project, verify, examples.
/// source is a file path or "@catalog_name" (ignored for examples).
/// Input errors surface as exit_code 2 with an "error" field in the report.
CmdResult run_command(const std::string& verb, const std::string& source,
                      const CmdOptions& opts);

std::string trajectory_csv(const Trajectory& traj, int dim);

TolConfig tol_from(const CmdOptions& opts);

/// Deterministic point cloud near the seed of a spec (rejects degenerate
/// configurations where the tableau fails to evaluate).
std::vector<Bindings> sample_points(const LagrangianSystem& sys, const SystemSpec& spec, int n,
                                    std::mt19937_64& rng);

}  // namespace almreg
