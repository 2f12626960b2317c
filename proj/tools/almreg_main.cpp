// Command-line front end; everything goes through the C API in almreg.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "almreg.h"

namespace {

bool write_file(const std::string& path, const char* data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << data;
  return out.good();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "almreg - constraint analysis, flows, and the Hamiltonian passage for "
      "dynamical systems with almost regular (singular) Lagrangians"};
  app.require_subcommand(1);

  std::string source, json_path, csv_path;
  unsigned seed = 42;
  int points = 25;
  double tol = 1.0;

  auto add_common = [&](CLI::App* sub, bool needs_source) {
    if (needs_source)
      sub->add_option("source", source, ".toy file path or @catalog_name")->required();
    sub->add_option("--seed", seed, "RNG seed for point sampling (default 42)");
    sub->add_option("--points", points, "working point count (default 25)");
    sub->add_option("--tol", tol, "scale factor on the rank threshold (default 1)");
    sub->add_option("--json", json_path, "write the JSON report to this path");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "kernel structure and first-order constraints");
  add_common(analyze, true);
  CLI::App* constraints =
      app.add_subcommand("constraints", "run the iterative constraint algorithm");
  add_common(constraints, true);
  CLI::App* integrate = app.add_subcommand("integrate", "integrate the SOELVF flow");
  add_common(integrate, true);
  integrate->add_option("--csv", csv_path, "write the trajectory CSV to this path");
  CLI::App* project =
      app.add_subcommand("project", "Legendre map, canonical Hamiltonian, primary constraints");
  add_common(project, true);
  CLI::App* verify = app.add_subcommand("verify", "full invariant suite");
  add_common(verify, true);
  CLI::App* examples = app.add_subcommand("examples", "list the built-in catalog");
  add_common(examples, false);

  CLI11_PARSE(app, argc, argv);

  const char* verb = nullptr;
  if (analyze->parsed()) verb = "analyze";
  if (constraints->parsed()) verb = "constraints";
  if (integrate->parsed()) verb = "integrate";
  if (project->parsed()) verb = "project";
  if (verify->parsed()) verb = "verify";
  if (examples->parsed()) verb = "examples";

  char* json = nullptr;
  char* human = nullptr;
  int exit_code = 2;

  almreg_status st;
  almreg_trajectory* traj = nullptr;
  if (std::string(verb) == "integrate" && !csv_path.empty()) {
    st = almreg_run_integrate_command(source.c_str(), seed, points, tol, &json, &human,
                                      &exit_code, &traj);
  } else {
    st = almreg_run_command(verb, source.c_str(), seed, points, tol, &json, &human, &exit_code);
  }
  if (st != ALMREG_OK) {
    std::cerr << "error: " << almreg_last_error() << "\n";
    return 2;
  }

  if (human) std::cout << human;
  if (!json_path.empty() && json) {
    if (!write_file(json_path, json)) {
      std::cerr << "error: cannot write " << json_path << "\n";
      exit_code = 2;
    }
  }
  if (traj) {
    char* csv = nullptr;
    if (almreg_trajectory_to_csv(traj, &csv) == ALMREG_OK) {
      if (!write_file(csv_path, csv)) {
        std::cerr << "error: cannot write " << csv_path << "\n";
        exit_code = 2;
      }
      almreg_string_free(csv);
    }
    almreg_trajectory_free(traj);
  }
  almreg_string_free(json);
  almreg_string_free(human);
  return exit_code;
}
