#pragma once

#include <string>
#include <vector>

#include "ddopt/experiments.hpp"

namespace ddopt {

/// Run configuration merged from built-in defaults, an optional config file,
/// and command-line flags (in that precedence order).
struct RunConfig {
  std::string subcommand;

  // [mesh]
  int nodes = 200;
  double domain_a = 0.0;
  double domain_b = 1.0;

  // [problem]
  double lambda2 = 0.0;
  double delta = 1e-3;  // scaled intrinsic density is delta^2
  bool delta_explicit = false;
  std::string doping = "builtin:canonical";
  double sigma = 1e-4;

  // [optimize]
  double omega0 = 50.0;
  double gamma = 1e-4;
  double tol = 1e-8;
  double tol_opt = 5e-2;
  double tol_abs = 5e-5;
  int max_iter = 500;
  int max_armijo_halvings = 50;
  bool paper_signs = false;
  // -1: per-subcommand default (descent runs freeze N,P; checks recompute),
  //  0: recompute from the current C, 1: freeze at the reference profile.
  int totals_mode = -1;

  // [sweep]
  std::vector<double> lambda2_list = {1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 0.0};

  // [gradcheck]
  unsigned seed = 0;
  double fd_eps = 1e-6;
  int directions = 6;

  // [output]
  std::string out_dir = "out";
};

/// Apply a flat key-value config file with [section] headers. Unknown
/// sections or keys raise ConfigError naming the offending entry.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Range-check every numeric parameter against the module invariants.
void validate(const RunConfig& cfg);

Mesh1D mesh_from(const RunConfig& cfg);
OptimizerConfig optimizer_from(const RunConfig& cfg);

/// Resolve the totals mode: explicit flag wins, otherwise descent runs
/// (optimize, sweep) freeze N,P and everything else recomputes them.
bool freeze_totals_for(const RunConfig& cfg, const std::string& subcommand);

/// Doping profile from a descriptor: "constant:<v>", "builtin:canonical",
/// or "csv:<path>" (columns x,value; linear interpolation onto the mesh).
NodalField build_doping(const Mesh1D& mesh, const std::string& descriptor);

/// Targets for the configured doping: the canonical pair for the builtin
/// profile, 0.8 C^+ / 1.2 |C^-| otherwise.
TrackingTargets targets_for(const Mesh1D& mesh, const NodalField& C_ref);

ExperimentSpec experiment_from(const RunConfig& cfg);

std::vector<double> parse_lambda_list(const std::string& csv_values);

}  // namespace ddopt
