#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddopt/optimize.hpp"

namespace ddopt {

/// Built-in non-symmetric, sign-changing reference profile together with the
/// tracking targets n_d = 0.8 C_ref^+ and p_d = 1.2 |C_ref^-|.
struct CanonicalProfile {
  NodalField C_ref;
  NodalField n_d;
  NodalField p_d;
};

CanonicalProfile canonical_profile(const Mesh1D& mesh);

struct ExperimentSpec {
  Mesh1D mesh;
  NodalField C_ref;
  NodalField n_d;
  NodalField p_d;
  std::vector<double> lambda2_list;  // sorted descending; last entry may be 0
  OptimizerConfig cfg;
  double delta2 = 1e-6;
  std::string output_dir;
};

/// Table-row of the lambda sweep: per-phase solve timings at the reference
/// profile and distances of the optimum to the lambda = 0 optimum.
struct SweepRow {
  double lambda2 = 0.0;
  double t_state = 0.0;
  double t_adjoint = 0.0;
  double dist_C = 0.0;
  double dist_V = 0.0;
  double J_final = 0.0;
  int iters = 0;
  bool ok = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<OptRun> runs;  // aligned with rows
};

/// Run the full sweep: timings measured sequentially (median of 3, warm-up
/// excluded), optimizations in a parallel worker pool, distances taken
/// against the lambda = 0 optimum. Individual failures are recorded per row
/// and the sweep continues.
SweepResult run_sweep(const ExperimentSpec& spec);

/// sweep.csv with the successful rows; written via a .partial file.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

/// One CSV per figure panel: optimal profiles (x, value, lambda2) and cost
/// histories (iteration, value, lambda2).
void emit_figures(const AssembledForms& forms, const SweepResult& result,
                  const std::string& dir);

}  // namespace ddopt
