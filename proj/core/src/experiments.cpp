#include "ddopt/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>

#include "ddopt/csv.hpp"
#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

// Shape constants of the built-in reference profile; all acceptance-style
// checks share them. A positive plateau on the left, a negative plateau on
// the right, one smooth sign change in between. The profile deliberately has
// no regions where C vanishes identically: on such regions the carrier floor
// n + p = 2 gamma^2 collapses to the delta^2 scale and the discrete problem
// turns needlessly stiff for every solver in the chain.
constexpr double kAmpPos = 1.0;
constexpr double kAmpNeg = 0.7;  // non-symmetric on purpose
constexpr double kCrossStart = 0.35;
constexpr double kCrossWidth = 0.30;

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double canonical_value(double x) {
  return kAmpPos - (kAmpPos + kAmpNeg) * smoothstep((x - kCrossStart) / kCrossWidth);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

}  // namespace

CanonicalProfile canonical_profile(const Mesh1D& mesh) {
  CanonicalProfile out;
  out.C_ref = NodalField::sample(mesh, canonical_value);
  out.n_d = NodalField(mesh, 0.8 * out.C_ref.v.cwiseMax(0.0));
  out.p_d = NodalField(mesh, 1.2 * (-out.C_ref.v).cwiseMax(0.0));
  return out;
}

namespace {

void validate_spec(const ExperimentSpec& spec) {
  if (spec.lambda2_list.empty()) throw ConfigError("run_sweep: empty lambda2 list");
  for (size_t i = 0; i + 1 < spec.lambda2_list.size(); ++i)
    if (spec.lambda2_list[i] <= spec.lambda2_list[i + 1])
      throw ConfigError("run_sweep: lambda2 list must be sorted descending");
  if (spec.lambda2_list.back() != 0.0)
    throw ConfigError("run_sweep: lambda2 list must contain 0 as its last entry");
}

DesignProblem problem_for(const ExperimentSpec& spec, const AssembledForms& forms,
                          double lambda2) {
  DesignProblem prob;
  prob.forms = &forms;
  prob.C_ref = spec.C_ref;
  prob.targets = TrackingTargets{spec.n_d, spec.p_d};
  prob.sigma = spec.cfg.sigma;
  prob.lambda2 = lambda2;
  prob.delta2 = spec.delta2;
  prob.tol_inner = spec.cfg.tol_inner;
  prob.freeze_totals = spec.cfg.freeze_totals;
  return prob;
}

// Median-of-3 solve times at the reference profile, one warm-up excluded.
void measure_times(const ExperimentSpec& spec, const AssembledForms& forms, double lambda2,
                   SweepRow& row) {
  const DesignProblem prob = problem_for(spec, forms, lambda2);
  const DopingProfile dp = prob.profile_for(NodalField(forms.mesh));
  StateSolution sol = prob.solve_state(dp);

  double ts[3], ta[3];
  for (int r = 0; r < 3; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    sol = prob.solve_state(dp);
    ts[r] = seconds_since(t0);
  }
  const TrackingTargets targets{spec.n_d, spec.p_d};
  AdjointSolution adj = lambda2 > 0.0
                            ? solve_adjoint_lambda(forms, sol, targets, prob.tol_inner)
                            : solve_adjoint_zero(forms, sol, targets);
  for (int r = 0; r < 3; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    adj = lambda2 > 0.0 ? solve_adjoint_lambda(forms, sol, targets, prob.tol_inner)
                        : solve_adjoint_zero(forms, sol, targets);
    ta[r] = seconds_since(t0);
  }
  row.t_state = median3(ts[0], ts[1], ts[2]);
  row.t_adjoint = median3(ta[0], ta[1], ta[2]);
}

}  // namespace

SweepResult run_sweep(const ExperimentSpec& spec) {
  validate_spec(spec);
  const AssembledForms forms = assemble(spec.mesh);
  const size_t n_rows = spec.lambda2_list.size();

  SweepResult result;
  result.rows.resize(n_rows);
  result.runs.resize(n_rows);

  for (size_t i = 0; i < n_rows; ++i) {
    result.rows[i].lambda2 = spec.lambda2_list[i];
    try {
      measure_times(spec, forms, spec.lambda2_list[i], result.rows[i]);
    } catch (const std::exception& err) {
      result.rows[i].error = err.what();
    }
  }

  // Independent optimization problems; one worker per row.
  std::vector<std::future<void>> workers;
  workers.reserve(n_rows);
  for (size_t i = 0; i < n_rows; ++i) {
    workers.push_back(std::async(std::launch::async, [&, i] {
      const double lambda2 = spec.lambda2_list[i];
      try {
        const DesignProblem prob = problem_for(spec, forms, lambda2);
        OptimizerConfig cfg = spec.cfg;
        cfg.lambda2 = lambda2;
        const DopingProfile dp0 = prob.profile_for(NodalField(forms.mesh));
        result.runs[i] = optimize(prob, dp0, cfg);
        result.rows[i].ok = result.runs[i].converged;
        if (!result.runs[i].converged) result.rows[i].error = result.runs[i].failure;
        result.rows[i].J_final = result.runs[i].final_cost.total;
        result.rows[i].iters = static_cast<int>(result.runs[i].iterates.size()) - 1;
      } catch (const std::exception& err) {
        result.rows[i].ok = false;
        result.rows[i].error = err.what();
      }
    }));
  }
  for (auto& w : workers) w.get();

  const SweepRow& zero_row = result.rows.back();
  if (zero_row.ok) {
    const OptRun& zero_run = result.runs.back();
    for (size_t i = 0; i < n_rows; ++i) {
      if (!result.rows[i].ok) continue;
      NodalField dC(forms.mesh, result.runs[i].C_opt.v - zero_run.C_opt.v);
      NodalField dV(forms.mesh, result.runs[i].V_opt.v - zero_run.V_opt.v);
      result.rows[i].dist_C = l2_norm(forms, dC);
      result.rows[i].dist_V = l2_norm(forms, dV);
    }
  }
  return result;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  CsvTable table;
  table.header = {"lambda2", "t_state_s", "t_adjoint_s", "dist_C_L2", "dist_V_L2",
                  "J_final", "iters"};
  for (const auto& row : rows) {
    if (!row.ok) continue;
    table.rows.push_back({row.lambda2, row.t_state, row.t_adjoint, row.dist_C, row.dist_V,
                          row.J_final, static_cast<double>(row.iters)});
  }
  const std::string partial = path + ".partial";
  write_csv(table, partial);
  std::filesystem::rename(partial, path);
}

void emit_figures(const AssembledForms& forms, const SweepResult& result,
                  const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const auto profile_table = [&](auto&& accessor) {
    CsvTable t;
    t.header = {"x", "value", "lambda2"};
    for (size_t i = 0; i < result.runs.size(); ++i) {
      if (!result.rows[i].ok) continue;
      const Eigen::VectorXd& field = accessor(result.runs[i]);
      for (int j = 0; j < forms.n(); ++j)
        t.rows.push_back({forms.mesh.x(j), field[j], result.rows[i].lambda2});
    }
    return t;
  };
  write_csv(profile_table([](const OptRun& r) -> const Eigen::VectorXd& { return r.C_opt.v; }),
            (fs::path(dir) / "fig_profiles_C.csv").string());
  write_csv(profile_table([](const OptRun& r) -> const Eigen::VectorXd& { return r.V_opt.v; }),
            (fs::path(dir) / "fig_profiles_V.csv").string());
  write_csv(profile_table([](const OptRun& r) -> const Eigen::VectorXd& { return r.n_opt.v; }),
            (fs::path(dir) / "fig_profiles_n.csv").string());
  write_csv(profile_table([](const OptRun& r) -> const Eigen::VectorXd& { return r.p_opt.v; }),
            (fs::path(dir) / "fig_profiles_p.csv").string());

  const auto cost_table = [&](auto&& accessor) {
    CsvTable t;
    t.header = {"iteration", "value", "lambda2"};
    for (size_t i = 0; i < result.runs.size(); ++i) {
      if (!result.rows[i].ok) continue;
      const auto& its = result.runs[i].iterates;
      for (size_t k = 0; k < its.size(); ++k)
        t.rows.push_back({static_cast<double>(k), accessor(its[k].cost),
                          result.rows[i].lambda2});
    }
    return t;
  };
  write_csv(cost_table([](const CostBreakdown& c) { return c.total; }),
            (fs::path(dir) / "fig_cost_J.csv").string());
  write_csv(cost_table([](const CostBreakdown& c) { return c.J1; }),
            (fs::path(dir) / "fig_cost_J1.csv").string());
  write_csv(cost_table([](const CostBreakdown& c) { return c.J2; }),
            (fs::path(dir) / "fig_cost_J2.csv").string());
  write_csv(cost_table([](const CostBreakdown& c) { return c.J3; }),
            (fs::path(dir) / "fig_cost_J3.csv").string());
}

}  // namespace ddopt
