#include "ddopt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ddopt/csv.hpp"
#include "ddopt/errors.hpp"

namespace ddopt {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double x = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' has a malformed numeric value '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const int x = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' has a malformed integer value '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

std::vector<double> parse_lambda_list(const std::string& csv_values) {
  std::vector<double> out;
  std::stringstream ss(csv_values);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_double("lambda2_list", trim(cell)));
  return out;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open file '" + path + "'");

  std::string section, line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section != "mesh" && section != "problem" && section != "optimize" &&
          section != "sweep" && section != "gradcheck" && section != "output")
        throw ConfigError("config: unknown section '[" + section + "]'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qualified = section + "." + key;

    if (qualified == "mesh.nodes") cfg.nodes = parse_int(qualified, value);
    else if (qualified == "mesh.domain") {
      const auto comma = value.find(',');
      if (comma == std::string::npos)
        throw ConfigError("config: key 'mesh.domain' expects 'a,b'");
      cfg.domain_a = parse_double(qualified, trim(value.substr(0, comma)));
      cfg.domain_b = parse_double(qualified, trim(value.substr(comma + 1)));
    } else if (qualified == "problem.lambda2") cfg.lambda2 = parse_double(qualified, value);
    else if (qualified == "problem.delta") { cfg.delta = parse_double(qualified, value); cfg.delta_explicit = true; }
    else if (qualified == "problem.doping") cfg.doping = value;
    else if (qualified == "problem.sigma") cfg.sigma = parse_double(qualified, value);
    else if (qualified == "optimize.omega0") cfg.omega0 = parse_double(qualified, value);
    else if (qualified == "optimize.gamma") cfg.gamma = parse_double(qualified, value);
    else if (qualified == "optimize.tol") cfg.tol = parse_double(qualified, value);
    else if (qualified == "optimize.tol_opt") cfg.tol_opt = parse_double(qualified, value);
    else if (qualified == "optimize.tol_abs") cfg.tol_abs = parse_double(qualified, value);
    else if (qualified == "optimize.max_iter") cfg.max_iter = parse_int(qualified, value);
    else if (qualified == "optimize.max_armijo_halvings")
      cfg.max_armijo_halvings = parse_int(qualified, value);
    else if (qualified == "optimize.paper_signs") cfg.paper_signs = parse_bool(qualified, value);
    else if (qualified == "optimize.freeze_totals")
      cfg.totals_mode = parse_bool(qualified, value) ? 1 : 0;
    else if (qualified == "sweep.lambda2_list") cfg.lambda2_list = parse_lambda_list(value);
    else if (qualified == "gradcheck.seed") cfg.seed = parse_int(qualified, value);
    else if (qualified == "gradcheck.eps") cfg.fd_eps = parse_double(qualified, value);
    else if (qualified == "gradcheck.directions") cfg.directions = parse_int(qualified, value);
    else if (qualified == "output.dir") cfg.out_dir = value;
    else throw ConfigError("config: unknown key '" + qualified + "'");
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.nodes < 3) throw ConfigError("config: 'nodes' must be >= 3 (got " +
                                       std::to_string(cfg.nodes) + ")");
  if (!(cfg.domain_b > cfg.domain_a)) throw ConfigError("config: 'domain' requires a < b");
  if (cfg.lambda2 < 0.0) throw ConfigError("config: 'lambda2' must be >= 0");
  if (!(cfg.delta > 0.0)) throw ConfigError("config: 'delta' must be > 0");
  if (!(cfg.sigma > 0.0)) throw ConfigError("config: 'sigma' must be > 0");
  if (!(cfg.omega0 > 0.0)) throw ConfigError("config: 'omega0' must be > 0");
  if (!(cfg.gamma > 0.0)) throw ConfigError("config: 'gamma' must be > 0");
  if (!(cfg.tol > 0.0)) throw ConfigError("config: 'tol' must be > 0");
  if (!(cfg.tol_opt > 0.0)) throw ConfigError("config: 'tol_opt' must be > 0");
  if (!(cfg.tol_abs > 0.0)) throw ConfigError("config: 'tol_abs' must be > 0");
  if (cfg.max_iter < 1) throw ConfigError("config: 'max_iter' must be >= 1");
  if (cfg.max_armijo_halvings < 1)
    throw ConfigError("config: 'max_armijo_halvings' must be >= 1");
  if (!(cfg.fd_eps >= 1e-8 && cfg.fd_eps <= 1e-4))
    throw ConfigError("config: 'eps' must lie in [1e-8, 1e-4]");
  if (cfg.directions < 1) throw ConfigError("config: 'directions' must be >= 1");
  if (cfg.lambda2_list.empty()) throw ConfigError("config: 'lambda2_list' must not be empty");
  for (size_t i = 0; i + 1 < cfg.lambda2_list.size(); ++i)
    if (cfg.lambda2_list[i] <= cfg.lambda2_list[i + 1])
      throw ConfigError("config: 'lambda2_list' must be sorted descending");
  if (cfg.lambda2_list.back() < 0.0)
    throw ConfigError("config: 'lambda2_list' entries must be >= 0");
}

Mesh1D mesh_from(const RunConfig& cfg) {
  return Mesh1D::uniform(cfg.domain_a, cfg.domain_b, cfg.nodes);
}

OptimizerConfig optimizer_from(const RunConfig& cfg) {
  OptimizerConfig oc;
  oc.sigma = cfg.sigma;
  oc.gamma_armijo = cfg.gamma;
  oc.omega0 = cfg.omega0;
  oc.tol_opt = cfg.tol_opt;
  oc.tol_abs = cfg.tol_abs;
  oc.tol_inner = cfg.tol;
  oc.max_iter = cfg.max_iter;
  oc.max_armijo_halvings = cfg.max_armijo_halvings;
  oc.lambda2 = cfg.lambda2;
  oc.paper_signs = cfg.paper_signs;
  if (cfg.totals_mode >= 0) oc.freeze_totals = cfg.totals_mode == 1;
  return oc;
}

bool freeze_totals_for(const RunConfig& cfg, const std::string& subcommand) {
  if (cfg.totals_mode >= 0) return cfg.totals_mode == 1;
  return subcommand == "optimize" || subcommand == "sweep";
}

NodalField build_doping(const Mesh1D& mesh, const std::string& descriptor) {
  const auto colon = descriptor.find(':');
  const std::string kind = descriptor.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : descriptor.substr(colon + 1);

  if (kind == "constant") {
    const double c = parse_double("doping", arg);
    return NodalField(mesh, Eigen::VectorXd::Constant(mesh.n_nodes, c));
  }
  if (kind == "builtin") {
    if (arg != "canonical")
      throw ConfigError("config: unknown builtin doping profile '" + arg + "'");
    return canonical_profile(mesh).C_ref;
  }
  if (kind == "csv") {
    const CsvTable table = read_csv(arg);
    if (table.rows.empty()) throw ConfigError("config: doping csv '" + arg + "' is empty");
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : table.rows) {
      if (row.size() < 2)
        throw ConfigError("config: doping csv '" + arg + "' needs columns x,value");
      pts.emplace_back(row[0], row[1]);
    }
    std::sort(pts.begin(), pts.end());
    return NodalField::sample(mesh, [&](double x) {
      if (x <= pts.front().first) return pts.front().second;
      if (x >= pts.back().first) return pts.back().second;
      const auto it = std::lower_bound(pts.begin(), pts.end(), std::make_pair(x, -1e300));
      const auto [x1, y1] = *it;
      const auto [x0, y0] = *(it - 1);
      return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    });
  }
  throw ConfigError("config: doping descriptor '" + descriptor +
                    "' must be constant:<v>, builtin:canonical or csv:<path>");
}

TrackingTargets targets_for(const Mesh1D& mesh, const NodalField& C_ref) {
  TrackingTargets t;
  t.n_d = NodalField(mesh, 0.8 * C_ref.v.cwiseMax(0.0));
  t.p_d = NodalField(mesh, 1.2 * (-C_ref.v).cwiseMax(0.0));
  return t;
}

ExperimentSpec experiment_from(const RunConfig& cfg) {
  ExperimentSpec spec;
  spec.mesh = mesh_from(cfg);
  spec.C_ref = build_doping(spec.mesh, cfg.doping);
  const TrackingTargets t = targets_for(spec.mesh, spec.C_ref);
  spec.n_d = t.n_d;
  spec.p_d = t.p_d;
  spec.lambda2_list = cfg.lambda2_list;
  spec.cfg = optimizer_from(cfg);
  spec.delta2 = cfg.delta * cfg.delta;
  spec.output_dir = cfg.out_dir;
  return spec;
}

}  // namespace ddopt
