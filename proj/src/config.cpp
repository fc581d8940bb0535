#include "landscape/config.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

namespace landscape {

namespace {

using json = nlohmann::json;

constexpr std::array<std::pair<Command, const char*>, 6> kCommands{{
    {Command::solve_fp, "solve-fp"},
    {Command::phase_diagram, "phase-diagram"},
    {Command::rate_function, "rate-function"},
    {Command::gd_experiment, "gd-experiment"},
    {Command::hessian_spectrum, "hessian-spectrum"},
    {Command::cluster_experiment, "cluster-experiment"},
}};

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  const std::string prefix = path.empty() ? "" : path + ".";
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError(prefix + key, "unknown field");
  for (const auto& key : allowed)
    if (!j.contains(key)) throw ConfigError(prefix + key, "missing field");
}

double get_real(const json& j, const std::string& key, const std::string& path) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& j, const std::string& key, const std::string& path) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + key, "expected an integer");
  const auto x = v.get<long long>();
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(path + key, "out of range");
  return static_cast<int>(x);
}

std::vector<double> get_reals(const json& j, const std::string& key,
                              const std::string& path) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(path + key, "expected an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(path + key, "expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

bool all_positive(const std::vector<double>& v) {
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) return false;
  return true;
}

double parse_number(const std::string& s, const std::string& spec) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("grid", "bad number '" + s + "' in '" + spec + "'");
  }
  if (pos != s.size() || !std::isfinite(x))
    throw ConfigError("grid", "bad number '" + s + "' in '" + spec + "'");
  return x;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

std::string to_string(Command c) {
  for (const auto& [cmd, name] : kCommands)
    if (cmd == c) return name;
  return "unknown";
}

Command command_from_string(const std::string& name) {
  for (const auto& [cmd, n] : kCommands)
    if (name == n) return cmd;
  throw ConfigError("command", "unknown command '" + name + "'");
}

void validate(const ExperimentConfig& cfg) {
  const auto& p = cfg.problem;
  require(p.alpha > 1.0 && std::isfinite(p.alpha), "problem.alpha", "must be > 1");
  require(p.snr > 0.0 && std::isfinite(p.snr), "problem.snr", "must be > 0");
  require(p.kappa > 0.0 && std::isfinite(p.kappa), "problem.kappa", "must be > 0");
  require(p.r00 > 0.0 && std::isfinite(p.r00), "problem.r00", "must be > 0");
  require(p.lambda >= 0.0 && std::isfinite(p.lambda), "problem.lambda", "must be >= 0");

  const auto& n = cfg.numerics;
  require(n.quad_order >= 8 && n.quad_order <= 2000, "numerics.quad_order",
          "must be in [8, 2000]");
  require(n.damping >= 0.0 && n.damping < 1.0, "numerics.damping",
          "must be in [0, 1)");
  require(n.tol > 0.0, "numerics.tol", "must be > 0");
  require(n.t_max >= 1, "numerics.t_max", "must be >= 1");
  require(!n.snr_grid.empty() && all_positive(n.snr_grid), "numerics.snr_grid",
          "must be a non-empty list of positive values");
  require(n.alpha_lo > 1.0 && n.alpha_hi > n.alpha_lo &&
              std::isfinite(n.alpha_hi),
          "numerics.alpha_lo", "need 1 < alpha_lo < alpha_hi");
  require(!n.rho_grid.empty() && all_positive(n.rho_grid), "numerics.rho_grid",
          "must be a non-empty list of positive values");
  require(!n.iota_grid.empty() && all_positive(n.iota_grid),
          "numerics.iota_grid", "must be a non-empty list of positive values");

  const auto& e = cfg.experiment;
  require(e.d >= 1, "experiment.d", "must be >= 1");
  require(e.m_inits >= 1, "experiment.m_inits", "must be >= 1");
  require(e.trials >= 1, "experiment.trials", "must be >= 1");
  require(e.threshold > 0.0, "experiment.threshold", "must be > 0");
  for (double a : e.alpha_grid)
    require(a > 1.0 && std::isfinite(a), "experiment.alpha_grid",
            "values must be > 1");
  if (cfg.command == Command::cluster_experiment)
    require(e.m_inits >= 2, "experiment.m_inits",
            "cluster-experiment needs at least 2");

  require(!cfg.seeds.empty(), "seeds", "must be non-empty");
  require(!cfg.output_path.empty(), "output_path", "must be non-empty");
  require(cfg.jobs >= 0, "jobs", "must be >= 0");
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["command"] = to_string(cfg.command);
  auto& p = j["problem"];
  p["alpha"] = cfg.problem.alpha;
  p["snr"] = cfg.problem.snr;
  p["kappa"] = cfg.problem.kappa;
  p["r00"] = cfg.problem.r00;
  p["lambda"] = cfg.problem.lambda;
  auto& n = j["numerics"];
  n["quad_order"] = cfg.numerics.quad_order;
  n["damping"] = cfg.numerics.damping;
  n["tol"] = cfg.numerics.tol;
  n["t_max"] = cfg.numerics.t_max;
  n["snr_grid"] = cfg.numerics.snr_grid;
  n["alpha_lo"] = cfg.numerics.alpha_lo;
  n["alpha_hi"] = cfg.numerics.alpha_hi;
  n["rho_grid"] = cfg.numerics.rho_grid;
  n["iota_grid"] = cfg.numerics.iota_grid;
  auto& e = j["experiment"];
  e["d"] = cfg.experiment.d;
  e["m_inits"] = cfg.experiment.m_inits;
  e["trials"] = cfg.experiment.trials;
  e["threshold"] = cfg.experiment.threshold;
  e["alpha_grid"] = cfg.experiment.alpha_grid;
  j["seeds"] = cfg.seeds;
  j["output_path"] = cfg.output_path;
  j["jobs"] = cfg.jobs;
  return j;
}

ExperimentConfig from_json(const json& j) {
  check_keys(j, "", {"command", "problem", "numerics", "experiment", "seeds",
                     "output_path", "jobs"});
  ExperimentConfig cfg;
  if (!j.at("command").is_string()) throw ConfigError("command", "expected a string");
  cfg.command = command_from_string(j.at("command").get<std::string>());

  const auto& p = j.at("problem");
  check_keys(p, "problem", {"alpha", "snr", "kappa", "r00", "lambda"});
  cfg.problem.alpha = get_real(p, "alpha", "problem.");
  cfg.problem.snr = get_real(p, "snr", "problem.");
  cfg.problem.kappa = get_real(p, "kappa", "problem.");
  cfg.problem.r00 = get_real(p, "r00", "problem.");
  cfg.problem.lambda = get_real(p, "lambda", "problem.");

  const auto& n = j.at("numerics");
  check_keys(n, "numerics", {"quad_order", "damping", "tol", "t_max", "snr_grid",
                             "alpha_lo", "alpha_hi", "rho_grid", "iota_grid"});
  cfg.numerics.quad_order = get_int(n, "quad_order", "numerics.");
  cfg.numerics.damping = get_real(n, "damping", "numerics.");
  cfg.numerics.tol = get_real(n, "tol", "numerics.");
  cfg.numerics.t_max = get_int(n, "t_max", "numerics.");
  cfg.numerics.snr_grid = get_reals(n, "snr_grid", "numerics.");
  cfg.numerics.alpha_lo = get_real(n, "alpha_lo", "numerics.");
  cfg.numerics.alpha_hi = get_real(n, "alpha_hi", "numerics.");
  cfg.numerics.rho_grid = get_reals(n, "rho_grid", "numerics.");
  cfg.numerics.iota_grid = get_reals(n, "iota_grid", "numerics.");

  const auto& e = j.at("experiment");
  check_keys(e, "experiment", {"d", "m_inits", "trials", "threshold", "alpha_grid"});
  cfg.experiment.d = get_int(e, "d", "experiment.");
  cfg.experiment.m_inits = get_int(e, "m_inits", "experiment.");
  cfg.experiment.trials = get_int(e, "trials", "experiment.");
  cfg.experiment.threshold = get_real(e, "threshold", "experiment.");
  cfg.experiment.alpha_grid = get_reals(e, "alpha_grid", "experiment.");

  const auto& s = j.at("seeds");
  if (!s.is_array()) throw ConfigError("seeds", "expected an array");
  cfg.seeds.clear();
  for (const auto& v : s) {
    if (!v.is_number_unsigned()) throw ConfigError("seeds", "expected non-negative integers");
    cfg.seeds.push_back(v.get<std::uint64_t>());
  }
  if (!j.at("output_path").is_string())
    throw ConfigError("output_path", "expected a string");
  cfg.output_path = j.at("output_path").get<std::string>();
  cfg.jobs = get_int(j, "jobs", "");
  validate(cfg);
  return cfg;
}

std::string serialize(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

ExperimentConfig deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return from_json(j);
}

ProblemConfig problem_config(const ExperimentConfig& cfg) {
  auto pc = tukey_problem(cfg.problem.alpha, cfg.problem.snr, cfg.problem.kappa,
                          cfg.problem.r00);
  pc.lambda = cfg.problem.lambda;
  return pc;
}

std::vector<double> parse_grid(const std::string& spec) {
  if (spec.empty()) throw ConfigError("grid", "empty grid");
  if (spec.find(':') != std::string::npos) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3)
      throw ConfigError("grid", "expected a:b:n, got '" + spec + "'");
    const double a = parse_number(parts[0], spec);
    const double b = parse_number(parts[1], spec);
    const double nd = parse_number(parts[2], spec);
    if (nd < 1 || nd != std::floor(nd) || nd > 1e6)
      throw ConfigError("grid", "point count must be a positive integer in '" + spec + "'");
    const int n = static_cast<int>(nd);
    if (n == 1) {
      if (a != b) throw ConfigError("grid", "one point needs a == b in '" + spec + "'");
      return {a};
    }
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
    out.back() = b;
    return out;
  }
  std::vector<double> out;
  for (const auto& part : split(spec, ',')) out.push_back(parse_number(part, spec));
  return out;
}

std::pair<double, double> parse_range(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() != 2) throw ConfigError("range", "expected lo:hi, got '" + spec + "'");
  const double lo = parse_number(parts[0], spec), hi = parse_number(parts[1], spec);
  if (!(lo < hi)) throw ConfigError("range", "need lo < hi in '" + spec + "'");
  return {lo, hi};
}

}  // namespace landscape
