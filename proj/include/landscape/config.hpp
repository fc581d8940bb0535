#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "landscape/errors.hpp"
#include "landscape/loss.hpp"

namespace landscape {

enum class Command {
  solve_fp,
  phase_diagram,
  rate_function,
  gd_experiment,
  hessian_spectrum,
  cluster_experiment,
};

std::string to_string(Command c);
// Throws ConfigError for an unknown name.
Command command_from_string(const std::string& name);

// Schema or range violation; field() names the offending key path.
class ConfigError : public InvalidParameter {
 public:
  ConfigError(std::string field, const std::string& what)
      : InvalidParameter(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  Command command = Command::solve_fp;

  struct Problem {
    double alpha = 8.0;
    double snr = 2.73;
    double kappa = 1.0;
    double r00 = 1.0;
    double lambda = 0.0;
  } problem;

  struct Numerics {
    int quad_order = 200;
    double damping = 0.3;
    double tol = 1e-10;
    int t_max = 1000;
    std::vector<double> snr_grid{2.73};
    double alpha_lo = 2.0;
    double alpha_hi = 10.0;
    std::vector<double> rho_grid{0.1, 0.2, 0.3, 0.5, 1.0, 2.0};
    std::vector<double> iota_grid{0.03, 0.06, 0.09, 0.12};
  } numerics;

  struct Experiment {
    int d = 200;
    int m_inits = 1;
    int trials = 5;
    double threshold = 1e-3;
    // cluster-experiment sweeps these; empty means {problem.alpha}.
    std::vector<double> alpha_grid;
  } experiment;

  std::vector<std::uint64_t> seeds{0};
  std::string output_path = ".";
  int jobs = 0;  // 0 keeps the OpenMP default
};

// Throws ConfigError naming the first field out of range.
void validate(const ExperimentConfig& cfg);

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys, missing keys and type mismatches throw ConfigError.
// The result is validated.
ExperimentConfig from_json(const nlohmann::json& j);

// Two-space indented JSON with a trailing newline.
std::string serialize(const ExperimentConfig& cfg);
ExperimentConfig deserialize(const std::string& text);

// Tukey loss with contaminated noise at the configured snr.
ProblemConfig problem_config(const ExperimentConfig& cfg);

// "a:b:n" (n evenly spaced points from a to b) or "x,y,z".
std::vector<double> parse_grid(const std::string& spec);
// "lo:hi".
std::pair<double, double> parse_range(const std::string& spec);

}  // namespace landscape
