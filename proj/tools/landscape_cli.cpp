#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "landscape/config.hpp"
#include "landscape/errors.hpp"
#include "landscape/runner.hpp"

using namespace landscape;

namespace {

constexpr const char* kOutputEnv = "LANDSCAPE_OUTPUT_DIR";

constexpr const char* kFigureMap =
    "Figure -> command:\n"
    "  1  cluster-experiment (--alpha 8, --m-inits 30)\n"
    "  2  phase-diagram; solve-fp for E3 at single points\n"
    "  3  hessian-spectrum\n"
    "  4  rate-function\n"
    "  5  gd-experiment\n"
    "  6  cluster-experiment (--alpha-grid, gram matrices)\n"
    "  7  cluster-experiment (--alpha-grid, cluster counts)\n"
    "Exit codes: 0 success, 2 usage error, 3 numeric failure.\n"
    "Default output directory: $LANDSCAPE_OUTPUT_DIR, else the working directory.\n";

// Every flag is optional; only the ones given override the config.
struct Flags {
  std::optional<std::string> config_file, output, snr_grid, alpha_range,
      rho_grid, iota_grid, alpha_grid;
  std::optional<double> alpha, snr, kappa, r00, damping, tol, threshold;
  std::optional<int> quad_order, t_max, jobs, d, m_inits, trials, seeds;
  std::optional<std::uint64_t> seed_base;
  bool print_config = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_file, "JSON experiment config")
      ->check(CLI::ExistingFile);
  sub->add_option("--output", f.output, "output directory");
  sub->add_option("--jobs", f.jobs, "worker threads (0: OpenMP default)");
  sub->add_option("--quad-order", f.quad_order, "Gauss-Hermite order");
  sub->add_option("--kappa", f.kappa, "Tukey threshold");
  sub->add_option("--r00", f.r00, "squared signal norm");
  sub->add_flag("--print-config", f.print_config,
                "print the effective config and exit");
}

void add_problem(CLI::App* sub, Flags& f) {
  sub->add_option("--alpha", f.alpha, "sampling ratio n/d");
  sub->add_option("--snr", f.snr, "signal-to-noise ratio");
}

void add_se(CLI::App* sub, Flags& f) {
  sub->add_option("--damping", f.damping, "fixed-point damping");
  sub->add_option("--tol", f.tol, "fixed-point tolerance");
  sub->add_option("--t-max", f.t_max, "fixed-point iteration cap");
}

void add_seeds(CLI::App* sub, Flags& f) {
  sub->add_option("--seeds", f.seeds, "number of seeds");
  sub->add_option("--seed-base", f.seed_base, "first seed");
}

template <class T>
void set(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

std::vector<double> grid_flag(const std::string& spec, const std::string& name) {
  try {
    return parse_grid(spec);
  } catch (const ConfigError& e) {
    throw ConfigError(name, e.what());
  }
}

ExperimentConfig build_config(Command cmd, const Flags& f) {
  ExperimentConfig cfg;
  if (f.config_file) {
    std::ifstream in(*f.config_file);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = deserialize(ss.str());
  } else if (const char* env = std::getenv(kOutputEnv); env && *env) {
    cfg.output_path = env;
  }
  cfg.command = cmd;
  set(f.alpha, cfg.problem.alpha);
  set(f.snr, cfg.problem.snr);
  set(f.kappa, cfg.problem.kappa);
  set(f.r00, cfg.problem.r00);
  set(f.quad_order, cfg.numerics.quad_order);
  set(f.damping, cfg.numerics.damping);
  set(f.tol, cfg.numerics.tol);
  set(f.t_max, cfg.numerics.t_max);
  if (f.snr_grid) cfg.numerics.snr_grid = grid_flag(*f.snr_grid, "--snr-grid");
  if (f.alpha_range) {
    try {
      const auto [lo, hi] = parse_range(*f.alpha_range);
      cfg.numerics.alpha_lo = lo;
      cfg.numerics.alpha_hi = hi;
    } catch (const ConfigError& e) {
      throw ConfigError("--alpha-range", e.what());
    }
  }
  if (f.rho_grid) cfg.numerics.rho_grid = grid_flag(*f.rho_grid, "--rho-grid");
  if (f.iota_grid) cfg.numerics.iota_grid = grid_flag(*f.iota_grid, "--iota-grid");
  if (f.alpha_grid) cfg.experiment.alpha_grid = grid_flag(*f.alpha_grid, "--alpha-grid");
  set(f.d, cfg.experiment.d);
  set(f.m_inits, cfg.experiment.m_inits);
  set(f.trials, cfg.experiment.trials);
  set(f.threshold, cfg.experiment.threshold);
  if (f.seeds || f.seed_base) {
    const std::uint64_t base = f.seed_base.value_or(cfg.seeds.front());
    const int count = f.seeds.value_or(static_cast<int>(cfg.seeds.size()));
    if (count < 1) throw ConfigError("--seeds", "must be >= 1");
    cfg.seeds.clear();
    for (int i = 0; i < count; ++i) cfg.seeds.push_back(base + static_cast<std::uint64_t>(i));
  }
  if (cmd == Command::hessian_spectrum && f.trials && !f.seeds) {
    const std::uint64_t base = f.seed_base.value_or(cfg.seeds.front());
    cfg.seeds.clear();
    for (int i = 0; i < *f.trials; ++i) cfg.seeds.push_back(base + static_cast<std::uint64_t>(i));
  }
  set(f.output, cfg.output_path);
  set(f.jobs, cfg.jobs);
  validate(cfg);
  return cfg;
}

void usage_error(const std::string& field, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", "usage"}, {"field", field}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landscape of robust regression: fixed points, rate function and GD experiments"};
  app.footer(kFigureMap);
  app.require_subcommand(1);
  Flags f;

  auto* solve = app.add_subcommand("solve-fp", "state-evolution fixed point at (alpha, snr)");
  add_common(solve, f);
  add_problem(solve, f);
  add_se(solve, f);

  auto* phase = app.add_subcommand("phase-diagram", "alpha_tr over an snr grid (CSV snr,alpha_tr)");
  add_common(phase, f);
  add_se(phase, f);
  phase->add_option("--snr-grid", f.snr_grid, "a:b:n or comma list");
  phase->add_option("--alpha-range", f.alpha_range, "lo:hi bracket for alpha_tr");

  auto* rate = app.add_subcommand("rate-function", "rate function surface (CSV rho,iota,phi)");
  add_common(rate, f);
  add_problem(rate, f);
  rate->add_option("--rho-grid", f.rho_grid, "a:b:n or comma list");
  rate->add_option("--iota-grid", f.iota_grid, "a:b:n or comma list");

  auto* gd = app.add_subcommand("gd-experiment", "GD estimation error and train loss vs theory");
  add_common(gd, f);
  add_problem(gd, f);
  add_seeds(gd, f);
  gd->add_option("--d", f.d, "dimension");
  gd->add_option("--m-inits", f.m_inits, "initializations per seed");

  auto* hess = app.add_subcommand("hessian-spectrum", "Hessian spectrum at the GD minimizer");
  add_common(hess, f);
  add_problem(hess, f);
  hess->add_option("--d", f.d, "dimension");
  hess->add_option("--trials", f.trials, "independent datasets");
  hess->add_option("--seed-base", f.seed_base, "first seed");

  auto* clus = app.add_subcommand("cluster-experiment", "multi-initialization GD clustering");
  add_common(clus, f);
  add_problem(clus, f);
  add_seeds(clus, f);
  clus->add_option("--alpha-grid", f.alpha_grid, "alphas to sweep (a:b:n or list)");
  clus->add_option("--d", f.d, "dimension");
  clus->add_option("--m-inits", f.m_inits, "initializations per dataset");
  clus->add_option("--threshold", f.threshold, "normalized distance threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    usage_error("<args>", e.what());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  ExperimentConfig cfg;
  try {
    cfg = build_config(command_from_string(sub->get_name()), f);
  } catch (const ConfigError& e) {
    usage_error(e.field(), e.what());
    return 2;
  } catch (const InvalidParameter& e) {
    usage_error("<config>", e.what());
    return 2;
  }
  if (f.print_config) {
    std::cout << serialize(cfg);
    return 0;
  }

  try {
    const auto rec = run(cfg);
    for (const auto& p : write_outputs(rec, cfg)) std::cout << p << "\n";
    return 0;
  } catch (const InvalidParameter& e) {
    usage_error("<config>", e.what());
    return 2;
  } catch (const std::exception& e) {
    const auto err = error_record(cfg, "numeric_failure", e.what());
    std::cerr << err["error"].dump() << "\n";
    try {
      write_error(err, cfg);
    } catch (const std::exception& io) {
      std::cerr << io.what() << "\n";
    }
    return 3;
  }
}
