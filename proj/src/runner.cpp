#include "landscape/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "landscape/erm.hpp"
#include "landscape/errors.hpp"
#include "landscape/rate_function.hpp"
#include "landscape/spectral.hpp"
#include "landscape/state_evolution.hpp"

namespace landscape {

namespace {

using ojson = nlohmann::ordered_json;

SeOptions se_options(const ExperimentConfig& cfg) {
  SeOptions o;
  o.damping = cfg.numerics.damping;
  o.tol = cfg.numerics.tol;
  o.t_max = cfg.numerics.t_max;
  return o;
}

ojson real_or_null(double x) {
  return std::isfinite(x) ? ojson(x) : ojson(nullptr);
}

std::string fmt_int(long long x) { return std::to_string(x); }

int rows_for(double alpha, int d) {
  return static_cast<int>(std::lround(alpha * d));
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t t) {
  if (t < cfg.seeds.size()) return cfg.seeds[t];
  return cfg.seeds.back() + (t - cfg.seeds.size() + 1);
}

// theta0 is shared by every dataset of one run.
std::uint64_t theta_seed(const ExperimentConfig& cfg) { return cfg.seeds.front(); }

FixedPointSolution fixed_point(const ProblemConfig& pc,
                               const ExperimentConfig& cfg) {
  const auto grid = make_joint_grid(pc.noise, cfg.numerics.quad_order);
  return se_solve(pc, grid, std::nullopt, se_options(cfg));
}

ojson run_solve_fp(const ExperimentConfig& cfg, RunRecord&) {
  const auto pc = problem_config(cfg);
  const auto sol = fixed_point(pc, cfg);
  if (!sol.converged)
    throw NumericError("solve-fp: no convergence within t_max = " +
                       std::to_string(cfg.numerics.t_max) + " iterations");
  ojson r;
  r["rho_star"] = sol.state.rho;
  r["s_star"] = sol.state.s;
  r["e3"] = sol.e3;
  r["stable"] = sol.stable;
  r["converged"] = sol.converged;
  r["clipped"] = sol.clipped;
  r["iterations"] = sol.iterations;
  r["g"] = sol.g;
  r["iota_star"] = sol.train;
  r["zeta_min"] = real_or_null(spectral_edge(sol.nu_star).zeta_min);
  return r;
}

ojson run_phase_diagram(const ExperimentConfig& cfg, RunRecord& rec) {
  const auto tmpl = problem_config(cfg);
  SweepOptions opts;
  opts.alpha_lo = cfg.numerics.alpha_lo;
  opts.alpha_hi = cfg.numerics.alpha_hi;
  opts.se = se_options(cfg);
  const auto pb = phase_boundary(cfg.numerics.snr_grid, tmpl,
                                 cfg.numerics.quad_order, opts);
  Table t{"phase-diagram", {"snr", "alpha_tr"}, {}};
  ojson cells = ojson::array();
  for (std::size_t i = 0; i < pb.snr_grid.size(); ++i) {
    const auto& a = pb.alpha_tr[i];
    t.rows.push_back({format_real(pb.snr_grid[i]), a ? format_real(*a) : ""});
    cells.push_back({{"snr", pb.snr_grid[i]},
                     {"alpha_tr", a ? ojson(*a) : ojson(nullptr)}});
  }
  rec.tables.push_back(std::move(t));
  return {{"boundary", cells}};
}

ojson run_rate_function(const ExperimentConfig& cfg, RunRecord& rec) {
  const auto pc = problem_config(cfg);
  const auto grid = make_joint_grid(pc.noise, cfg.numerics.quad_order);
  CurveOptions opts;
  const auto surf = phi_curves(pc, grid, cfg.numerics.rho_grid,
                               cfg.numerics.iota_grid, opts);
  Table cells{"rate-function", {"rho", "iota", "phi"}, {}};
  for (std::size_t i = 0; i < surf.rho_grid.size(); ++i)
    for (std::size_t j = 0; j < surf.iota_grid.size(); ++j)
      cells.rows.push_back({format_real(surf.rho_grid[i]),
                            format_real(surf.iota_grid[j]),
                            format_real(surf.phi(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(j)))});
  Table curves{"rate-function_curves", {"rho", "phi_inf", "phi_zero"}, {}};
  for (std::size_t i = 0; i < surf.rho_grid.size(); ++i)
    curves.rows.push_back({format_real(surf.rho_grid[i]),
                           format_real(surf.phi_inf[i]),
                           format_real(surf.phi_zero[i])});
  rec.tables.push_back(std::move(cells));
  rec.tables.push_back(std::move(curves));
  const auto sol = fixed_point(pc, cfg);
  ojson r;
  r["iota0"] = surf.iota0;
  r["iota0_found"] = surf.iota0_found;
  r["rho_star"] = surf.rho_star;
  r["rho_star_fixed_point"] = sol.state.rho;
  r["iota_star"] = sol.train;
  return r;
}

ojson run_gd_experiment(const ExperimentConfig& cfg, RunRecord& rec) {
  const auto pc = problem_config(cfg);
  const int d = cfg.experiment.d, n = rows_for(pc.alpha, d);
  const int m = cfg.experiment.m_inits;
  const std::size_t S = cfg.seeds.size();
  std::vector<GDResult> runs(S * static_cast<std::size_t>(m));
  for_each_index(runs.size(), Execution::parallel, [&](std::size_t k) {
    const std::size_t s = k / static_cast<std::size_t>(m);
    const auto data = gen_data(n, d, pc, cfg.seeds[s], theta_seed(cfg));
    GDConfig gd;
    gd.seed = cfg.seeds[s];
    runs[k] = gd_run(data, pc, gd,
                     sphere_point(d, gd.seed, k % static_cast<std::size_t>(m)));
  });
  const auto sol = fixed_point(pc, cfg);
  const double rho = sol.state.rho, iota = sol.train;

  Table t{"gd-experiment",
          {"seed", "init", "est_error", "train_loss", "iterations",
           "final_grad_norm", "stalled"},
          {}};
  double err = 0.0, train = 0.0, dev_err = 0.0, dev_train = 0.0;
  int stalled = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& r = runs[k];
    t.rows.push_back({fmt_int(static_cast<long long>(cfg.seeds[k / m])),
                      fmt_int(static_cast<long long>(k % m)),
                      format_real(r.est_error), format_real(r.train_loss),
                      fmt_int(r.iterations), format_real(r.final_grad_norm),
                      r.stalled ? "1" : "0"});
    err += r.est_error;
    train += r.train_loss;
    dev_err += std::abs(r.est_error - rho) / rho;
    dev_train += std::abs(r.train_loss - iota) / iota;
    stalled += r.stalled;
  }
  const double N = static_cast<double>(runs.size());
  rec.tables.push_back(std::move(t));
  ojson r;
  r["runs"] = runs.size();
  r["rho_star"] = rho;
  r["iota_star"] = iota;
  r["mean_est_error"] = err / N;
  r["mean_train_loss"] = train / N;
  r["mean_rel_dev_est_error"] = dev_err / N;
  r["mean_rel_dev_train_loss"] = dev_train / N;
  r["rel_dev_of_mean_est_error"] = std::abs(err / N - rho) / rho;
  r["rel_dev_of_mean_train_loss"] = std::abs(train / N - iota) / iota;
  r["stalled_runs"] = stalled;
  return r;
}

ojson run_hessian_spectrum(const ExperimentConfig& cfg, RunRecord& rec) {
  const auto pc = problem_config(cfg);
  const int d = cfg.experiment.d, n = rows_for(pc.alpha, d);
  const auto T = static_cast<std::size_t>(cfg.experiment.trials);
  std::vector<std::vector<double>> spectra(T);
  std::vector<GDResult> runs(T);
  for_each_index(T, Execution::parallel, [&](std::size_t t) {
    const auto data = gen_data(n, d, pc, trial_seed(cfg, t), theta_seed(cfg));
    GDConfig gd;
    gd.seed = trial_seed(cfg, t);
    runs[t] = gd_run(data, pc, gd);
    spectra[t] = hessian_spectrum(data, pc, runs[t].theta_hat);
  });
  const auto sol = fixed_point(pc, cfg);
  const double zeta = spectral_edge(sol.nu_star).zeta_min;

  Table eig{"hessian-spectrum", {"trial", "seed", "k", "eigenvalue"}, {}};
  Table per{"hessian-spectrum_trials",
            {"trial", "seed", "min_eigenvalue", "max_eigenvalue", "est_error",
             "iterations", "stalled"},
            {}};
  double mean_min = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto seed = fmt_int(static_cast<long long>(trial_seed(cfg, t)));
    for (std::size_t k = 0; k < spectra[t].size(); ++k)
      eig.rows.push_back({fmt_int(static_cast<long long>(t)), seed,
                          fmt_int(static_cast<long long>(k)),
                          format_real(spectra[t][k])});
    per.rows.push_back({fmt_int(static_cast<long long>(t)), seed,
                        format_real(spectra[t].front()),
                        format_real(spectra[t].back()),
                        format_real(runs[t].est_error),
                        fmt_int(runs[t].iterations),
                        runs[t].stalled ? "1" : "0"});
    mean_min += spectra[t].front() / static_cast<double>(T);
  }
  rec.tables.push_back(std::move(eig));
  rec.tables.push_back(std::move(per));
  ojson r;
  r["zeta_min"] = real_or_null(zeta);
  r["fixed_point_stable"] = sol.stable;
  r["mean_min_eigenvalue"] = mean_min;
  r["rel_dev_min_eigenvalue"] = real_or_null(std::abs(mean_min / zeta - 1.0));
  return r;
}

ojson run_cluster_experiment(const ExperimentConfig& cfg, RunRecord& rec) {
  std::vector<double> alphas = cfg.experiment.alpha_grid;
  if (alphas.empty()) alphas.push_back(cfg.problem.alpha);
  const int d = cfg.experiment.d, M = cfg.experiment.m_inits;
  const std::size_t S = cfg.seeds.size();
  std::vector<ClusterReport> reports(alphas.size() * S);
  for_each_index(reports.size(), Execution::parallel, [&](std::size_t k) {
    ExperimentConfig c = cfg;
    c.problem.alpha = alphas[k / S];
    const auto pc = problem_config(c);
    const std::uint64_t seed = cfg.seeds[k % S];
    const auto data = gen_data(rows_for(pc.alpha, d), d, pc, seed, theta_seed(cfg));
    GDConfig gd;
    gd.seed = seed;
    reports[k] = multi_init_experiment(data, pc, gd, M, cfg.experiment.threshold,
                                       Execution::serial);
  });

  Table t{"cluster-experiment",
          {"alpha", "seed", "n_clusters", "max_pair_dist", "stalled_runs"},
          {}};
  Table gram{"cluster-experiment_gram", {"alpha", "seed", "i", "j", "inner_product"}, {}};
  ojson summary = ojson::array();
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    int single = 0;
    double mean_clusters = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const auto& rep = reports[a * S + s];
      int stalls = 0;
      for (const auto& r : rep.runs) stalls += r.stalled;
      const auto seed = fmt_int(static_cast<long long>(cfg.seeds[s]));
      t.rows.push_back({format_real(alphas[a]), seed, fmt_int(rep.n_clusters),
                        format_real(rep.max_pair_dist), fmt_int(stalls)});
      single += rep.n_clusters == 1;
      mean_clusters += rep.n_clusters / static_cast<double>(S);
      if (s == 0)
        for (Eigen::Index i = 0; i < rep.gram.rows(); ++i)
          for (Eigen::Index j = 0; j < rep.gram.cols(); ++j)
            gram.rows.push_back({format_real(alphas[a]), seed, fmt_int(i),
                                 fmt_int(j), format_real(rep.gram(i, j))});
    }
    summary.push_back({{"alpha", alphas[a]},
                       {"single_cluster_frequency", single / static_cast<double>(S)},
                       {"multiple_cluster_frequency", 1.0 - single / static_cast<double>(S)},
                       {"mean_n_clusters", mean_clusters}});
  }
  rec.tables.push_back(std::move(t));
  rec.tables.push_back(std::move(gram));
  return {{"by_alpha", summary}};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + p.string());
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

RunRecord run(const ExperimentConfig& cfg) {
  validate(cfg);
  if (cfg.jobs > 0) set_threads(cfg.jobs);
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  ojson results;
  switch (cfg.command) {
    case Command::solve_fp: results = run_solve_fp(cfg, rec); break;
    case Command::phase_diagram: results = run_phase_diagram(cfg, rec); break;
    case Command::rate_function: results = run_rate_function(cfg, rec); break;
    case Command::gd_experiment: results = run_gd_experiment(cfg, rec); break;
    case Command::hessian_spectrum: results = run_hessian_spectrum(cfg, rec); break;
    case Command::cluster_experiment: results = run_cluster_experiment(cfg, rec); break;
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.json["config"] = to_json(cfg);
  rec.json["version"] = kArtifactVersion;
  rec.json["wall_clock_s"] = wall;
  rec.json["results"] = std::move(results);
  return rec;
}

nlohmann::ordered_json error_record(const ExperimentConfig& cfg,
                                    const std::string& kind,
                                    const std::string& message) {
  ojson j;
  j["config"] = to_json(cfg);
  j["version"] = kArtifactVersion;
  j["error"] = {{"kind", kind}, {"message", message}};
  return j;
}

std::string to_csv(const Table& t, const ExperimentConfig& cfg) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    out += (i ? "," : "") + t.header[i];
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  out += "# config " + to_json(cfg).dump() + "\n";
  return out;
}

std::vector<std::string> write_outputs(const RunRecord& rec,
                                       const ExperimentConfig& cfg) {
  const std::filesystem::path dir(cfg.output_path);
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& t : rec.tables) {
    const auto p = dir / (t.name + ".csv");
    write_file(p, to_csv(t, cfg));
    paths.push_back(p.string());
  }
  const auto p = dir / (to_string(cfg.command) + ".json");
  write_file(p, rec.json.dump(2) + "\n");
  paths.push_back(p.string());
  return paths;
}

void write_error(const nlohmann::ordered_json& err, const ExperimentConfig& cfg) {
  const std::filesystem::path dir(cfg.output_path);
  std::filesystem::create_directories(dir);
  write_file(dir / (to_string(cfg.command) + ".json"), err.dump(2) + "\n");
}

}  // namespace landscape
