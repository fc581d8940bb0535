#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "landscape/loss.hpp"
#include "landscape/parallel.hpp"

namespace landscape {

// Counter-based generator: every draw is a SplitMix64 hash of
// (seed, stream, counter), so draws can be taken in any order or in
// parallel and are reproducible across platforms.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t bits(std::uint64_t counter) const;
  // Uniform on (0, 1).
  double uniform(std::uint64_t counter) const;
  // Standard normal by Box-Muller on the uniforms at 2 counter, 2 counter + 1.
  double normal(std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

// Streams used by gen_data and the initializations.
enum class RngStream : std::uint64_t { design = 1, theta0 = 2, noise = 3, init = 4 };

struct Dataset {
  Eigen::MatrixXd X;  // n x d, i.i.d. N(0, 1) entries
  Eigen::VectorXd theta0;
  Eigen::VectorXd w;
  Eigen::VectorXd y;  // X theta0 + w
  std::uint64_t seed = 0;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
};

// theta0 is a normalized Gaussian scaled to norm sqrt(r00); it is drawn from
// theta_seed (default: seed), so it can be held fixed across data draws.
Dataset gen_data(int n, int d, const ProblemConfig& cfg, std::uint64_t seed,
                 std::optional<std::uint64_t> theta_seed = std::nullopt);

// Uniform point on the unit sphere in R^d.
Eigen::VectorXd sphere_point(int d, std::uint64_t seed, std::uint64_t index);

struct RiskEval {
  double risk = 0.0;
  Eigen::VectorXd grad;
};

// (1/n) sum l(x_i' theta - y_i) (+ lambda/2 |theta|^2) and its gradient.
RiskEval risk_grad(const Eigen::VectorXd& theta, const Dataset& data,
                   const ProblemConfig& cfg, Execution ex = Execution::serial);
double risk(const Eigen::VectorXd& theta, const Dataset& data,
            const ProblemConfig& cfg, Execution ex = Execution::serial);
// (1/n) X' D X (+ lambda I), D_ii = l''(r_i).
Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, const Dataset& data,
                        const ProblemConfig& cfg,
                        Execution ex = Execution::serial);
// Hessian-vector product without forming the matrix.
Eigen::VectorXd hessian_vec(const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& u, const Dataset& data,
                            const ProblemConfig& cfg,
                            Execution ex = Execution::serial);

struct GDConfig {
  int max_iters = 100000;
  double grad_tol = 1e-9;
  double backtrack_base = 0.1;
  int backtrack_powers = 5;  // steps base^0 .. base^powers
  std::uint64_t seed = 0;
  // Recompute the residual from scratch every this many steps.
  int refresh_every = 50;
  bool record_risk = false;
  Execution ex = Execution::serial;
};

struct GDResult {
  Eigen::VectorXd theta_hat;
  int iterations = 0;
  double final_grad_norm = 0.0;
  double train_loss = 0.0;
  double est_error = 0.0;  // |theta_hat - theta0|
  bool stalled = false;    // no trial step decreased the risk
  std::vector<double> risk_history;
};

// Gradient descent taking the largest base^j, j = 0..powers, that strictly
// decreases the risk.
GDResult gd_run(const Dataset& data, const ProblemConfig& cfg,
                const GDConfig& gd, const Eigen::VectorXd& init);
// Same from sphere_point(d, gd.seed, 0).
GDResult gd_run(const Dataset& data, const ProblemConfig& cfg,
                const GDConfig& gd);

// Sorted eigenvalues of the Hessian at theta.
std::vector<double> hessian_spectrum(const Dataset& data,
                                     const ProblemConfig& cfg,
                                     const Eigen::VectorXd& theta);

struct ClusterReport {
  Eigen::MatrixXd gram;
  double max_pair_dist = 0.0;
  int n_clusters = 0;
  double threshold = 1e-3;
  std::vector<int> labels;
  std::vector<GDResult> runs;
};

// Connected components of the graph joining i, j when
// |a - b| / sqrt(|a| |b|) < threshold.
ClusterReport cluster_solutions(const std::vector<Eigen::VectorXd>& thetas,
                                double threshold = 1e-3);

// M gradient descent runs from sphere_point(d, gd.seed, m), m < M.
ClusterReport multi_init_experiment(const Dataset& data,
                                    const ProblemConfig& cfg,
                                    const GDConfig& gd, int M,
                                    double threshold = 1e-3,
                                    Execution ex = Execution::parallel);
// Same from explicit initializations.
ClusterReport multi_init_experiment(const Dataset& data,
                                    const ProblemConfig& cfg,
                                    const GDConfig& gd,
                                    const std::vector<Eigen::VectorXd>& inits,
                                    double threshold = 1e-3,
                                    Execution ex = Execution::parallel);

}  // namespace landscape
