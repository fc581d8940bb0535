#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "landscape/erm.hpp"
#include "landscape/errors.hpp"
#include "landscape/state_evolution.hpp"

using namespace landscape;

namespace {

ProblemConfig quadratic_problem(double alpha, double snr) {
  ProblemConfig cfg;
  cfg.alpha = alpha;
  cfg.snr = snr;
  cfg.loss = quadratic_loss();
  cfg.noise = contaminated_noise(snr);
  return cfg;
}

int rows(double alpha, int d) { return static_cast<int>(std::lround(alpha * d)); }

Eigen::VectorXd random_direction(int d, std::uint64_t seed) {
  return sphere_point(d, seed, 1000);
}

}  // namespace

TEST_CASE("counter rng is reproducible and well distributed") {
  const CounterRng a(42, 1), b(42, 1), c(42, 2);
  CHECK(a.bits(17) == b.bits(17));
  CHECK(a.bits(17) != c.bits(17));
  const int N = 200000;
  double m = 0.0, m2 = 0.0, umin = 1.0, umax = 0.0;
  for (int i = 0; i < N; ++i) {
    const double z = a.normal(static_cast<std::uint64_t>(i));
    m += z;
    m2 += z * z;
    const double u = c.uniform(static_cast<std::uint64_t>(i));
    umin = std::min(umin, u);
    umax = std::max(umax, u);
  }
  m /= N;
  m2 /= N;
  CHECK(std::abs(m) < 5.0 / std::sqrt(N));
  CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / N));
  CHECK(umin > 0.0);
  CHECK(umax < 1.0);
}

TEST_CASE("gen_data distributions") {
  const auto cfg = tukey_problem(8.0, 2.73);
  const int d = 100, n = rows(8.0, d);
  const auto data = gen_data(n, d, cfg, 3);
  const double nd = static_cast<double>(n) * d;
  const double mean = data.X.mean();
  const double var = (data.X.array() - mean).square().sum() / nd;
  CHECK(std::abs(var - 1.0) <= 5.0 / std::sqrt(nd));
  CHECK(std::abs(data.theta0.norm() - 1.0) <= 1e-12);
  CHECK(data.y == data.X * data.theta0 + data.w);

  for (std::size_t k = 0; k < cfg.noise.size(); ++k) {
    const double p = cfg.noise.probs[k];
    const double freq =
        (data.w.array() == cfg.noise.atoms[k]).cast<double>().sum() / n;
    CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
  }
  CHECK_THROWS_AS(gen_data(0, 3, cfg, 1), InvalidParameter);
}

TEST_CASE("gen_data is deterministic and theta0 follows its sub-seed") {
  const auto cfg = tukey_problem(4.0, 2.73);
  const auto a = gen_data(80, 20, cfg, 11, 5);
  const auto b = gen_data(80, 20, cfg, 11, 5);
  const auto c = gen_data(80, 20, cfg, 12, 5);
  const auto e = gen_data(80, 20, cfg, 11, 6);
  CHECK(a.X == b.X);
  CHECK(a.y == b.y);
  CHECK(a.w == b.w);
  CHECK(a.theta0 == c.theta0);
  CHECK(a.X != c.X);
  CHECK(a.theta0 != e.theta0);
  CHECK(a.X == e.X);
}

TEST_CASE("risk and gradient vanish at theta0 without noise") {
  auto cfg = tukey_problem(4.0, 2.73);
  cfg.noise = point_mass_noise(0.0);
  const auto data = gen_data(120, 30, cfg, 2);
  const auto rg = risk_grad(data.theta0, data, cfg);
  CHECK(rg.risk == 0.0);
  CHECK(rg.grad.norm() == 0.0);
  const auto res = gd_run(data, cfg, GDConfig{}, data.theta0);
  CHECK(res.iterations == 0);
  CHECK(res.final_grad_norm == 0.0);
  CHECK(res.est_error == 0.0);
}

TEST_CASE("quadratic loss reduces to least squares formulas") {
  const auto cfg = quadratic_problem(4.0, 2.73);
  const auto data = gen_data(120, 30, cfg, 8);
  const Eigen::VectorXd theta = random_direction(30, 1);
  const double n = 120.0;
  const Eigen::VectorXd r = data.X * theta - data.y;
  const auto rg = risk_grad(theta, data, cfg);
  CHECK(rg.risk == doctest::Approx(0.5 * r.squaredNorm() / n).epsilon(1e-13));
  CHECK((rg.grad - data.X.transpose() * r / n).norm() <= 1e-13);
  const Eigen::MatrixXd H = hessian(theta, data, cfg);
  CHECK((H - data.X.transpose() * data.X / n).norm() <= 1e-12);
}

TEST_CASE("gradient and Hessian against finite differences") {
  const auto cfg = tukey_problem(4.0, 2.73);
  const int d = 30;
  const auto data = gen_data(rows(4.0, d), d, cfg, 21);
  const double h = 1e-5;
  double worst_g = 0.0, worst_h = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd theta =
        data.theta0 + 0.3 * sphere_point(d, 77, static_cast<std::uint64_t>(k));
    const auto rg = risk_grad(theta, data, cfg);
    Eigen::VectorXd fd(d);
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
      e[j] = h;
      fd[j] = (risk(theta + e, data, cfg) - risk(theta - e, data, cfg)) / (2 * h);
    }
    worst_g = std::max(worst_g, (fd - rg.grad).norm() / rg.grad.norm());

    const Eigen::VectorXd u = sphere_point(d, 78, static_cast<std::uint64_t>(k));
    const Eigen::VectorXd hu_fd =
        (risk_grad(theta + h * u, data, cfg).grad -
         risk_grad(theta - h * u, data, cfg).grad) / (2 * h);
    const Eigen::VectorXd hu = hessian_vec(theta, u, data, cfg);
    worst_h = std::max(worst_h, (hu_fd - hu).norm() / hu.norm());
    CHECK((hessian(theta, data, cfg) * u - hu).norm() <= 1e-12 * hu.norm() + 1e-14);
  }
  CHECK(worst_g <= 1e-6);
  CHECK(worst_h <= 1e-6);
}

TEST_CASE("serial and parallel kernels agree") {
  auto cfg = tukey_problem(8.0, 2.73);
  cfg.lambda = 0.01;
  const int d = 150;
  const auto data = gen_data(rows(8.0, d), d, cfg, 4);
  const Eigen::VectorXd theta = data.theta0 + 0.2 * random_direction(d, 3);
  const auto a = risk_grad(theta, data, cfg, Execution::serial);
  const auto b = risk_grad(theta, data, cfg, Execution::parallel);
  CHECK(a.risk == doctest::Approx(b.risk).epsilon(1e-13));
  CHECK((a.grad - b.grad).norm() <= 1e-13 * a.grad.norm());
  const Eigen::MatrixXd Ha = hessian(theta, data, cfg, Execution::serial);
  const Eigen::MatrixXd Hb = hessian(theta, data, cfg, Execution::parallel);
  CHECK((Ha - Hb).norm() <= 1e-12 * Ha.norm());

  cfg.lambda = 0.0;
  GDConfig gs, gp;
  gp.ex = Execution::parallel;
  const auto rs = gd_run(data, cfg, gs);
  const auto rp = gd_run(data, cfg, gp);
  CHECK((rs.theta_hat - rp.theta_hat).norm() <= 1e-8);
}

TEST_CASE("gradient descent: monotone, deterministic, converged") {
  const auto cfg = tukey_problem(8.0, 2.73);
  const int d = 100;
  const auto data = gen_data(rows(8.0, d), d, cfg, 5);
  GDConfig gd;
  gd.record_risk = true;
  gd.seed = 9;
  const auto a = gd_run(data, cfg, gd);
  const auto b = gd_run(data, cfg, gd);
  CHECK(a.theta_hat == b.theta_hat);
  CHECK(a.risk_history == b.risk_history);
  CHECK(a.iterations == b.iterations);
  CHECK_FALSE(a.stalled);
  CHECK(a.iterations < gd.max_iters);
  CHECK(a.final_grad_norm <= gd.grad_tol);
  CHECK(a.risk_history.size() == static_cast<std::size_t>(a.iterations) + 1);
  bool monotone = true;
  for (std::size_t t = 1; t < a.risk_history.size(); ++t)
    monotone = monotone && a.risk_history[t] <= a.risk_history[t - 1] + 1e-15;
  CHECK(monotone);
  CHECK(a.train_loss == doctest::Approx(risk(a.theta_hat, data, cfg)).epsilon(1e-12));
  CHECK(a.est_error == doctest::Approx((a.theta_hat - data.theta0).norm()));
}

TEST_CASE("backtracking stall is flagged") {
  // One sample, x = 3: the risk curvature is 9, so a unit step overshoots.
  Dataset data;
  data.X = Eigen::MatrixXd::Constant(1, 1, 3.0);
  data.theta0 = Eigen::VectorXd::Constant(1, 1.0);
  data.w = Eigen::VectorXd::Zero(1);
  data.y = data.X * data.theta0;
  const auto cfg = quadratic_problem(2.0, 1.0);
  GDConfig gd;
  gd.backtrack_powers = 0;
  const Eigen::VectorXd init = Eigen::VectorXd::Constant(1, 2.0);
  const auto res = gd_run(data, cfg, gd, init);
  CHECK(res.stalled);
  CHECK(res.iterations == 0);
  CHECK(res.theta_hat[0] == 2.0);

  gd.backtrack_powers = 5;
  const auto ok = gd_run(data, cfg, gd, init);
  CHECK_FALSE(ok.stalled);
  CHECK(ok.final_grad_norm <= gd.grad_tol);

  GDConfig bad;
  bad.grad_tol = 0.0;
  CHECK_THROWS_AS(gd_run(data, cfg, bad, init), InvalidParameter);
  bad = GDConfig{};
  bad.backtrack_base = 1.0;
  CHECK_THROWS_AS(gd_run(data, cfg, bad, init), InvalidParameter);
}

TEST_CASE("least squares by gradient descent") {
  const auto cfg = quadratic_problem(4.0, 2.73);
  const int d = 100, n = 400;
  const double sigma = std::sqrt(cfg.noise.variance());
  const double predicted = sigma * std::sqrt(double(d) / (n - d));
  double mean_err = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto data = gen_data(n, d, cfg, static_cast<std::uint64_t>(seed), 1);
    GDConfig gd;
    gd.seed = static_cast<std::uint64_t>(seed);
    const auto res = gd_run(data, cfg, gd);
    const Eigen::VectorXd ls =
        (data.X.transpose() * data.X).ldlt().solve(data.X.transpose() * data.y);
    CHECK((res.theta_hat - ls).norm() <= 1e-7);
    mean_err += res.est_error / 20.0;
  }
  CHECK(std::abs(mean_err / predicted - 1.0) <= 0.2);
  // Same scale as the state-evolution closed form rho^2 = sigma^2 / (alpha - 1).
  CHECK(std::abs(predicted - sigma / std::sqrt(3.0)) <= 1e-12);
}

TEST_CASE("Hessian spectrum: Marchenko-Pastur edge and flat region") {
  const auto cfg = quadratic_problem(4.0, 2.73);
  const int d = 1000;
  const auto data = gen_data(rows(4.0, d), d, cfg, 31);
  const auto ev = hessian_spectrum(data, cfg, data.theta0);
  CHECK(ev.size() == static_cast<std::size_t>(d));
  CHECK(std::is_sorted(ev.begin(), ev.end()));
  CHECK(std::abs(ev.front() / 0.25 - 1.0) <= 0.1);

  const auto tuk = tukey_problem(4.0, 2.73);
  auto flat = gen_data(80, 20, tuk, 2);
  flat.y.setConstant(100.0);
  for (double e : hessian_spectrum(flat, tuk, flat.theta0)) CHECK(e == 0.0);
}

TEST_CASE("Hessian edge at the GD minimizer") {
  const auto cfg = tukey_problem(8.0, 2.73);
  const auto grid = make_joint_grid(cfg.noise);
  const auto fp = se_solve(cfg, grid);
  const double zeta = spectral_edge(fp.nu_star).zeta_min;
  const int d = 400, trials = 5;
  double mean_min = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto data = gen_data(rows(8.0, d), d, cfg, 500 + t, 9);
    GDConfig gd;
    gd.seed = static_cast<std::uint64_t>(t);
    const auto res = gd_run(data, cfg, gd);
    const auto ev = hessian_spectrum(data, cfg, res.theta_hat);
    const double hnorm = std::max(std::abs(ev.front()), std::abs(ev.back()));
    CHECK(ev.front() >= -1e-8 * hnorm);
    mean_min += ev.front() / trials;
  }
  MESSAGE("zeta_min=" << zeta << " mean smallest eigenvalue=" << mean_min);
  CHECK(std::abs(mean_min / zeta - 1.0) <= 0.15);
}

TEST_CASE("single linkage clustering") {
  std::vector<Eigen::VectorXd> pts;
  const Eigen::VectorXd base = Eigen::VectorXd::Unit(3, 0);
  // 0, 1, 2 chain within 1e-3 steps although 0 and 2 are further apart.
  pts.push_back(base);
  pts.push_back(base + Eigen::VectorXd::Unit(3, 1) * 0.8e-3);
  pts.push_back(base + Eigen::VectorXd::Unit(3, 1) * 1.6e-3);
  pts.push_back(Eigen::VectorXd::Unit(3, 2));
  const auto rep = cluster_solutions(pts);
  CHECK(rep.n_clusters == 2);
  CHECK(rep.labels[0] == rep.labels[2]);
  CHECK(rep.labels[0] != rep.labels[3]);
  CHECK(rep.gram.isApprox(rep.gram.transpose(), 0.0));
  CHECK(rep.gram(0, 3) == 0.0);
  CHECK(rep.max_pair_dist == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("multi-init: identical inits give one cluster") {
  const auto cfg = tukey_problem(2.5, 2.73);
  const int d = 50;
  const auto data = gen_data(rows(2.5, d), d, cfg, 1);
  const Eigen::VectorXd init = sphere_point(d, 4, 0);
  const auto rep = multi_init_experiment(data, cfg, GDConfig{}, {init, init});
  CHECK(rep.n_clusters == 1);
  CHECK(rep.max_pair_dist == 0.0);
  CHECK(rep.runs.size() == 2);
  CHECK_THROWS_AS(multi_init_experiment(data, cfg, GDConfig{}, 1),
                  InvalidParameter);
}

TEST_CASE("multi-init clustering transition") {
  const int d = 200, M = 10, seeds = 10;
  auto count = [&](double alpha, bool single) {
    const auto cfg = tukey_problem(alpha, 2.73);
    int hits = 0;
    for (int s = 0; s < seeds; ++s) {
      const auto data = gen_data(rows(alpha, d), d, cfg, 100 + s, 7);
      GDConfig gd;
      gd.seed = static_cast<std::uint64_t>(s);
      const auto rep = multi_init_experiment(data, cfg, gd, M);
      CHECK(rep.n_clusters >= 1);
      CHECK(rep.n_clusters <= M);
      hits += (rep.n_clusters == 1) == single;
    }
    return hits;
  };
  CHECK(count(8.0, true) >= 9);
  CHECK(count(2.5, false) >= 8);
}
