#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "landscape/errors.hpp"
#include "landscape/prox.hpp"
#include "landscape/spectral.hpp"
#include "landscape/state_evolution.hpp"

using namespace landscape;

namespace {

CurvatureMeasure constant_curvature(double d2, double alpha) {
  LossSpec l = quadratic_loss();
  l.d2 = [d2](double, double, double) { return d2; };
  return make_curvature_measure({{0.0, 0.0, 0.0, 1.0}}, l, alpha);
}

CurvatureMeasure tukey_nu_star(double alpha) {
  const ProblemConfig cfg = tukey_problem(alpha, 2.73);
  const JointGrid grid = make_joint_grid(cfg.noise);
  return se_solve(cfg, grid).nu_star;
}

}  // namespace

TEST_CASE("g_st examples") {
  const CurvatureMeasure q = constant_curvature(1.0, 4.0);
  CHECK(std::abs(g_st(1.0, q) + 0.25) < 1e-15);
  CHECK(g_st(1e-12, q) > 1e10);
  const CurvatureMeasure flat = constant_curvature(0.0, 3.0);
  for (double s : {0.1, 1.0, 10.0}) CHECK(std::abs(g_st(s, flat) - 1 / (3 * s)) < 1e-15);
  CHECK_THROWS_AS(g_st(0.0, q), InvalidParameter);
  CHECK_THROWS_AS(g_st(-1.0, q), InvalidParameter);
}

TEST_CASE("quadratic loss matches the marchenko-pastur closed forms") {
  for (double alpha : {2.0, 4.0, 9.0, 25.0}) {
    const CurvatureMeasure q = constant_curvature(1.0, alpha);
    const SpectralResult e = spectral_edge(q, 0.0);
    const double ra = std::sqrt(alpha);
    CHECK(std::abs(*e.s_star_at_z - 1 / (alpha - 1)) < 1e-8);
    CHECK(std::abs(e.zeta_min - (1 - 1 / ra) * (1 - 1 / ra)) < 1e-8);
    CHECK(std::abs(e.s_min - 1 / (ra - 1)) < 1e-8);
    CHECK(std::abs(e.s_min / (1 + e.s_min) - 1 / ra) < 1e-8);
    CHECK(std::abs(e.e3 - 1.0) < 1e-8);
    CHECK(std::abs(replicon_e3(1 / (alpha - 1), q) - 1 / alpha) < 1e-12);
    CHECK(!e.boundary);
  }
  const CurvatureMeasure q4 = constant_curvature(1.0, 4.0);
  CHECK(std::abs(replicon_e3(1.0 / 3.0, q4) - 0.25) < 1e-15);
  CHECK(std::abs(solve_s_star(0.0, constant_curvature(1.0, 2.0)) - 1.0) < 1e-10);
  CHECK(replicon_e3(1e-9, q4) < 1e-16);
}

TEST_CASE("flat curvature degenerates") {
  const SpectralResult e = spectral_edge(constant_curvature(0.0, 3.0));
  CHECK(e.zeta_min == 0.0);
  CHECK(std::isinf(e.s_min));
}

TEST_CASE("solve_s_star domain and boundary") {
  const CurvatureMeasure q = constant_curvature(1.0, 4.0);
  CHECK_THROWS_AS(solve_s_star(0.3, q), DomainError);
  const SpectralResult e = spectral_edge(q);
  CHECK(std::abs(solve_s_star(e.zeta_min, q) - e.s_min) < 1e-8);
  const double s = solve_s_star(-0.7, q);
  CHECK(std::abs(g_st(s, q) - 0.7) < 1e-10);
}

TEST_CASE("tukey edge: uniqueness certificate and criticality") {
  for (double alpha : {5.0, 8.0}) {
    const CurvatureMeasure m = tukey_nu_star(alpha);
    CHECK(m.L0 > 0.0);
    CHECK(std::abs(m.L0 - 0.8) < 0.05);
    double prev = -kInf;
    const int n = 2000;
    for (int i = 1; i <= n; ++i) {
      const double s = (1 / m.L0) * i / n * (1 - 1e-9);
      const double v = g_st_slope(s, m);
      CHECK(v > prev);
      prev = v;
    }
    const SpectralResult e = spectral_edge(m);
    CHECK(std::abs(e.e3 - 1.0) <= 1e-6);
    CHECK(std::abs(e.zeta_min + g_st(e.s_min, m)) < 1e-12);
    for (double z : {0.0, -0.3, e.zeta_min * 0.5}) {
      const double s = solve_s_star(z, m);
      CHECK(std::abs(g_st(s, m) + z) <= 1e-10);
      CHECK(g_st_slope(s, m) <= 1e-10);
    }
  }
}

TEST_CASE("k_st variational characterization") {
  for (double alpha : {4.0, 8.0}) {
    const CurvatureMeasure ms[] = {constant_curvature(1.0, alpha), tukey_nu_star(alpha)};
    for (const CurvatureMeasure& m : ms) {
      for (double z : {0.0, -0.4}) {
        const double s = solve_s_star(z, m);
        const double h = 1e-6 * s;
        const double dk = (k_st(s + h, z, m) - k_st(s - h, z, m)) / (2 * h);
        CHECK(std::abs(dk) < 1e-8 / s + 1e-7);
        // Grid minimization over {s : E[r^2] <= 1/alpha} = (0, s_min].
        const double smin = spectral_edge(m).s_min;
        double best = kInf, arg = 0;
        const int n = 20000;
        for (int i = 1; i <= n; ++i) {
          const double t = smin * i / n;
          const double v = k_st(t, z, m);
          if (v < best) best = v, arg = t;
        }
        // Golden refinement around the best grid point.
        double a = std::max(1e-12, arg - smin / n), b = std::min(smin, arg + smin / n);
        const double gr = (std::sqrt(5.0) - 1) / 2;
        for (int it = 0; it < 100; ++it) {
          const double c = b - gr * (b - a), d = a + gr * (b - a);
          if (k_st(c, z, m) < k_st(d, z, m)) b = d; else a = c;
        }
        best = std::min(best, k_st(0.5 * (a + b), z, m));
        CHECK(std::abs(best - k_st(s, z, m)) < 1e-8);
      }
    }
  }
  const CurvatureMeasure q = constant_curvature(1.0, 4.0);
  // Closed-form log-potential of the MP law at z = 0.
  CHECK(std::abs(k_st(1.0 / 3.0, 0.0, q) - (-1 - 3 * std::log(0.75))) < 1e-12);
}

TEST_CASE("k_st matches the mean log-eigenvalue of a Wishart matrix") {
  const int d = 2000, n = 4 * d, draws = 20;
  const CurvatureMeasure q = constant_curvature(1.0, 4.0);
  const double target = k_st(solve_s_star(0.0, q), 0.0, q);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  double mean = 0;
  for (int k = 0; k < draws; ++k) {
    Eigen::MatrixXd X(n, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < n; ++i) X(i, j) = nd(rng);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
    S.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / n);
    Eigen::LLT<Eigen::MatrixXd> llt(S.selfadjointView<Eigen::Lower>());
    REQUIRE(llt.info() == Eigen::Success);
    mean += 2 * llt.matrixLLT().diagonal().array().log().sum() / d;
  }
  mean /= draws;
  CHECK(std::abs(mean - target) < 2e-2);
}

TEST_CASE("empirical spectrum edge matches zeta_min") {
  const double alpha = 8.0;
  const ProblemConfig cfg = tukey_problem(alpha, 2.73);
  const JointGrid grid = make_joint_grid(cfg.noise);
  const FixedPointSolution sol = se_solve(cfg, grid);
  const double zeta = spectral_edge(sol.nu_star).zeta_min;
  const int d = 500, n = static_cast<int>(alpha * d);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  std::discrete_distribution<int> pick(cfg.noise.probs.begin(), cfg.noise.probs.end());
  // Bulk edge per draw: fit lambda_k = a + b (k - 1/2)^{2/3} to the 20
  // smallest eigenvalues (square-root law at a soft edge) and keep a.
  double mean_min = 0, mean_edge = 0;
  for (int k = 0; k < 10; ++k) {
    Eigen::MatrixXd X(n, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < n; ++i) X(i, j) = nd(rng);
    Eigen::VectorXd D(n);
    for (int i = 0; i < n; ++i) {
      const double w = cfg.noise.atoms[pick(rng)];
      const double t = prox(sol.state.rho * nd(rng) - w, sol.state.s, cfg.loss).value;
      D(i) = cfg.loss.d2(t, 0, 0);
    }
    const Eigen::MatrixXd H = X.transpose() * D.asDiagonal() * X / n;
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly).eigenvalues();
    const int K = 20;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 1; j <= K; ++j) {
      const double x = std::pow(j - 0.5, 2.0 / 3.0), y = ev(j - 1);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double b = (K * sxy - sx * sy) / (K * sxx - sx * sx);
    mean_edge += (sy - b * sx) / K;
    mean_min += ev(0);
  }
  mean_min /= 10;
  mean_edge /= 10;
  MESSAGE("zeta_min=" << zeta << " bulk edge=" << mean_edge << " smallest eigenvalue=" << mean_min);
  CHECK(std::abs(mean_edge - zeta) <= 0.1 * zeta);
}
