#include <doctest.h>

#include <cmath>
#include <random>

#include "landscape/errors.hpp"
#include "landscape/spectral.hpp"
#include "landscape/state_evolution.hpp"

using namespace landscape;

namespace {

ProblemConfig quadratic_problem(double alpha, double sigma2, double lambda = 0.0) {
  ProblemConfig cfg;
  cfg.alpha = alpha;
  cfg.r00 = 1.0;
  cfg.lambda = lambda;
  cfg.loss = quadratic_loss();
  const double a = std::sqrt(sigma2);
  cfg.noise = make_noise({-a, a}, {0.5, 0.5});
  cfg.snr = cfg.r00 / sigma2;
  return cfg;
}

// Ridge oracle: theta = (X'X/n + lambda)^{-1} X'y/n with rows x ~ N(0, I_d),
// ||theta0||^2 = r00. m(z) is the Stieltjes transform of the MP law with
// ratio c = 1/alpha.
struct RidgeOracle {
  double s, r10, err2;
};

RidgeOracle ridge_oracle(double alpha, double lambda, double r00, double sigma2) {
  const double c = 1.0 / alpha, z = -lambda;
  auto m = [&](double x) {
    return (1 - c - x - std::sqrt((x - 1 - c) * (x - 1 - c) - 4 * c)) / (2 * c * x);
  };
  auto dmdx = [&](double x) {
    const double root = std::sqrt((x - 1 - c) * (x - 1 - c) - 4 * c);
    const double num = 1 - c - x - root;
    const double dnum = -1 - (x - 1 - c) / root;
    return (dnum * x - num) / (2 * c * x * x);
  };
  const double mz = m(z);
  const double dm = dmdx(z);
  RidgeOracle o;
  o.s = mz / alpha;
  o.r10 = r00 * (1 - lambda * mz);
  o.err2 = lambda * lambda * r00 * dm + sigma2 / alpha * (mz - lambda * dm);
  return o;
}

}  // namespace

TEST_CASE("ridge oracle self-check") {
  // lambda -> 0 recovers least squares.
  const RidgeOracle o = ridge_oracle(4.0, 1e-5, 1.0, 1.0);
  CHECK(std::abs(o.s - 1.0 / 3.0) < 1e-4);
  CHECK(std::abs(o.err2 - 1.0 / 3.0) < 1e-4);
  CHECK(std::abs(o.r10 - 1.0) < 1e-4);
}

TEST_CASE("quadratic loss closed forms") {
  for (double alpha : {2.0, 4.0, 9.0, 25.0}) {
    for (double sigma2 : {1.0, 0.3}) {
      const ProblemConfig cfg = quadratic_problem(alpha, sigma2);
      const JointGrid grid = make_joint_grid(cfg.noise);
      const FixedPointSolution sol = se_solve(cfg, grid);
      REQUIRE(sol.converged);
      CHECK(std::abs(sol.state.s - 1 / (alpha - 1)) < 1e-8);
      CHECK(std::abs(sol.state.rho * sol.state.rho - sigma2 / (alpha - 1)) < 1e-8);
      CHECK(std::abs(sol.e3 - 1 / alpha) < 1e-8);
      CHECK(sol.stable);
    }
  }
  const ProblemConfig cfg = quadratic_problem(4.0, 1.0);
  const FixedPointSolution sol = se_solve(cfg, make_joint_grid(cfg.noise));
  CHECK(std::abs(sol.state.rho - 1 / std::sqrt(3.0)) < 1e-8);
  CHECK(std::abs(sol.state.s - 1.0 / 3.0) < 1e-8);
  CHECK(std::abs(sol.e3 - 0.25) < 1e-8);
}

TEST_CASE("se_step stays finite in the flat tukey region") {
  const ProblemConfig cfg = tukey_problem(8.0, 2.73);
  const JointGrid grid = make_joint_grid(cfg.noise);
  const FixedPointState x = se_step({50.0, 0.5}, cfg, grid);
  CHECK(std::isfinite(x.rho));
  CHECK(std::isfinite(x.s));
  CHECK(x.rho > 0.0);
  CHECK(x.rho < 0.5 * std::sqrt(8.0) * cfg.loss.d1_sup);
}

TEST_CASE("tukey at alpha 8: start independence") {
  const ProblemConfig cfg = tukey_problem(8.0, 2.73);
  const JointGrid grid = make_joint_grid(cfg.noise);
  const FixedPointSolution a = se_solve(cfg, grid, FixedPointState{0.5, 0.5});
  const FixedPointSolution b = se_solve(cfg, grid, FixedPointState{0.1, 0.1});
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(a.stable);
  CHECK(std::abs(a.state.rho - b.state.rho) < 1e-6);
  CHECK(std::abs(a.state.s - b.state.s) < 1e-6);
}

TEST_CASE("tukey stability classification") {
  const ProblemConfig lo = tukey_problem(4.0, 2.73);
  const FixedPointSolution u = se_solve(lo, make_joint_grid(lo.noise));
  CHECK_FALSE(u.stable);
  const ProblemConfig hi = tukey_problem(5.5, 2.73);
  const FixedPointSolution v = se_solve(hi, make_joint_grid(hi.noise));
  CHECK(v.stable);
  CHECK(v.e3 < 1.0);
  CHECK(v.e3 > 0.5);
}

TEST_CASE("fixed point invariants on a grid of alpha") {
  const SeOptions opts;
  double prev_zeta = kInf;
  for (double alpha : {12.0, 10.0, 8.0, 7.0, 6.0, 5.5, 5.2, 5.0, 4.8, 4.6}) {
    const ProblemConfig cfg = tukey_problem(alpha, 2.73);
    const JointGrid grid = make_joint_grid(cfg.noise);
    const FixedPointSolution sol = se_solve(cfg, grid);
    REQUIRE(sol.converged);
    REQUIRE(sol.stable);
    CHECK(std::abs(sol.residuals[0]) <= 10 * opts.tol);
    CHECK(std::abs(sol.residuals[1]) <= 10 * opts.tol);
    CHECK(std::abs(sol.residuals[1]) <= 1e-6);
    CHECK(std::abs(sol.e3 - replicon_e3(sol.state.s, sol.nu_star)) < 1e-9);
    const double zeta = spectral_edge(sol.nu_star).zeta_min;
    CHECK(zeta >= -1e-6);
    CHECK(zeta < prev_zeta);
    prev_zeta = zeta;
  }
}

TEST_CASE("start independence above threshold") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ur(0.05, 2.0), us(0.05, 1.2);
  for (double alpha : {5.2, 6.0, 8.0}) {
    const ProblemConfig cfg = tukey_problem(alpha, 2.73);
    const JointGrid grid = make_joint_grid(cfg.noise);
    const FixedPointSolution ref = se_solve(cfg, grid);
    for (int k = 0; k < 5; ++k) {
      const FixedPointSolution sol =
          se_solve(cfg, grid, FixedPointState{ur(rng), us(rng)});
      REQUIRE(sol.converged);
      CHECK(std::abs(sol.state.rho - ref.state.rho) < 1e-5);
      CHECK(std::abs(sol.state.s - ref.state.s) < 1e-5);
    }
  }
}

TEST_CASE("se_solve input validation") {
  const ProblemConfig cfg = tukey_problem(6.0, 2.73);
  const JointGrid grid = make_joint_grid(cfg.noise);
  SeOptions bad;
  bad.damping = 1.0;
  CHECK_THROWS_AS(se_solve(cfg, grid, std::nullopt, bad), InvalidParameter);
  ProblemConfig ridge = cfg;
  ridge.lambda = 0.1;
  CHECK_THROWS_AS(se_solve(ridge, grid), InvalidParameter);
}

TEST_CASE("undamped iteration is available") {
  const ProblemConfig cfg = quadratic_problem(4.0, 1.0);
  SeOptions o;
  o.damping = 0.0;
  const FixedPointSolution sol = se_solve(cfg, make_joint_grid(cfg.noise), std::nullopt, o);
  CHECK(sol.converged);
  CHECK(std::abs(sol.state.s - 1.0 / 3.0) < 1e-8);
}

TEST_CASE("alpha_tr sweep") {
  const ProblemConfig cfg = tukey_problem(5.0, 2.73);
  const JointGrid grid = make_joint_grid(cfg.noise);
  SweepOptions o;
  o.alpha_lo = 3.0;
  o.alpha_hi = 8.0;
  o.bisect_tol = 1e-3;
  const double a = sweep_alpha_tr(2.73, cfg, grid, o);
  MESSAGE("alpha_tr(2.73) = " << a);
  CHECK(a > o.alpha_lo);
  CHECK(a < o.alpha_hi);
  // The classifier flips across the returned value.
  ProblemConfig c = cfg;
  c.alpha = a + 2e-3;
  CHECK(se_solve(c, grid).stable);
  c.alpha = a - 2e-3;
  CHECK_FALSE(se_solve(c, grid).stable);
  // Without warm starts the bracket is the same.
  o.warm_start = false;
  CHECK(std::abs(sweep_alpha_tr(2.73, cfg, grid, o) - a) <= 2e-3);
}

TEST_CASE("quadratic loss has no transition") {
  const ProblemConfig cfg = quadratic_problem(4.0, 1.0);
  const JointGrid grid = make_joint_grid(cfg.noise);
  SweepOptions o;
  o.alpha_lo = 1.2;
  o.alpha_hi = 20.0;
  // The sweep rebuilds the contaminated noise family; the classifier is
  // stable at both ends for the quadratic loss.
  CHECK_THROWS_AS(sweep_alpha_tr(1.0, cfg, grid, o), BracketError);
}

TEST_CASE("phase boundary is non-increasing in snr") {
  ProblemConfig tmpl = tukey_problem(5.0, 2.73);
  SweepOptions o;
  o.alpha_lo = 2.0;
  o.alpha_hi = 12.0;
  o.bisect_tol = 1e-2;
  const std::vector<double> snrs = {2.2, 2.5, 2.73, 3.0, 4.0};
  const PhaseBoundary serial = phase_boundary(snrs, tmpl, 200, o, Execution::serial);
  const PhaseBoundary par = phase_boundary(snrs, tmpl, 200, o, Execution::parallel);
  double prev = kInf;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    REQUIRE(serial.alpha_tr[i].has_value());
    REQUIRE(par.alpha_tr[i].has_value());
    CHECK(*serial.alpha_tr[i] == *par.alpha_tr[i]);
    CHECK(*serial.alpha_tr[i] <= prev + o.bisect_tol);
    prev = *serial.alpha_tr[i];
  }
}

TEST_CASE("general solver reduces to the scalar recursion") {
  for (double alpha : {6.0, 8.0}) {
    const ProblemConfig cfg = tukey_problem(alpha, 2.73);
    const JointGrid grid = make_joint_grid(cfg.noise, 200, 40);
    SeOptions o;
    o.tol = 1e-12;
    o.t_max = 5000;
    const FixedPointSolution a = se_solve(cfg, grid, std::nullopt, o);
    const FixedPointSolution b = solve_local_optimality_general(cfg, grid, std::nullopt, o);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK(std::abs(a.state.rho - b.state.rho) < 1e-8);
    CHECK(std::abs(a.state.s - b.state.s) < 1e-8);
    CHECK(std::abs(b.r10 - cfg.r00) < 1e-8);
    CHECK(std::abs(a.e3 - b.e3) < 1e-8);
    CHECK(std::abs(b.residuals[1]) < 1e-8);
  }
  const ProblemConfig q = quadratic_problem(4.0, 1.0);
  const FixedPointSolution g = solve_local_optimality_general(q, make_joint_grid(q.noise));
  CHECK(std::abs(g.state.s - 1.0 / 3.0) < 1e-8);
  CHECK(std::abs(g.state.rho * g.state.rho - 1.0 / 3.0) < 1e-8);
}

TEST_CASE("ridge fixed point matches the oracle") {
  for (double alpha : {1.5, 3.0, 6.0}) {
    for (double lambda : {0.05, 0.3, 1.0}) {
      const double sigma2 = 0.5;
      const ProblemConfig cfg = quadratic_problem(alpha, sigma2, lambda);
      const JointGrid grid = make_joint_grid(cfg.noise);
      SeOptions o;
      o.tol = 1e-12;
      o.t_max = 5000;
      const FixedPointSolution sol =
          solve_local_optimality_general(cfg, grid, std::nullopt, o);
      const RidgeOracle ref = ridge_oracle(alpha, lambda, cfg.r00, sigma2);
      REQUIRE(sol.converged);
      CHECK(std::abs(sol.state.s - ref.s) < 1e-8);
      CHECK(std::abs(sol.r10 - ref.r10) < 1e-8);
      CHECK(std::abs(sol.state.rho * sol.state.rho - ref.err2) < 1e-6);
      CHECK(std::abs(sol.residuals[0]) < 1e-9);
      CHECK(std::abs(sol.residuals[1]) < 1e-8);
    }
  }
}
