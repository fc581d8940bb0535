#pragma once

#include <array>
#include <optional>
#include <vector>

#include "landscape/loss.hpp"
#include "landscape/parallel.hpp"
#include "landscape/quadrature.hpp"
#include "landscape/spectral.hpp"

namespace landscape {

struct FixedPointState {
  double rho = 0.5;
  double s = 0.5;
};

// Default start (0.5, 0.5 / L_min), or (0.5, 0.5) when L_min = 0.
FixedPointState default_start(const ProblemConfig& cfg);

struct SeOptions {
  double damping = 0.3;
  double tol = 1e-10;
  int t_max = 1000;
};

struct FixedPointSolution {
  FixedPointState state;
  bool converged = false;
  int iterations = 0;
  double e3 = 0.0;
  bool stable = false;
  bool clipped = false;
  // Stieltjes equation E[l''/(1+s l'')] - 1/(alpha s) and E[l'(v - w) v].
  std::array<double, 2> residuals{0.0, 0.0};
  double g = 0.0;      // E[l'^2]
  double train = 0.0;  // E[l(v - w)], the limiting training loss
  // General solver only: r11 and r10 (r00 is cfg.r00).
  double r11 = 0.0;
  double r10 = 0.0;
  CurvatureMeasure nu_star;
};

// Expectations over z = rho G, w of functions of t = prox_{l0}(z - w; s).
struct SeMoments {
  double g = 0.0;       // E[l'(t)^2]
  double h = 0.0;       // E[l''(t) / (1 + s l''(t))]
  double r2 = 0.0;      // E[(s l'' / (1 + s l''))^2]
  double stein = 0.0;   // E[l'(t) (t + w)]
  double train = 0.0;   // E[l(t)]
};

SeMoments se_moments(double rho, double s, const ProblemConfig& cfg,
                     const JointGrid& grid);

// Law of (v, 0, w) with v = w + prox_{l0}(rho G - w; s), for the adapted loss.
CurvatureMeasure se_pushforward(double rho, double s, const ProblemConfig& cfg,
                                const JointGrid& grid);

FixedPointState se_step(const FixedPointState& state, const ProblemConfig& cfg,
                        const JointGrid& grid);

FixedPointSolution se_solve(const ProblemConfig& cfg, const JointGrid& grid,
                            std::optional<FixedPointState> init = std::nullopt,
                            const SeOptions& opts = {});

// Stable means converged, clip inactive and e3 <= 1 - 1e-8.
bool is_stable(const FixedPointSolution& sol);

struct SweepOptions {
  double alpha_lo = 3.0;
  double alpha_hi = 8.0;
  double bisect_tol = 1e-3;
  bool warm_start = true;
  SeOptions se;
};

double sweep_alpha_tr(double snr, const ProblemConfig& tmpl,
                      const JointGrid& grid, const SweepOptions& opts = {});

struct PhaseBoundary {
  std::vector<double> snr_grid;
  std::vector<std::optional<double>> alpha_tr;
};

// One sweep per SNR; cells without a transition in the bracket are empty.
PhaseBoundary phase_boundary(const std::vector<double>& snr_grid,
                             const ProblemConfig& tmpl, int quad_order,
                             const SweepOptions& opts = {},
                             Execution ex = Execution::parallel);

// Iteration on (s, r11, r10) with r00 fixed, for a trivariate loss and
// ridge weight lambda. Reports rho^2 = r11 - 2 r10 + r00.
FixedPointSolution solve_local_optimality_general(
    const ProblemConfig& cfg, const LossSpec& loss, const JointGrid& grid,
    std::optional<FixedPointState> init = std::nullopt,
    const SeOptions& opts = {});

// Same with loss = m_estimation_adapter(cfg.loss).
FixedPointSolution solve_local_optimality_general(
    const ProblemConfig& cfg, const JointGrid& grid,
    std::optional<FixedPointState> init = std::nullopt,
    const SeOptions& opts = {});

}  // namespace landscape
