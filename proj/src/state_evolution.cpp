#include "landscape/state_evolution.hpp"

#include <cmath>

#include "landscape/errors.hpp"
#include "landscape/prox.hpp"

namespace landscape {

namespace {

double clip_step(double denom, const LossSpec& loss) {
  const double cap = loss.max_step();
  if (!(denom > 0.0)) return cap;
  return std::min(1.0 / denom, cap);
}

void require_m_estimation(const ProblemConfig& cfg) {
  if (cfg.lambda != 0.0)
    throw InvalidParameter("scalar state evolution needs lambda = 0; use the general solver");
}

}  // namespace

FixedPointState default_start(const ProblemConfig& cfg) {
  const double cap = cfg.loss.max_step();
  return {0.5, std::isfinite(cap) ? 0.5 * cap : 0.5};
}

SeMoments se_moments(double rho, double s, const ProblemConfig& cfg,
                     const JointGrid& grid) {
  const LossSpec& l = cfg.loss;
  SeMoments m;
  for (std::size_t j = 0; j < grid.noise.size(); ++j) {
    const double w = grid.noise.atoms[j], p = grid.noise.probs[j];
    // t = v - w is the residual; y = rho G - w.
    const Rule r = prox_pushforward_rule(-w, rho, s, l, 0.0, 0.0, grid.legendre);
    SeMoments a;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double t = r.nodes[i];
      const double d1 = l.d1(t, 0.0, 0.0);
      const double d2 = l.d2(t, 0.0, 0.0);
      const double den = 1.0 + s * d2;
      const double q = r.weights[i];
      a.g += q * d1 * d1;
      if (den > 0.0) {
        a.h += q * d2 / den;
        a.r2 += q * (s * d2 / den) * (s * d2 / den);
      } else if (q > 0.0) {
        a.h = -kInf;
        a.r2 = kInf;
      }
      a.stein += q * d1 * (t + w);
      a.train += q * l.eval(t, 0.0, 0.0);
    }
    m.g += p * a.g;
    m.h += p * a.h;
    m.r2 += p * a.r2;
    m.stein += p * a.stein;
    m.train += p * a.train;
  }
  return m;
}

CurvatureMeasure se_pushforward(double rho, double s, const ProblemConfig& cfg,
                                const JointGrid& grid) {
  const LossSpec& l = cfg.loss;
  std::vector<CurvatureMeasure::Sample> samples;
  for (std::size_t j = 0; j < grid.noise.size(); ++j) {
    const double w = grid.noise.atoms[j], p = grid.noise.probs[j];
    const Rule r = prox_pushforward_rule(-w, rho, s, l, 0.0, 0.0, grid.legendre);
    for (std::size_t i = 0; i < r.size(); ++i)
      samples.push_back({r.nodes[i] + w, 0.0, w, p * r.weights[i]});
  }
  return make_curvature_measure(std::move(samples), m_estimation_adapter(l),
                                cfg.alpha);
}

FixedPointState se_step(const FixedPointState& x, const ProblemConfig& cfg,
                        const JointGrid& grid) {
  require_m_estimation(cfg);
  const SeMoments m = se_moments(x.rho, x.s, cfg, grid);
  FixedPointState next;
  next.rho = std::sqrt(cfg.alpha * x.s * x.s * m.g);
  next.s = clip_step(cfg.alpha * m.h, cfg.loss);
  return next;
}

bool is_stable(const FixedPointSolution& sol) {
  return sol.converged && !sol.clipped && sol.e3 <= 1.0 - 1e-8;
}

FixedPointSolution se_solve(const ProblemConfig& cfg, const JointGrid& grid,
                            std::optional<FixedPointState> init,
                            const SeOptions& opts) {
  validate(cfg);
  require_m_estimation(cfg);
  if (!(opts.damping >= 0.0 && opts.damping < 1.0))
    throw InvalidParameter("se_solve: damping must lie in [0, 1)");
  if (!(opts.tol > 0.0)) throw InvalidParameter("se_solve: tol must be positive");
  FixedPointSolution sol;
  FixedPointState x = init.value_or(default_start(cfg));
  const double cap = cfg.loss.max_step();
  x.s = std::min(x.s, cap);
  try {
    for (int t = 0; t < opts.t_max; ++t) {
      const FixedPointState y = se_step(x, cfg, grid);
      FixedPointState z;
      z.rho = (1.0 - opts.damping) * y.rho + opts.damping * x.rho;
      z.s = (1.0 - opts.damping) * y.s + opts.damping * x.s;
      const double diff = std::abs(z.rho - x.rho) + std::abs(z.s - x.s);
      x = z;
      sol.iterations = t + 1;
      if (!std::isfinite(diff)) break;
      if (diff < opts.tol) {
        sol.converged = true;
        break;
      }
    }
  } catch (const NumericError&) {
    sol.converged = false;
  }
  sol.state = x;
  sol.clipped = std::isfinite(cap) && x.s >= cap * (1.0 - 1e-12);
  if (!(x.rho >= 0.0) || !std::isfinite(x.rho)) return sol;
  const SeMoments m = se_moments(x.rho, x.s, cfg, grid);
  sol.g = m.g;
  sol.train = m.train;
  sol.residuals = {m.h - 1.0 / (cfg.alpha * x.s), m.stein};
  sol.e3 = cfg.alpha * m.r2;
  sol.nu_star = se_pushforward(x.rho, x.s, cfg, grid);
  sol.stable = is_stable(sol);
  return sol;
}

double sweep_alpha_tr(double snr, const ProblemConfig& tmpl,
                      const JointGrid& grid, const SweepOptions& opts) {
  if (!(opts.alpha_lo < opts.alpha_hi) || !(opts.alpha_lo > 1.0))
    throw InvalidParameter("sweep_alpha_tr: need 1 < alpha_lo < alpha_hi");
  ProblemConfig cfg = tmpl;
  cfg.snr = snr;
  cfg.noise = contaminated_noise(snr, cfg.r00);
  JointGrid g = grid;
  g.noise = cfg.noise;
  auto solve = [&](double alpha, std::optional<FixedPointState> init) {
    cfg.alpha = alpha;
    return se_solve(cfg, g, init, opts.se);
  };
  const FixedPointSolution hi_sol = solve(opts.alpha_hi, std::nullopt);
  const FixedPointSolution lo_sol = solve(opts.alpha_lo, std::nullopt);
  if (hi_sol.stable == lo_sol.stable)
    throw BracketError("sweep_alpha_tr: stability does not change on the bracket");
  // Orient so that `stable_a` is the stable end.
  double stable_a = hi_sol.stable ? opts.alpha_hi : opts.alpha_lo;
  double unstable_a = hi_sol.stable ? opts.alpha_lo : opts.alpha_hi;
  FixedPointState warm = hi_sol.stable ? hi_sol.state : lo_sol.state;
  while (std::abs(stable_a - unstable_a) > opts.bisect_tol) {
    const double mid = 0.5 * (stable_a + unstable_a);
    const FixedPointSolution sol =
        solve(mid, opts.warm_start ? std::optional(warm) : std::nullopt);
    if (sol.stable) {
      stable_a = mid;
      warm = sol.state;
    } else {
      unstable_a = mid;
    }
  }
  return 0.5 * (stable_a + unstable_a);
}

PhaseBoundary phase_boundary(const std::vector<double>& snr_grid,
                             const ProblemConfig& tmpl, int quad_order,
                             const SweepOptions& opts, Execution ex) {
  PhaseBoundary pb;
  pb.snr_grid = snr_grid;
  pb.alpha_tr.assign(snr_grid.size(), std::nullopt);
  for_each_index(snr_grid.size(), ex, [&](std::size_t i) {
    const JointGrid grid =
        make_joint_grid(contaminated_noise(snr_grid[i], tmpl.r00), quad_order);
    try {
      pb.alpha_tr[i] = sweep_alpha_tr(snr_grid[i], tmpl, grid, opts);
    } catch (const BracketError&) {
      pb.alpha_tr[i] = std::nullopt;
    }
  });
  return pb;
}

namespace {

struct GeneralMoments {
  double g = 0.0;     // E[l'^2]
  double h = 0.0;     // E[l''/(1 + s l'')]
  double r2 = 0.0;    // E[(s l''/(1 + s l''))^2]
  double vg0 = 0.0;   // E[v g0]
  double vl1 = 0.0;   // E[v l']
  double train = 0.0; // E[l]
};

// (g, g0) ~ N(0, R) with g | g0 ~ N(c g0, S), c = r10 / r00.
template <class Visit>
void general_nodes(double S, double c, double s, const ProblemConfig& cfg,
                   const LossSpec& loss, const JointGrid& grid, Visit&& visit) {
  const double sd0 = std::sqrt(cfg.r00);
  const auto& outer = grid.gauss2d;
  for (std::size_t j = 0; j < grid.noise.size(); ++j) {
    const double w = grid.noise.atoms[j], p = grid.noise.probs[j];
    for (int k = 0; k < outer.order; ++k) {
      const double g0 = sd0 * outer.nodes[k];
      const double q0 = p * outer.weights[k];
      const Rule r = prox_pushforward_rule(c * g0, std::sqrt(S), s, loss, g0,
                                           w, grid.legendre);
      for (std::size_t i = 0; i < r.size(); ++i)
        visit(r.nodes[i], g0, w, q0 * r.weights[i]);
    }
  }
}

GeneralMoments general_moments(double S, double c, double s,
                               const ProblemConfig& cfg, const LossSpec& loss,
                               const JointGrid& grid) {
  GeneralMoments m;
  general_nodes(S, c, s, cfg, loss, grid,
                [&](double v, double g0, double w, double q) {
                  const double d1 = loss.d1(v, g0, w);
                  const double d2 = loss.d2(v, g0, w);
                  const double den = 1.0 + s * d2;
                  m.g += q * d1 * d1;
                  if (den > 0.0) {
                    m.h += q * d2 / den;
                    m.r2 += q * (s * d2 / den) * (s * d2 / den);
                  } else if (q > 0.0) {
                    m.h = -kInf;
                    m.r2 = kInf;
                  }
                  m.vg0 += q * v * g0;
                  m.vl1 += q * v * d1;
                  m.train += q * loss.eval(v, g0, w);
                });
  return m;
}

}  // namespace

FixedPointSolution solve_local_optimality_general(
    const ProblemConfig& cfg, const LossSpec& loss, const JointGrid& grid,
    std::optional<FixedPointState> init, const SeOptions& opts) {
  validate(cfg);
  if (!(opts.damping >= 0.0 && opts.damping < 1.0))
    throw InvalidParameter("damping must lie in [0, 1)");
  const FixedPointState x0 = init.value_or(default_start(cfg));
  const double cap = loss.max_step();
  const double lam = cfg.lambda, alpha = cfg.alpha, r00 = cfg.r00;
  // Unknowns: schur = sqrt(S), r10, s.
  double schur = x0.rho, r10 = r00, s = std::min(x0.s, cap);
  FixedPointSolution sol;
  try {
    for (int t = 0; t < opts.t_max; ++t) {
      const GeneralMoments m =
          general_moments(schur * schur, r10 / r00, s, cfg, loss, grid);
      const double schur_n = std::sqrt(alpha * s * s * m.g);
      const double s_n = clip_step(alpha * (m.h + lam), loss);
      const double r10_n = m.vg0 / (1.0 + lam * s);
      const double d = opts.damping;
      const double a = (1 - d) * schur_n + d * schur;
      const double b = (1 - d) * r10_n + d * r10;
      const double c = (1 - d) * s_n + d * s;
      const double diff =
          std::abs(a - schur) + std::abs(b - r10) + std::abs(c - s);
      schur = a;
      r10 = b;
      s = c;
      sol.iterations = t + 1;
      if (!std::isfinite(diff)) break;
      if (diff < opts.tol) {
        sol.converged = true;
        break;
      }
    }
  } catch (const NumericError&) {
    sol.converged = false;
  }
  const double S = schur * schur;
  sol.r10 = r10;
  sol.r11 = S + r10 * r10 / r00;
  sol.state.rho = std::sqrt(std::max(0.0, sol.r11 - 2.0 * r10 + r00));
  sol.state.s = s;
  sol.clipped = std::isfinite(cap) && s >= cap * (1.0 - 1e-12);
  if (!std::isfinite(S)) return sol;
  const GeneralMoments m = general_moments(S, r10 / r00, s, cfg, loss, grid);
  sol.g = m.g;
  sol.train = m.train;
  // Stieltjes condition and stationarity E[v l'] + lambda r11 = 0.
  sol.residuals = {m.h + lam - 1.0 / (alpha * s), m.vl1 + lam * sol.r11};
  sol.e3 = alpha * m.r2;
  std::vector<CurvatureMeasure::Sample> samples;
  general_nodes(S, r10 / r00, s, cfg, loss, grid,
                [&](double v, double g0, double w, double q) {
                  samples.push_back({v, g0, w, q});
                });
  sol.nu_star = make_curvature_measure(std::move(samples), loss, alpha);
  sol.stable = is_stable(sol);
  return sol;
}

FixedPointSolution solve_local_optimality_general(
    const ProblemConfig& cfg, const JointGrid& grid,
    std::optional<FixedPointState> init, const SeOptions& opts) {
  return solve_local_optimality_general(cfg, m_estimation_adapter(cfg.loss),
                                        grid, init, opts);
}

}  // namespace landscape
