#include "landscape/rate_function.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <numeric>

#include "landscape/errors.hpp"
#include "landscape/prox.hpp"
#include "landscape/state_evolution.hpp"

namespace landscape {

namespace {

using Vec6 = Eigen::Matrix<double, XTable::kFeatures, 1>;
using Mat6 = Eigen::Matrix<double, XTable::kFeatures, XTable::kFeatures>;

constexpr int kGamma = 0, kBeta1 = 1, kBeta0 = 2, kEta = 3, kXi = 4, kZeta = 5;
constexpr double kBig = 1e30;
constexpr double kHalfWidth = 12.0;
constexpr double kDiverged = 1e7;

struct Node {
  double v, v0, weight;
};

// Rule in v for N(mean, sd^2) split at the kinks, graded towards the points
// where 1 + s l'' is smallest, and truncated to 1 + s l'' > 0.
void conditional_nodes(double mean, double sd, double s, const LossSpec& loss,
                       double v0, double w, double outer_weight,
                       const QuadratureGrid& legendre, std::vector<Node>& out) {
  const double a = mean - kHalfWidth * sd, b = mean + kHalfWidth * sd;
  std::vector<double> breaks = loss.kinks_at(v0, w);
  std::vector<double> peaks;
  if (loss.curvature_min > 0.0) {
    peaks = loss.level_set_at(-loss.curvature_min, v0, w);
    if (s * loss.curvature_min > 1.0) {
      auto edge = loss.level_set_at(-1.0 / s, v0, w);
      peaks.insert(peaks.end(), edge.begin(), edge.end());
    }
  }
  breaks.insert(breaks.end(), peaks.begin(), peaks.end());
  std::vector<double> inside;
  for (double x : breaks)
    if (x > a && x < b) inside.push_back(x);
  std::sort(inside.begin(), inside.end());
  double width = sd;
  for (std::size_t i = 1; i < inside.size(); ++i) {
    const double gap = inside[i] - inside[i - 1];
    if (gap > 0.0) width = std::min(width, 0.5 * gap);
  }
  const double eps = 1.0 - s * loss.curvature_min;
  if (!peaks.empty() && eps < 0.5) {
    const double floor =
        std::max(1e-9, 0.125 * std::sqrt(std::max(eps, 0.0))) * width;
    for (double c : peaks) {
      if (c <= a || c >= b) continue;
      for (double h = 0.5 * width; h >= floor; h *= 0.5) {
        inside.push_back(c - h);
        inside.push_back(c + h);
      }
    }
  }
  // Narrow panels only between the outermost breakpoints; the tails are
  // smooth on the Gaussian scale.
  std::vector<Rule> parts;
  if (inside.empty()) {
    parts.push_back(interval_rule(a, b, {}, sd, legendre));
  } else {
    const auto [lo_it, hi_it] = std::minmax_element(inside.begin(), inside.end());
    const double lo = std::max(a, *lo_it), hi = std::min(b, *hi_it);
    if (a < lo) parts.push_back(interval_rule(a, lo, {}, sd, legendre));
    if (lo < hi)
      parts.push_back(interval_rule(lo, hi, std::move(inside), width, legendre));
    if (hi < b) parts.push_back(interval_rule(hi, b, {}, sd, legendre));
  }
  const double var = sd * sd;
  for (const Rule& r : parts) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double wt = r.weights[i] * normal_pdf(r.nodes[i] - mean, var);
      if (wt > 0.0) out.push_back({r.nodes[i], v0, outer_weight * wt});
    }
  }
}

double schur_of(const Eigen::Matrix2d& R) {
  return R(0, 0) - R(0, 1) * R(1, 0) / R(1, 1);
}

Vec6 natural_start(double s, double schur, double cond_coef, bool two_d) {
  Vec6 x = Vec6::Zero();
  x(kGamma) = -s * s / (2.0 * schur);
  x(kBeta1) = -s / schur;
  if (two_d) x(kBeta0) = s * cond_coef / schur;
  return x;
}

Vec6 targets_vector(const DualTargets& t) {
  Vec6 c;
  c << t.g, -t.lambda * t.r11, -t.lambda * t.r10, t.L, 1.0 / t.alpha,
      -1.0 / t.alpha;
  return c;
}

}  // namespace

Vec6 to_vector(const RateMultipliers& m) {
  Vec6 x;
  x << m.gamma, m.beta[0], m.beta[1], m.eta, m.xi, m.zeta;
  return x;
}

RateMultipliers to_multipliers(const Vec6& x) {
  RateMultipliers m;
  m.gamma = x(kGamma);
  m.beta = {x(kBeta1), x(kBeta0)};
  m.eta = x(kEta);
  m.xi = x(kXi);
  m.zeta = x(kZeta);
  return m;
}

XTable XTable::scalar(double s, double rho, const ProblemConfig& cfg,
                      const JointGrid& grid, const PsiFn& psi) {
  if (!(s > 0.0)) throw InvalidParameter("XTable: s must be positive");
  if (!(rho > 0.0)) throw InvalidParameter("XTable: rho must be positive");
  if (cfg.lambda != 0.0)
    throw InvalidParameter("XTable::scalar: requires lambda = 0");
  const LossSpec loss = m_estimation_adapter(cfg.loss);
  const PsiFn f = psi ? psi : loss.eval;
  XTable t;
  t.s_ = s;
  t.schur_ = rho * rho;
  t.two_d_ = false;
  t.d1_bounded_ = std::isfinite(loss.d1_sup);
  for (std::size_t k = 0; k < grid.noise.size(); ++k) {
    const double w = grid.noise.atoms[k];
    std::vector<Node> nodes;
    conditional_nodes(0.0, rho, s, loss, 0.0, w, 1.0, grid.legendre, nodes);
    Atom atom;
    atom.prob = grid.noise.probs[k];
    atom.features.resize(static_cast<Eigen::Index>(nodes.size()), kFeatures);
    atom.base.resize(static_cast<Eigen::Index>(nodes.size()));
    Eigen::Index n = 0;
    for (const Node& nd : nodes) {
      const double d2 = loss.d2(nd.v, nd.v0, w);
      const double jac = 1.0 + s * d2;
      if (!(jac > 0.0)) continue;
      const double d1 = loss.d1(nd.v, nd.v0, w);
      const double r = s * d2 / jac;
      atom.features.row(n) << d1 * d1, nd.v * d1, 0.0, f(nd.v, nd.v0, w), r,
          -r * r;
      atom.base(n) = std::log(nd.weight * jac);
      ++n;
    }
    atom.features.conservativeResize(n, kFeatures);
    atom.base.conservativeResize(n);
    t.atoms_.push_back(std::move(atom));
  }
  return t;
}

XTable XTable::general(double s, const Eigen::Matrix2d& R,
                       const ProblemConfig& /*cfg*/, const LossSpec& loss,
                       const JointGrid& grid, const PsiFn& psi,
                       int conditional_order) {
  if (!(s > 0.0)) throw InvalidParameter("XTable: s must be positive");
  if (std::abs(R(0, 1) - R(1, 0)) > 1e-12 * (1.0 + R.cwiseAbs().maxCoeff()))
    throw InvalidParameter("XTable: R must be symmetric");
  if (!(R(1, 1) > 0.0)) throw InvalidParameter("XTable: r00 must be positive");
  const double schur = schur_of(R);
  if (!(schur > 0.0))
    throw InvalidParameter("XTable: Schur complement must be positive");
  const PsiFn f = psi ? psi : loss.eval;
  const QuadratureGrid outer = build_hermite(conditional_order);
  const double coef = R(0, 1) / R(1, 1);
  const double sd = std::sqrt(schur);
  XTable t;
  t.s_ = s;
  t.schur_ = schur;
  t.two_d_ = true;
  t.cond_coef_ = coef;
  t.d1_bounded_ = std::isfinite(loss.d1_sup);
  for (std::size_t k = 0; k < grid.noise.size(); ++k) {
    const double w = grid.noise.atoms[k];
    std::vector<Node> nodes;
    for (int j = 0; j < outer.order; ++j) {
      const double v0 = std::sqrt(R(1, 1)) * outer.nodes[j];
      conditional_nodes(coef * v0, sd, s, loss, v0, w, outer.weights[j],
                        grid.legendre, nodes);
    }
    Atom atom;
    atom.prob = grid.noise.probs[k];
    atom.features.resize(static_cast<Eigen::Index>(nodes.size()), kFeatures);
    atom.base.resize(static_cast<Eigen::Index>(nodes.size()));
    Eigen::Index n = 0;
    for (const Node& nd : nodes) {
      const double d2 = loss.d2(nd.v, nd.v0, w);
      const double jac = 1.0 + s * d2;
      if (!(jac > 0.0)) continue;
      const double d1 = loss.d1(nd.v, nd.v0, w);
      const double r = s * d2 / jac;
      atom.features.row(n) << d1 * d1, nd.v * d1, nd.v0 * d1,
          f(nd.v, nd.v0, w), r, -r * r;
      atom.base(n) = std::log(nd.weight * jac);
      ++n;
    }
    atom.features.conservativeResize(n, kFeatures);
    atom.base.conservativeResize(n);
    t.atoms_.push_back(std::move(atom));
  }
  return t;
}

double XTable::log_x(const RateMultipliers& m) const {
  if (m.gamma > 0.0 && !d1_bounded_)
    throw DomainError("x_integral: gamma > 0 with unbounded l'");
  return log_x(to_vector(m), nullptr, nullptr);
}

double XTable::log_x(const Vec6& x, Vec6* grad, Mat6* hess) const {
  double total = 0.0;
  if (grad) grad->setZero();
  if (hess) hess->setZero();
  for (const Atom& a : atoms_) {
    if (a.base.size() == 0) throw DomainError("x_integral: empty domain");
    const Eigen::VectorXd e = a.base + a.features * x;
    const double top = e.maxCoeff();
    if (!std::isfinite(top)) throw NumericError("x_integral: non-finite integrand");
    const Eigen::VectorXd p = (e.array() - top).exp().matrix();
    const double z = p.sum();
    total += a.prob * (top + std::log(z));
    if (grad || hess) {
      const Eigen::VectorXd q = p / z;
      const Vec6 mean = a.features.transpose() * q;
      if (grad) *grad += a.prob * mean;
      if (hess) {
        const Mat6 second =
            a.features.transpose() * q.asDiagonal() * a.features;
        *hess += a.prob * (second - mean * mean.transpose());
      }
    }
  }
  if (!std::isfinite(total)) throw NumericError("x_integral: non-finite value");
  return total;
}

double x_integral(double s, double rho, const RateMultipliers& m,
                  const ProblemConfig& cfg, const JointGrid& grid,
                  const PsiFn& psi) {
  return XTable::scalar(s, rho, cfg, grid, psi).log_x(m);
}

double x_integral(double s, const Eigen::Matrix2d& R, const RateMultipliers& m,
                  const ProblemConfig& cfg, const LossSpec& loss,
                  const JointGrid& grid, const PsiFn& psi) {
  return XTable::general(s, R, cfg, loss, grid, psi).log_x(m);
}

double dual_objective(const XTable& table, const DualTargets& t,
                      const RateMultipliers& m) {
  return targets_vector(t).dot(to_vector(m)) - table.log_x(m);
}

InnerSupResult inner_sup(const XTable& table, const DualTargets& t,
                         PsiConstraint mode, const RateOptions& opts,
                         std::optional<RateMultipliers> start) {
  const Vec6 c = targets_vector(t);
  // fixed[i]: pinned at 0. lower/upper: one-sided bounds at 0.
  std::array<bool, 6> fixed{}, nonneg{}, nonpos{};
  fixed[kBeta0] = !table.two_dimensional();
  fixed[kEta] = mode == PsiConstraint::none;
  nonneg[kZeta] = true;
  nonpos[kEta] = mode == PsiConstraint::upper_bound;
  nonpos[kGamma] = !table.d1_bounded();

  auto project = [&](Vec6 x) {
    for (int i = 0; i < 6; ++i) {
      if (fixed[i]) x(i) = 0.0;
      if (nonneg[i]) x(i) = std::max(x(i), 0.0);
      if (nonpos[i]) x(i) = std::min(x(i), 0.0);
    }
    return x;
  };

  Vec6 x = project(natural_start(table.s(), table.schur(), table.cond_coef(),
                                 table.two_dimensional()));
  double val = c.dot(x) - table.log_x(x, nullptr, nullptr);
  if (start) {
    const Vec6 xs = project(to_vector(*start));
    try {
      const double vs = c.dot(xs) - table.log_x(xs, nullptr, nullptr);
      if (vs > val) {
        x = xs;
        val = vs;
      }
    } catch (const NumericError&) {
    }
  }

  InnerSupResult res;
  Vec6 mean;
  Mat6 cov;
  table.log_x(x, &mean, &cov);
  for (int it = 0; it < opts.max_newton; ++it) {
    res.iterations = it;
    const Vec6 grad = c - mean;
    std::vector<int> free;
    double pg = 0.0;
    for (int i = 0; i < 6; ++i) {
      if (fixed[i]) continue;
      const bool at_lo = nonneg[i] && x(i) <= 0.0 && grad(i) < 0.0;
      const bool at_hi = nonpos[i] && x(i) >= 0.0 && grad(i) > 0.0;
      if (at_lo || at_hi) continue;
      free.push_back(i);
      pg = std::max(pg, std::abs(grad(i)));
    }
    res.grad_norm = pg;
    if (pg <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    const int k = static_cast<int>(free.size());
    Eigen::MatrixXd H(k, k);
    Eigen::VectorXd gf(k);
    double diag = 0.0;
    for (int a = 0; a < k; ++a) {
      gf(a) = grad(free[a]);
      for (int b = 0; b < k; ++b) H(a, b) = cov(free[a], free[b]);
      diag = std::max(diag, H(a, a));
    }
    H.diagonal().array() += 1e-12 * (1.0 + diag);
    const Eigen::VectorXd d = H.ldlt().solve(gf);
    Vec6 dir = Vec6::Zero();
    for (int a = 0; a < k; ++a) dir(free[a]) = d(a);

    // Newton direction first, projected gradient as the fallback.
    auto search = [&](const Vec6& dir, double step) {
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        const Vec6 xn = project(x + step * dir);
        double vn;
        try {
          vn = c.dot(xn) - table.log_x(xn, nullptr, nullptr);
        } catch (const NumericError&) {
          continue;
        }
        if (vn >= val + 1e-4 * grad.dot(xn - x) && vn > val) {
          x = xn;
          val = vn;
          return true;
        }
      }
      return false;
    };
    bool accepted = search(dir, 1.0);
    if (!accepted) {
      Vec6 g = Vec6::Zero();
      for (int i : free) g(i) = grad(i);
      accepted = search(g, 1.0 / std::max(1.0, g.norm()));
    }
    // Any multiplier gives a lower bound on the sup.
    if (val > opts.value_cap || x.cwiseAbs().maxCoeff() > kDiverged) {
      res.feasible = false;
      res.value = kInf;
      res.mult = to_multipliers(x);
      return res;
    }
    if (!accepted) break;
    table.log_x(x, &mean, &cov);
  }
  res.value = val;
  res.mult = to_multipliers(x);
  return res;
}

Eigen::Matrix2d reduction_covariance(double rho, double r00) {
  Eigen::Matrix2d R;
  R << r00 + rho * rho, r00, r00, r00;
  return R;
}

namespace {

struct OuterProblem {
  std::function<XTable(double s)> table;
  DualTargets targets;
  PsiConstraint mode;
  double schur = 1.0;
  double cond_coef = 0.0;
  bool two_d = false;
  double s_lo = 0.0, s_hi = 0.0, g_lo = 0.0, g_hi = 0.0;
};

PhiResult profile_g(const OuterProblem& p, double s, const RateOptions& opts) {
  PhiResult best;
  best.s = s;
  XTable table = p.table(s);
  const double alpha = p.targets.alpha;
  const double base = std::log(s) / alpha - p.targets.lambda * s;
  std::optional<RateMultipliers> warm = to_multipliers(
      natural_start(s, p.schur, p.cond_coef, p.two_d));
  auto eval = [&](double u) {
    DualTargets t = p.targets;
    t.g = std::exp(u);
    InnerSupResult in = inner_sup(table, t, p.mode, opts, warm);
    // A stalled ascent only bounds the sup from below; skip it.
    if (!in.feasible || !std::isfinite(in.value) ||
        in.grad_norm > 100.0 * opts.grad_tol)
      return kBig;
    warm = in.mult;
    const double v =
        base + std::log(alpha * std::exp(1.0) * t.g / p.schur) / (2.0 * alpha) +
        in.value;
    if (v < best.value) {
      best.value = v;
      best.g = t.g;
      best.mult = in.mult;
      best.feasible = true;
    }
    return v;
  };
  // Coarse scan in log g, then Brent around the best scan point.
  constexpr int kScan = 8;
  const double ulo = std::log(p.g_lo), uhi = std::log(p.g_hi);
  const double du = (uhi - ulo) / (kScan - 1);
  int arg = -1;
  double low = kBig;
  for (int k = 0; k < kScan; ++k) {
    const double v = eval(ulo + k * du);
    if (v < low) {
      low = v;
      arg = k;
    }
  }
  if (arg < 0) return best;
  boost::uintmax_t iters = 100;
  boost::math::tools::brent_find_minima(
      eval, ulo + std::max(arg - 1, 0) * du,
      ulo + std::min(arg + 1, kScan - 1) * du, opts.brent_bits, iters);
  return best;
}

PhiResult minimize_outer(const OuterProblem& p, const RateOptions& opts,
                         std::optional<OuterHint> hint) {
  const int n = std::max(opts.s_scan, 3);
  std::vector<double> grid(n);
  std::vector<PhiResult> scan(n);
  const double llo = std::log(p.s_lo), lhi = std::log(p.s_hi);
  for (int i = 0; i < n; ++i) {
    grid[i] = std::exp(llo + (lhi - llo) * i / (n - 1));
    scan[i] = profile_g(p, grid[i], opts);
  }
  PhiResult best;
  for (const auto& r : scan)
    if (r.value < best.value) best = r;

  auto refine = [&](double lo, double hi) {
    auto f = [&](double u) {
      PhiResult r = profile_g(p, std::exp(u), opts);
      if (r.value < best.value) best = r;
      return r.feasible ? r.value : kBig;
    };
    boost::uintmax_t iters = 100;
    boost::math::tools::brent_find_minima(f, std::log(lo), std::log(hi),
                                          opts.brent_bits, iters);
  };

  // Local minima of the scan, best first.
  std::vector<int> minima;
  for (int i = 0; i < n; ++i) {
    if (!scan[i].feasible) continue;
    const double v = scan[i].value;
    const bool left = i == 0 || v <= scan[i - 1].value;
    const bool right = i == n - 1 || v <= scan[i + 1].value;
    if (left && right) minima.push_back(i);
  }
  std::sort(minima.begin(), minima.end(),
            [&](int a, int b) { return scan[a].value < scan[b].value; });
  int budget = opts.starts;
  if (hint && hint->s > p.s_lo && hint->s < p.s_hi) {
    refine(std::max(p.s_lo, hint->s / 1.25), std::min(p.s_hi, hint->s * 1.25));
    --budget;
  }
  for (int i : minima) {
    if (budget-- <= 0) break;
    const double lo = grid[std::max(i - 1, 0)], hi = grid[std::min(i + 1, n - 1)];
    // A basin already refined from the hint needs no second start.
    if (best.feasible && best.s > lo && best.s < hi && best.value < scan[i].value)
      continue;
    refine(lo, hi);
  }
  return best;
}

double g_upper(const LossSpec& loss, double schur, double r00,
               const NoiseSpec& noise) {
  if (std::isfinite(loss.d1_sup)) return loss.d1_sup * loss.d1_sup;
  const double l = std::max(1.0, loss.curvature_bound());
  return 100.0 * l * l * (1.0 + schur + r00 + noise.second_moment());
}

void s_range(const LossSpec& loss, const RateOptions& opts, double& lo,
             double& hi) {
  if (!(opts.s_cap > 0.0 && opts.s_cap < 1.0))
    throw InvalidParameter("RateOptions: s_cap must lie in (0, 1)");
  hi = loss.curvature_min > 0.0 ? opts.s_cap / loss.curvature_min : 100.0;
  lo = hi * 1e-2;
}

}  // namespace

PhiResult phi_scalar(double rho, double L, PsiConstraint mode,
                     const ProblemConfig& cfg, const JointGrid& grid,
                     const RateOptions& opts, std::optional<OuterHint> hint) {
  validate(cfg);
  if (!(rho > 0.0)) throw InvalidParameter("phi: rho must be positive");
  if (cfg.lambda != 0.0)
    throw InvalidParameter("phi: the scalar form requires lambda = 0");
  if (mode != PsiConstraint::none && !(L > 0.0))
    throw InvalidParameter("phi: iota must be positive");
  OuterProblem p;
  p.table = [&](double s) { return XTable::scalar(s, rho, cfg, grid); };
  p.targets = DualTargets{cfg.alpha, 0.0, L, 0.0, 0.0, 0.0};
  p.mode = mode;
  p.schur = rho * rho;
  s_range(cfg.loss, opts, p.s_lo, p.s_hi);
  p.g_lo = opts.a_l * opts.a_l;
  p.g_hi = g_upper(cfg.loss, p.schur, cfg.r00, cfg.noise);
  return minimize_outer(p, opts, hint);
}

double phi_tuk(double rho, double iota, const ProblemConfig& cfg,
               const JointGrid& grid, const RateOptions& opts,
               std::optional<OuterHint> hint) {
  return phi_scalar(rho, iota, PsiConstraint::equality, cfg, grid, opts, hint)
      .value;
}

PhiResult phi_fin(const Eigen::Matrix2d& R, double L, PsiConstraint mode,
                  const ProblemConfig& cfg, const LossSpec& loss,
                  const PsiFn& psi, const JointGrid& grid,
                  const RateOptions& opts, std::optional<OuterHint> hint) {
  validate(cfg);
  if (std::abs(R(1, 1) - cfg.r00) > 1e-12 * cfg.r00)
    throw InvalidParameter("phi_fin: R(1,1) must equal r00");
  OuterProblem p;
  p.table = [&](double s) {
    return XTable::general(s, R, cfg, loss, grid, psi, opts.conditional_order);
  };
  p.targets = DualTargets{cfg.alpha, 0.0, L, cfg.lambda, R(0, 0), R(0, 1)};
  p.mode = mode;
  p.schur = schur_of(R);
  p.cond_coef = R(0, 1) / R(1, 1);
  p.two_d = true;
  s_range(loss, opts, p.s_lo, p.s_hi);
  p.g_lo = opts.a_l * opts.a_l;
  p.g_hi = g_upper(loss, p.schur, cfg.r00, cfg.noise);
  return minimize_outer(p, opts, hint);
}

RateSurface phi_curves(const ProblemConfig& cfg, const JointGrid& grid,
                       const std::vector<double>& rho_grid,
                       const std::vector<double>& iota_grid,
                       const CurveOptions& opts) {
  validate(cfg);
  if (rho_grid.empty() || iota_grid.empty())
    throw InvalidParameter("phi_curves: empty grid");
  if (!std::is_sorted(iota_grid.begin(), iota_grid.end()))
    throw InvalidParameter("phi_curves: iota grid must be increasing");
  std::optional<OuterHint> hint;
  const FixedPointSolution fp = se_solve(cfg, grid);
  if (fp.converged) hint = OuterHint{fp.state.s, fp.g};

  RateSurface out;
  out.rho_grid = rho_grid;
  out.iota_grid = iota_grid;
  const std::size_t nr = rho_grid.size(), ni = iota_grid.size();
  out.phi.resize(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(ni));
  for_each_index(nr * ni, opts.ex, [&](std::size_t k) {
    const std::size_t i = k / ni, j = k % ni;
    out.phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
        phi_tuk(rho_grid[i], iota_grid[j], cfg, grid, opts.rate, hint);
  });
  out.phi_inf.resize(nr);
  for (std::size_t i = 0; i < nr; ++i)
    out.phi_inf[i] = out.phi.row(static_cast<Eigen::Index>(i)).minCoeff();

  // iota0: end of the initial run of iota values with min_rho Phi > 0, where
  // values above -zero_tol count as nonnegative (Phi(rho*; iota*) is a zero).
  auto min_over_rho = [&](double iota) {
    std::vector<double> v(nr);
    for_each_index(nr, opts.ex, [&](std::size_t i) {
      v[i] = phi_tuk(rho_grid[i], iota, cfg, grid, opts.rate, hint);
    });
    return *std::min_element(v.begin(), v.end());
  };
  std::size_t last = ni;
  for (std::size_t j = 0; j < ni; ++j) {
    if (out.phi.col(static_cast<Eigen::Index>(j)).minCoeff() > -opts.zero_tol)
      last = j;
    else
      break;
  }
  if (last == ni) {
    out.iota0_found = false;
    out.iota0 = iota_grid.front();
  } else if (last + 1 == ni) {
    out.iota0_found = true;
    out.iota0 = iota_grid.back();
  } else {
    out.iota0_found = true;
    double lo = iota_grid[last], hi = iota_grid[last + 1];
    while (hi - lo > opts.iota_tol) {
      const double mid = 0.5 * (lo + hi);
      (min_over_rho(mid) > -opts.zero_tol ? lo : hi) = mid;
    }
    out.iota0 = lo;
  }

  out.phi_zero.resize(nr);
  for_each_index(nr, opts.ex, [&](std::size_t i) {
    out.phi_zero[i] = phi_scalar(rho_grid[i], out.iota0,
                                 PsiConstraint::upper_bound, cfg, grid,
                                 opts.rate, hint)
                          .value;
  });
  const auto it = std::min_element(out.phi_zero.begin(), out.phi_zero.end());
  const std::size_t k = static_cast<std::size_t>(it - out.phi_zero.begin());
  out.rho_star = rho_grid[k];
  if (nr >= 3) {
    const double lo = rho_grid[k == 0 ? 0 : k - 1];
    const double hi = rho_grid[std::min(k + 1, nr - 1)];
    auto f = [&](double rho) {
      return phi_scalar(rho, out.iota0, PsiConstraint::upper_bound, cfg, grid,
                        opts.rate, hint)
          .value;
    };
    boost::uintmax_t iters = 60;
    const auto r = boost::math::tools::brent_find_minima(f, lo, hi, 16, iters);
    if (r.second <= *it) out.rho_star = r.first;
  }
  return out;
}

TrivializationReport trivialization_diagnostics(const ProblemConfig& cfg,
                                                double rho,
                                                const CurvatureMeasure& nu,
                                                const JointGrid& grid,
                                                const RateOptions& opts) {
  validate(cfg);
  if (!(rho > 0.0)) throw InvalidParameter("trivialization: rho must be positive");
  if (nu.size() == 0) throw InvalidParameter("trivialization: empty measure");
  const LossSpec loss = m_estimation_adapter(cfg.loss);
  const double lv = cfg.loss.curvature_bound();
  TrivializationReport rep;
  rep.alpha0 = std::pow(cfg.loss.curvature_min / lv, 2);
  rep.tau0 = 0.5 / lv;
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    e1 += nu.samples[i].weight * nu.d1_values[i] * nu.d1_values[i];
    e2 += nu.samples[i].weight * nu.d2_values[i];
  }
  const Eigen::Matrix2d R = reduction_covariance(rho, cfg.r00);
  const double schur = schur_of(R);
  rep.in_T = schur <= rep.tau0 * rep.tau0 * e1;
  rep.b_star = rep.tau0 * (e2 + cfg.lambda) +
               0.5 * std::log(schur / (rep.tau0 * rep.tau0 * e1));
  const double m1 = expect_bivariate(
      [&](double u, double u0, double w) { return u * loss.d1(u, u0, w); }, R,
      grid);
  const double m0 = expect_bivariate(
      [&](double u, double u0, double w) { return u0 * loss.d1(u, u0, w); }, R,
      grid);
  const double n1 = m1 + cfg.lambda * R(0, 0), n0 = m0 + cfg.lambda * R(0, 1);
  const double op = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(R)
                        .eigenvalues()
                        .maxCoeff();
  const double den = std::sqrt(schur) / rep.tau0 +
                     loss.d1_lipschitz * std::sqrt(R.trace());
  rep.g_star = (n1 * n1 + n0 * n0) / (2.0 * op * den * den);
  rep.lower_bound =
      rep.g_star - rep.b_star / cfg.alpha - std::log(cfg.alpha) / cfg.alpha;
  rep.alpha_star = alpha_star_certificate(cfg, grid, opts);
  return rep;
}

double alpha_star_certificate(const ProblemConfig& cfg, const JointGrid& grid,
                              const RateOptions& opts, int n_beta) {
  const double lv = cfg.loss.curvature_bound();
  const double b_lo = opts.a_l / (2.0 * lv), b_hi = opts.a_r;
  if (n_beta < 2 || !(b_lo < b_hi))
    throw InvalidParameter("alpha_star: empty beta range");
  const LossSpec& l0 = cfg.loss;
  double worst = 1.0;
  for (int k = 0; k < n_beta; ++k) {
    const double beta = b_lo + (b_hi - b_lo) * k / (n_beta - 1);
    auto br = [&](double w) {
      std::vector<double> pts = l0.kinks_at(0.0, 0.0);
      for (double& p : pts) p += w;
      return pts;
    };
    const double m = expect_joint(
        [&](double z, double w) { return l0.d2(z - w, 0.0, 0.0); }, beta, grid,
        br);
    if (!(m > 0.0)) return kInf;
    const double c = 9.0 * lv * lv / (m * m);
    const double K = 4.0 * std::exp(1.0) * beta * beta * lv * lv /
                     (opts.a_l * opts.a_l);
    // h(a) = a - c log(K a^2) is convex with minimum at a = 2c.
    auto h = [&](double a) { return a - c * std::log(K * a * a); };
    const double a_min = std::max(1.0, 2.0 * c);
    if (h(a_min) > 0.0 && h(1.0) > 0.0) continue;
    double hi = 2.0 * a_min;
    while (h(hi) <= 0.0) hi *= 2.0;
    boost::uintmax_t iters = 200;
    const auto r = boost::math::tools::bisect(
        h, a_min, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    worst = std::max(worst, r.second);
  }
  return worst;
}

double f_nu(double x) {
  if (!(x > 0.0)) throw DomainError("f_nu: argument must be positive");
  return std::log(x) - x + 1.0;
}

PhiMeasures phi_measures(const ProxFamily& nu, double rho, double s,
                         const ProblemConfig& cfg, const JointGrid& grid) {
  validate(cfg);
  if (!(rho > 0.0 && nu.rho > 0.0))
    throw InvalidParameter("phi_measures: rho must be positive");
  if (cfg.lambda != 0.0)
    throw InvalidParameter("phi_measures: requires lambda = 0");
  check_step(nu.s, cfg.loss);
  const CurvatureMeasure m = se_pushforward(nu.rho, nu.s, cfg, grid);
  if (!(s > 0.0) || (m.L0 > 0.0 && !(s * m.L0 < 1.0)))
    throw DomainError("phi_measures: s outside (0, 1/L0(nu))");
  const double e3 = replicon_e3(s, m);
  if (e3 > 1.0 + 1e-12) throw DomainError("phi_measures: replicon violated");

  PhiMeasures out;
  out.replicon_boundary = e3 > 1.0 - 1e-12;
  const LossSpec loss = m_estimation_adapter(cfg.loss);
  const double var = rho * rho, var_nu = nu.rho * nu.rho;
  double e1 = 0.0, elog = 0.0, kl_pi = 0.0, kl_gauss = 0.0;
  for (std::size_t k = 0; k < grid.noise.size(); ++k) {
    const double w = grid.noise.atoms[k], pw = grid.noise.probs[k];
    const Rule r =
        prox_pushforward_rule(0.0, nu.rho, nu.s, loss, 0.0, w, grid.legendre);
    double mass = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) mass += r.weights[i];
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double v = r.nodes[i], q = pw * r.weights[i] / mass;
      const double d1 = loss.d1(v, 0.0, w), d2 = loss.d2(v, 0.0, w);
      const double log_nu = std::log1p(nu.s * d2) -
                            0.5 * std::log(2.0 * M_PI * var_nu) -
                            0.5 * std::pow(v + nu.s * d1, 2) / var_nu;
      const double log_pi = std::log1p(s * d2) -
                            0.5 * std::log(2.0 * M_PI * var) -
                            0.5 * std::pow(v + s * d1, 2) / var;
      const double log_g =
          -0.5 * std::log(2.0 * M_PI * var) - 0.5 * v * v / var;
      e1 += q * d1 * d1;
      elog += q * std::log1p(s * d2);
      kl_pi += q * (log_nu - log_pi);
      kl_gauss += q * (log_nu - log_g);
    }
  }
  const double x = cfg.alpha * s * s * e1 / var;
  out.kl_conditional = kl_pi;
  out.kl_v0 = 0.0;
  out.f_term = f_nu(x) / (2.0 * cfg.alpha);
  out.value = out.kl_conditional + out.kl_v0 + out.f_term;
  out.direct = -elog + std::log(std::exp(1.0) * x) / (2.0 * cfg.alpha) + kl_gauss;
  return out;
}

double phi_mu_gaussian(double a, double q, const Eigen::Matrix2d& R,
                       double alpha) {
  if (!(q > 0.0)) throw InvalidParameter("phi_mu: variance must be positive");
  const double S = schur_of(R);
  if (!(S > 0.0)) throw InvalidParameter("phi_mu: Schur complement must be positive");
  const double b = R(0, 1) / R(1, 1);
  const double kl =
      0.5 * (q / S + (a - b) * (a - b) * R(1, 1) / S - 1.0 + std::log(S / q));
  return kl / alpha;
}

}  // namespace landscape
