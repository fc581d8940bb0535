#include "landscape/prox.hpp"

#include <algorithm>
#include <cmath>

#include "landscape/errors.hpp"
#include "landscape/quadrature.hpp"

namespace landscape {

void check_step(double s, const LossSpec& loss) {
  if (!(s > 0.0) || !std::isfinite(s) || !(s * loss.curvature_min < 1.0))
    throw InvalidParameter("prox: step s must satisfy 0 < s < 1/L_min");
}

namespace {

ProxResult prox_impl(double z, double s, const LossSpec& loss, double v0,
                     double w) {
  auto F = [&](double v) { return s * loss.d1(v, v0, w) + v - z; };
  const double tol = 1e-12 * std::max(1.0, std::abs(z));

  double lo, hi;
  if (std::isfinite(loss.d1_sup)) {
    lo = z - s * loss.d1_sup;
    hi = z + s * loss.d1_sup;
  } else {
    lo = std::min(z, 0.0) - s * std::abs(z);
    hi = std::max(z, 0.0) + s * std::abs(z);
    double width = std::max(1.0, hi - lo);
    for (int i = 0; F(lo) > 0.0; ++i) {
      if (i > 200) throw NumericError("prox: could not bracket the root");
      lo -= width;
      width *= 2.0;
    }
    width = std::max(1.0, hi - lo);
    for (int i = 0; F(hi) < 0.0; ++i) {
      if (i > 200) throw NumericError("prox: could not bracket the root");
      hi += width;
      width *= 2.0;
    }
  }

  // F is strictly increasing with F' = 1 + s l'' >= 1 - s L_min > 0.
  double v = z;
  if (v < lo || v > hi) v = 0.5 * (lo + hi);
  double f = F(v);
  for (int it = 0; it < 100; ++it) {
    if (std::abs(f) <= tol) {
      ProxResult r;
      r.value = v;
      r.residual = f;
      r.derivative = 1.0 / (1.0 + s * loss.d2(v, v0, w));
      return r;
    }
    if (f > 0.0) hi = v; else lo = v;
    const double fp = 1.0 + s * loss.d2(v, v0, w);
    double next = v - f / fp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    v = next;
    f = F(v);
    if (hi - lo <= 4e-16 * std::max(1.0, std::abs(v))) {
      if (std::abs(f) <= 1e-10 * std::max(1.0, std::abs(z))) break;
    }
  }
  if (std::abs(f) <= 1e-10 * std::max(1.0, std::abs(z))) {
    ProxResult r;
    r.value = v;
    r.residual = f;
    r.derivative = 1.0 / (1.0 + s * loss.d2(v, v0, w));
    return r;
  }
  throw NumericError("prox: safeguarded Newton did not converge");
}

}  // namespace

ProxResult prox(double z, double s, const LossSpec& loss, double v0, double w) {
  check_step(s, loss);
  return prox_impl(z, s, loss, v0, w);
}

double prox_value(double z, double s, const LossSpec& loss, double v0,
                  double w) {
  if (!(s > 0.0) || s * loss.curvature_min > 1.0)
    throw InvalidParameter("prox_value: step s must satisfy 0 < s <= 1/L_min");
  return prox_impl(z, s, loss, v0, w).value;
}

std::vector<double> prox_breakpoints(double s, const LossSpec& loss, double v0,
                                     double w) {
  std::vector<double> pts = loss.kinks_at(v0, w);
  if (loss.curvature_min > 0.0) {
    for (double v : loss.level_set_at(-loss.curvature_min, v0, w))
      pts.push_back(v);
  }
  for (double& v : pts) v += s * loss.d1(v, v0, w);
  return pts;
}

double prox_density(double v, double s, double rho2, const LossSpec& loss,
                    double v0, double w, double mean) {
  check_step(s, loss);
  if (!(rho2 > 0.0)) throw InvalidParameter("prox_density: rho2 must be positive");
  const double jac = 1.0 + s * loss.d2(v, v0, w);
  return jac * normal_pdf(s * loss.d1(v, v0, w) + v - mean, rho2);
}

}  // namespace landscape

namespace landscape {

Rule prox_pushforward_rule(double mean, double sd, double s,
                           const LossSpec& loss, double v0, double w,
                           const QuadratureGrid& legendre) {
  if (!(sd > 0.0)) {
    return Rule{{prox_value(mean, s, loss, v0, w)}, {1.0}};
  }
  const double lo = prox_value(mean - 10.0 * sd, s, loss, v0, w);
  const double hi = prox_value(mean + 10.0 * sd, s, loss, v0, w);
  std::vector<double> breaks = loss.kinks_at(v0, w);
  std::vector<double> peaks;
  if (loss.curvature_min > 0.0) peaks = loss.level_set_at(-loss.curvature_min, v0, w);
  breaks.insert(breaks.end(), peaks.begin(), peaks.end());
  std::sort(breaks.begin(), breaks.end());
  // Panel width: the Gaussian scale, and no more than half the smallest gap
  // between features of the loss.
  double width = sd;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    const double gap = breaks[i] - breaks[i - 1];
    if (gap > 0.0) width = std::min(width, 0.5 * gap);
  }
  // 1 + s l'' >= eps near the peaks; grade geometrically down to ~sqrt(eps).
  const double eps = std::max(0.0, 1.0 - s * loss.curvature_min);
  if (!peaks.empty() && eps < 0.5) {
    const double floor = std::max(1e-9, 0.125 * std::sqrt(eps)) * width;
    for (double c : peaks) {
      for (double h = width; h >= floor; h *= 0.5) {
        breaks.push_back(c - h);
        breaks.push_back(c + h);
      }
    }
  }
  Rule r = interval_rule(lo, hi, std::move(breaks), width, legendre);
  const double var = sd * sd;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double v = r.nodes[i];
    const double jac = 1.0 + s * loss.d2(v, v0, w);
    r.weights[i] *= jac * normal_pdf(v + s * loss.d1(v, v0, w) - mean, var);
  }
  return r;
}

}  // namespace landscape
