#include "landscape/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "landscape/errors.hpp"

namespace landscape {

namespace {

double upper_s(const CurvatureMeasure& m) {
  return m.L0 > 0.0 ? 1.0 / m.L0 : kInf;
}

void check_s(double s, const CurvatureMeasure& m, const char* who) {
  if (!(s > 0.0) || s > upper_s(m) * (1.0 + 1e-15))
    throw InvalidParameter(std::string(who) + ": s outside (0, 1/L0]");
}

}  // namespace

CurvatureMeasure make_curvature_measure(
    std::vector<CurvatureMeasure::Sample> samples, const LossSpec& loss,
    double alpha) {
  if (!(alpha > 0.0)) throw InvalidParameter("curvature measure: alpha must be positive");
  CurvatureMeasure m;
  m.alpha = alpha;
  double total = 0.0;
  for (const auto& x : samples) {
    if (!(x.weight >= 0.0)) throw InvalidParameter("curvature measure: negative weight");
    total += x.weight;
  }
  if (!(total > 0.0)) throw InvalidParameter("curvature measure: zero mass");
  m.samples = std::move(samples);
  m.d1_values.reserve(m.size());
  m.d2_values.reserve(m.size());
  double dmin = 0.0;
  for (auto& x : m.samples) {
    x.weight /= total;
    m.d1_values.push_back(loss.d1(x.v, x.v0, x.w));
    const double d2 = loss.d2(x.v, x.v0, x.w);
    m.d2_values.push_back(d2);
    if (x.weight > 0.0) dmin = std::min(dmin, d2);
  }
  m.L0 = -dmin;
  return m;
}

double g_st(double s, const CurvatureMeasure& m) {
  check_s(s, m, "g_st");
  double e = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = m.d2_values[i];
    const double den = 1.0 + s * d;
    if (den <= 0.0) {
      if (m.samples[i].weight > 0.0) return kInf;  // limit at s = 1/L0
      continue;
    }
    e += m.samples[i].weight * d / den;
  }
  return 1.0 / (m.alpha * s) - e;
}

double replicon_e3(double s, const CurvatureMeasure& m) {
  check_s(s, m, "replicon_e3");
  double e = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = m.d2_values[i];
    const double den = 1.0 + s * d;
    if (den <= 0.0) {
      if (m.samples[i].weight > 0.0) return kInf;
      continue;
    }
    const double r = s * d / den;
    e += m.samples[i].weight * r * r;
  }
  return m.alpha * e;
}

double g_st_slope(double s, const CurvatureMeasure& m) {
  return replicon_e3(s, m) / m.alpha - 1.0 / m.alpha;
}

SpectralResult spectral_edge(const CurvatureMeasure& m) {
  SpectralResult res;
  const double hi_s = upper_s(m);
  // The slope is strictly increasing; find its sign change.
  auto slope = [&](double s) { return g_st_slope(s, m); };
  double lo = 0.0, hi;
  if (std::isfinite(hi_s)) {
    hi = hi_s;
    if (slope(hi) <= 0.0) {
      res.s_min = hi;
      res.boundary = true;
      res.zeta_min = -g_st(hi, m);
      res.e3 = replicon_e3(hi, m);
      return res;
    }
  } else {
    hi = 1.0;
    while (slope(hi) <= 0.0) {
      hi *= 2.0;
      if (hi > 1e12) {
        // No interior minimizer: g_st decreases to 0 at infinity.
        res.s_min = kInf;
        res.zeta_min = 0.0;
        res.e3 = 0.0;
        return res;
      }
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (slope(mid) > 0.0) hi = mid; else lo = mid;
  }
  // Either endpoint has slope within rounding of zero; take the one with
  // the smaller |e3 - 1|.
  const double s = (lo > 0.0 && std::abs(slope(lo)) < std::abs(slope(hi))) ? lo : hi;
  res.s_min = s;
  res.zeta_min = -g_st(s, m);
  res.e3 = replicon_e3(s, m);
  return res;
}

SpectralResult spectral_edge(const CurvatureMeasure& m, double z) {
  SpectralResult res = spectral_edge(m);
  res.s_star_at_z = solve_s_star(z, m);
  return res;
}

double solve_s_star(double z, const CurvatureMeasure& m) {
  const SpectralResult edge = spectral_edge(m);
  const double tol = 1e-10;
  if (z > edge.zeta_min + tol)
    throw DomainError("solve_s_star: z inside the spectrum");
  auto f = [&](double s) { return g_st(s, m) + z; };
  if (!std::isfinite(edge.s_min)) {
    // zeta_min = 0 and g_st -> 0 from above; z <= 0.
    if (z >= 0.0) return kInf;
    double hi = 1.0;
    while (f(hi) > 0.0) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 300 && hi - lo > 1e-16 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (f(mid) > 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
  if (f(edge.s_min) >= 0.0) return edge.s_min;
  double lo = 0.0, hi = edge.s_min;
  for (int it = 0; it < 300 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double k_st(double s, double z, const CurvatureMeasure& m) {
  check_s(s, m, "k_st");
  double e = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double a = 1.0 + s * m.d2_values[i];
    if (a <= 0.0) {
      if (m.samples[i].weight > 0.0)
        throw DomainError("k_st: log of nonpositive argument");
      continue;
    }
    e += m.samples[i].weight * std::log(a);
  }
  return -m.alpha * z * s + m.alpha * e - std::log(s) - (std::log(m.alpha) + 1.0);
}

}  // namespace landscape
