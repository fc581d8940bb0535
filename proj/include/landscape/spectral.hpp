#pragma once

#include <optional>
#include <vector>

#include "landscape/loss.hpp"

namespace landscape {

// Discrete law nu of (v, v0, w) with cached l' and l'' values.
struct CurvatureMeasure {
  struct Sample {
    double v = 0.0, v0 = 0.0, w = 0.0, weight = 0.0;
  };
  std::vector<Sample> samples;
  std::vector<double> d1_values;
  std::vector<double> d2_values;
  double L0 = 0.0;
  double alpha = 2.0;

  std::size_t size() const { return samples.size(); }
};

// Evaluates l' and l'' at the samples, renormalizes weights and sets L0.
CurvatureMeasure make_curvature_measure(
    std::vector<CurvatureMeasure::Sample> samples, const LossSpec& loss,
    double alpha);

struct SpectralResult {
  double s_min = 0.0;  // +inf when g_st has no minimizer
  double zeta_min = 0.0;
  std::optional<double> s_star_at_z;
  double e3 = 0.0;
  bool boundary = false;  // minimizer sits at s = 1/L0
};

// 1/(alpha s) - E[l'' / (1 + s l'')].
double g_st(double s, const CurvatureMeasure& m);
// alpha E[(s l'' / (1 + s l''))^2].
double replicon_e3(double s, const CurvatureMeasure& m);
// s^2 g_st'(s) = -1/alpha + E[(s l'' / (1 + s l''))^2].
double g_st_slope(double s, const CurvatureMeasure& m);

SpectralResult spectral_edge(const CurvatureMeasure& m);
SpectralResult spectral_edge(const CurvatureMeasure& m, double z);

// Root of g_st(s) + z on (0, s_min]; requires z <= zeta_min.
double solve_s_star(double z, const CurvatureMeasure& m);

// -alpha z s + alpha E log(1 + s l'') - log s - (log alpha + 1).
double k_st(double s, double z, const CurvatureMeasure& m);

}  // namespace landscape
