#pragma once

#include <vector>

#include "landscape/loss.hpp"
#include "landscape/quadrature.hpp"

namespace landscape {

struct ProxResult {
  double value = 0.0;       // minimizer v
  double derivative = 1.0;  // dv/dz
  double residual = 0.0;    // s * d1(v) + v - z
};

// argmin_x (x - z)^2 / (2s) + l(x; v0, w), for 0 < s < 1 / L_min.
ProxResult prox(double z, double s, const LossSpec& loss, double v0 = 0.0,
                double w = 0.0);

// Density of prox(g) for g ~ N(mean, rho2):
// (1 + s l''(v)) * phi(s l'(v) + v - mean; rho2).
double prox_density(double v, double s, double rho2, const LossSpec& loss,
                    double v0 = 0.0, double w = 0.0, double mean = 0.0);

// Throws InvalidParameter unless 0 < s < 1 / L_min.
void check_step(double s, const LossSpec& loss);

// Prox without the strict step check, so that s = 1/L_min is allowed.
double prox_value(double z, double s, const LossSpec& loss, double v0,
                  double w);

// Breakpoints in z of z -> prox(z; s) integrands: kinks and the points where
// l'' = -L_min, mapped through z = v + s l'(v).
std::vector<double> prox_breakpoints(double s, const LossSpec& loss, double v0,
                                     double w);

// Rule in v for the law of prox(y; s) with y ~ N(mean, sd^2); the weights
// carry the pushforward density, so they sum to ~1. Panels are split at the
// kinks of l'' and graded towards the points where 1 + s l'' is smallest.
Rule prox_pushforward_rule(double mean, double sd, double s,
                           const LossSpec& loss, double v0, double w,
                           const QuadratureGrid& legendre);

}  // namespace landscape
