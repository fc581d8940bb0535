#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "landscape/loss.hpp"

namespace landscape {

// Nodes and weights of a one-dimensional rule.
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;
};

// Gauss-Hermite rule for the standard normal measure (weights sum to 1).
QuadratureGrid build_hermite(int order);
// Gauss-Legendre rule on [-1, 1] (weights sum to 2).
QuadratureGrid build_legendre(int order);

struct JointGrid {
  QuadratureGrid gauss;     // 1-D Gauss-Hermite
  QuadratureGrid gauss2d;   // per-axis rule for the tensor 2-D expectation
  QuadratureGrid legendre;  // panel rule for composite Gaussian rules
  NoiseSpec noise;
  int order = 0;
};

// Panel order for the composite rules is max(4, order / 20).
JointGrid make_joint_grid(const NoiseSpec& noise, int order = 200,
                          int order2d = 80);

// E f(scale * G, w) with G ~ N(0,1) and w ~ noise.
double expect_joint(const std::function<double(double, double)>& f,
                    double scale, const JointGrid& grid);

// Same expectation on a composite rule split at breaks(w), given in the
// units of scale * G. Use for integrands with kinks.
double expect_joint(const std::function<double(double, double)>& f,
                    double scale, const JointGrid& grid,
                    const std::function<std::vector<double>(double)>& breaks);

// E f(u, u0, w) with (u, u0) ~ N(0, R) and w ~ noise.
double expect_bivariate(
    const std::function<double(double, double, double)>& f,
    const Eigen::Matrix2d& R, const JointGrid& grid);

// A rule with arbitrary nodes; used for piecewise-smooth integrands.
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

// Composite Gauss-Legendre rule on [a, b] split at the given breakpoints,
// with panels no wider than max_panel.
Rule interval_rule(double a, double b, std::vector<double> breaks,
                   double max_panel, const QuadratureGrid& legendre);

// Rule for N(mean, sd^2) restricted to mean +- half_width * sd, built from
// interval_rule and weights multiplied by the density. Panels are at most
// sd wide and at most half the smallest gap between breakpoints; with
// grade > 0 they also shrink geometrically (grade halvings) towards each
// breakpoint.
Rule gaussian_rule(double mean, double sd, const std::vector<double>& breaks,
                   const QuadratureGrid& legendre, double half_width = 10.0,
                   int grade = 0);

double normal_pdf(double x, double var);

}  // namespace landscape
