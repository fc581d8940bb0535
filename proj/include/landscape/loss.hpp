#pragma once

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace landscape {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Loss l(v; v0, w) with first and second derivatives in v.
// A univariate loss ignores v0 and w; use m_estimation_adapter to lift it.
struct LossSpec {
  using Fn = std::function<double(double v, double v0, double w)>;
  using Points = std::function<std::vector<double>(double v0, double w)>;
  using LevelSet =
      std::function<std::vector<double>(double level, double v0, double w)>;

  std::string name;
  Fn eval;
  Fn d1;
  Fn d2;
  double curvature_min = 0.0;  // L_min: d2 >= -L_min
  double curvature_max = 0.0;  // L_max: d2 <= L_max
  double d1_sup = kInf;        // sup |d1|
  double d1_lipschitz = kInf;  // Lipschitz constant of d1 in (v, v0)
  // Points in v where d2 is not smooth.
  Points kinks;
  // Isolated solutions of d2(v) = level. May be empty.
  LevelSet d2_level_set;

  double curvature_bound() const {
    return curvature_min > curvature_max ? curvature_min : curvature_max;
  }
  // Largest admissible prox step: s * L_min < 1.
  double max_step() const {
    return curvature_min > 0.0 ? 1.0 / curvature_min : kInf;
  }
  std::vector<double> kinks_at(double v0, double w) const {
    return kinks ? kinks(v0, w) : std::vector<double>{};
  }
  std::vector<double> level_set_at(double level, double v0, double w) const {
    return d2_level_set ? d2_level_set(level, v0, w) : std::vector<double>{};
  }
};

LossSpec tukey_loss(double kappa);
LossSpec quadratic_loss();
LossSpec huber_loss(double delta);

// l(v; v0, w) = base(v - v0 - w).
LossSpec m_estimation_adapter(const LossSpec& base);

// Finite-atom noise law.
struct NoiseSpec {
  std::vector<double> atoms;
  std::vector<double> probs;

  double mean() const;
  double second_moment() const;
  double variance() const;
  std::size_t size() const { return atoms.size(); }
};

NoiseSpec make_noise(std::vector<double> atoms, std::vector<double> probs);
// Atoms {-10A, -A, A, 10A} with probabilities {.01, .49, .49, .01},
// A chosen so that snr * variance == r00.
NoiseSpec contaminated_noise(double snr, double r00 = 1.0);
NoiseSpec point_mass_noise(double w = 0.0);

struct ProblemConfig {
  double alpha = 2.0;
  double snr = 1.0;
  double r00 = 1.0;
  double lambda = 0.0;
  LossSpec loss;  // univariate base loss
  NoiseSpec noise;
};

// Throws InvalidParameter on alpha <= 1, snr <= 0, r00 <= 0, lambda < 0
// or a noise variance inconsistent with snr.
void validate(const ProblemConfig& cfg);
ProblemConfig tukey_problem(double alpha, double snr, double kappa = 1.0,
                            double r00 = 1.0);

}  // namespace landscape
