#include "landscape/loss.hpp"

#include <cmath>
#include <numeric>

#include "landscape/errors.hpp"

namespace landscape {

LossSpec tukey_loss(double kappa) {
  if (!(kappa > 0.0) || !std::isfinite(kappa))
    throw InvalidParameter("tukey_loss: kappa must be positive");
  const double k2 = kappa * kappa;
  LossSpec l;
  l.name = "tukey";
  l.eval = [k2](double t, double, double) {
    const double u = t * t / k2;
    if (u >= 1.0) return k2 / 6.0;
    const double c = 1.0 - u;
    return k2 / 6.0 * (1.0 - c * c * c);
  };
  l.d1 = [k2](double t, double, double) {
    const double u = t * t / k2;
    if (u >= 1.0) return 0.0;
    return t * (1.0 - u) * (1.0 - u);
  };
  l.d2 = [k2](double t, double, double) {
    const double u = t * t / k2;
    if (u >= 1.0) return 0.0;
    return (1.0 - u) * (1.0 - 5.0 * u);
  };
  l.curvature_min = 0.8;
  l.curvature_max = 1.0;
  l.d1_sup = 16.0 * kappa / (25.0 * std::sqrt(5.0));
  l.d1_lipschitz = 1.0;  // sup |d2|
  l.kinks = [kappa](double, double) {
    return std::vector<double>{-kappa, kappa};
  };
  // (1 - u)(1 - 5u) = c  <=>  5u^2 - 6u + 1 - c = 0,  u in [0, 1).
  l.d2_level_set = [kappa](double c, double, double) {
    std::vector<double> out;
    const double disc = 4.0 + 5.0 * c;
    if (disc < 0.0) return out;
    const double r = std::sqrt(disc);
    for (double u : {(3.0 - r) / 5.0, (3.0 + r) / 5.0}) {
      if (u < 0.0 || u >= 1.0) continue;
      const double t = kappa * std::sqrt(u);
      out.push_back(-t);
      if (t > 0.0) out.push_back(t);
    }
    return out;
  };
  return l;
}

LossSpec quadratic_loss() {
  LossSpec l;
  l.name = "quadratic";
  l.eval = [](double t, double, double) { return 0.5 * t * t; };
  l.d1 = [](double t, double, double) { return t; };
  l.d2 = [](double, double, double) { return 1.0; };
  l.curvature_min = 0.0;
  l.curvature_max = 1.0;
  l.d1_sup = kInf;
  l.d1_lipschitz = 1.0;
  l.kinks = [](double, double) { return std::vector<double>{}; };
  l.d2_level_set = [](double, double, double) { return std::vector<double>{}; };
  return l;
}

LossSpec huber_loss(double delta) {
  if (!(delta > 0.0)) throw InvalidParameter("huber_loss: delta must be positive");
  LossSpec l;
  l.name = "huber";
  l.eval = [delta](double t, double, double) {
    const double a = std::abs(t);
    return a <= delta ? 0.5 * t * t : delta * (a - 0.5 * delta);
  };
  l.d1 = [delta](double t, double, double) {
    return std::abs(t) <= delta ? t : std::copysign(delta, t);
  };
  l.d2 = [delta](double t, double, double) {
    return std::abs(t) <= delta ? 1.0 : 0.0;
  };
  l.curvature_min = 0.0;
  l.curvature_max = 1.0;
  l.d1_sup = delta;
  l.d1_lipschitz = 1.0;
  l.kinks = [delta](double, double) {
    return std::vector<double>{-delta, delta};
  };
  return l;
}

LossSpec m_estimation_adapter(const LossSpec& base) {
  LossSpec l = base;
  l.name = "m(" + base.name + ")";
  // Gradient of base'(v - v0 - w) in (v, v0) is base'' * (1, -1).
  l.d1_lipschitz = std::sqrt(2.0) * base.d1_lipschitz;
  auto shift = [](LossSpec::Fn f) {
    return [f = std::move(f)](double v, double v0, double w) {
      return f(v - v0 - w, 0.0, 0.0);
    };
  };
  l.eval = shift(base.eval);
  l.d1 = shift(base.d1);
  l.d2 = shift(base.d2);
  if (base.kinks) {
    l.kinks = [k = base.kinks](double v0, double w) {
      auto pts = k(0.0, 0.0);
      for (double& p : pts) p += v0 + w;
      return pts;
    };
  }
  if (base.d2_level_set) {
    l.d2_level_set = [k = base.d2_level_set](double c, double v0, double w) {
      auto pts = k(c, 0.0, 0.0);
      for (double& p : pts) p += v0 + w;
      return pts;
    };
  }
  return l;
}

double NoiseSpec::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) m += probs[i] * atoms[i];
  return m;
}

double NoiseSpec::second_moment() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    m += probs[i] * atoms[i] * atoms[i];
  return m;
}

double NoiseSpec::variance() const {
  const double m = mean();
  return second_moment() - m * m;
}

NoiseSpec make_noise(std::vector<double> atoms, std::vector<double> probs) {
  if (atoms.empty() || atoms.size() != probs.size())
    throw InvalidParameter("make_noise: atoms and probabilities must match");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(atoms[i]))
      throw InvalidParameter("make_noise: bad atom or negative weight");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw InvalidParameter("make_noise: weights must sum to 1");
  return NoiseSpec{std::move(atoms), std::move(probs)};
}

NoiseSpec contaminated_noise(double snr, double r00) {
  if (!(snr > 0.0) || !(r00 > 0.0))
    throw InvalidParameter("contaminated_noise: snr and r00 must be positive");
  const double a = std::sqrt(r00 / (2.98 * snr));
  return make_noise({-10.0 * a, -a, a, 10.0 * a}, {0.01, 0.49, 0.49, 0.01});
}

NoiseSpec point_mass_noise(double w) { return make_noise({w}, {1.0}); }

void validate(const ProblemConfig& cfg) {
  if (!(cfg.alpha > 1.0) || !std::isfinite(cfg.alpha))
    throw InvalidParameter("alpha must be > 1");
  if (!(cfg.r00 > 0.0)) throw InvalidParameter("r00 must be positive");
  if (!(cfg.lambda >= 0.0)) throw InvalidParameter("lambda must be >= 0");
  if (!cfg.loss.eval || !cfg.loss.d1 || !cfg.loss.d2)
    throw InvalidParameter("loss is not set");
  if (cfg.noise.atoms.empty()) throw InvalidParameter("noise is not set");
  const double var = cfg.noise.variance();
  // A noiseless problem has no finite snr; accept it without the check.
  if (var > 0.0) {
    if (!(cfg.snr > 0.0)) throw InvalidParameter("snr must be positive");
    if (std::abs(cfg.snr * var - cfg.r00) > 1e-10 * cfg.r00)
      throw InvalidParameter("snr * Var(w) must equal r00");
  }
}

ProblemConfig tukey_problem(double alpha, double snr, double kappa,
                            double r00) {
  ProblemConfig cfg;
  cfg.alpha = alpha;
  cfg.snr = snr;
  cfg.r00 = r00;
  cfg.loss = tukey_loss(kappa);
  cfg.noise = contaminated_noise(snr, r00);
  validate(cfg);
  return cfg;
}

}  // namespace landscape
