#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "landscape/loss.hpp"
#include "landscape/parallel.hpp"
#include "landscape/quadrature.hpp"
#include "landscape/spectral.hpp"

namespace landscape {

struct RateMultipliers {
  double gamma = 0.0;
  double xi = 0.0;
  double eta = 0.0;
  std::array<double, 2> beta{0.0, 0.0};  // coefficients of v l' and v0 l'
  double zeta = 0.0;                     // >= 0
};

// psi(v, v0, w), the statistic whose mean is pinned to L.
using PsiFn = std::function<double(double v, double v0, double w)>;

// How the psi constraint enters the dual: E psi = L (eta free), E psi <= L
// (eta <= 0) or absent (eta = 0).
enum class PsiConstraint { equality, upper_bound, none };

struct RateOptions {
  double a_r = 2.0;   // radius A_R
  double a_l = 0.05;  // lower bound a_L on E[l'^2]^{1/2}
  // Outer s range is (0, s_cap / L_min]; 0 < s_cap < 1.
  double s_cap = 0.999;
  int s_scan = 16;
  int starts = 4;
  int brent_bits = 14;
  double grad_tol = 1e-8;
  int max_newton = 200;
  // The inner sup is reported as +inf once the dual value exceeds this.
  double value_cap = 100.0;
  // Gauss-Hermite order over v0 in the two-dimensional form.
  int conditional_order = 24;
};

// Tabulated integrand of X for fixed s and Gaussian base measure: per noise
// atom, nodes with log(weight * (1 + s l'')) and the features
// (l'^2, v l', v0 l', psi, r, -r^2), r = s l'' / (1 + s l'').
class XTable {
 public:
  static constexpr int kFeatures = 6;

  // Base measure v ~ N(0, rho^2), loss l0(v - w), v0 = 0.
  static XTable scalar(double s, double rho, const ProblemConfig& cfg,
                       const JointGrid& grid, const PsiFn& psi = {});
  // Base measure (v, v0) ~ N(0, R) for a trivariate loss.
  static XTable general(double s, const Eigen::Matrix2d& R,
                        const ProblemConfig& cfg, const LossSpec& loss,
                        const JointGrid& grid, const PsiFn& psi = {},
                        int conditional_order = 24);

  // E_w log X at the given multipliers.
  double log_x(const RateMultipliers& m) const;
  // E_w log X with its gradient and Hessian in feature order.
  double log_x(const Eigen::Matrix<double, kFeatures, 1>& x,
               Eigen::Matrix<double, kFeatures, 1>* grad,
               Eigen::Matrix<double, kFeatures, kFeatures>* hess) const;

  double s() const { return s_; }
  bool two_dimensional() const { return two_d_; }
  bool d1_bounded() const { return d1_bounded_; }
  double schur() const { return schur_; }
  double cond_coef() const { return cond_coef_; }

 private:
  struct Atom {
    double prob = 0.0;
    Eigen::Matrix<double, Eigen::Dynamic, kFeatures> features;
    Eigen::VectorXd base;
  };
  std::vector<Atom> atoms_;
  double s_ = 0.0;
  double schur_ = 0.0;
  double cond_coef_ = 0.0;
  bool two_d_ = false;
  bool d1_bounded_ = true;
};

Eigen::Matrix<double, XTable::kFeatures, 1> to_vector(const RateMultipliers& m);
RateMultipliers to_multipliers(const Eigen::Matrix<double, XTable::kFeatures, 1>& x);

// E_w log X for the scalar reduction. Throws DomainError when gamma > 0 and
// l' is unbounded.
double x_integral(double s, double rho, const RateMultipliers& m,
                  const ProblemConfig& cfg, const JointGrid& grid,
                  const PsiFn& psi = {});
double x_integral(double s, const Eigen::Matrix2d& R, const RateMultipliers& m,
                  const ProblemConfig& cfg, const LossSpec& loss,
                  const JointGrid& grid, const PsiFn& psi = {});

// Right-hand sides of the moment constraints.
struct DualTargets {
  double alpha = 2.0;
  double g = 0.0;
  double L = 0.0;
  double lambda = 0.0;
  double r11 = 0.0;
  double r10 = 0.0;
};

// (xi - zeta)/alpha + gamma g - lambda beta.(r11, r10) + eta L - E_w log X.
double dual_objective(const XTable& table, const DualTargets& t,
                      const RateMultipliers& m);

struct InnerSupResult {
  double value = kInf;
  RateMultipliers mult;
  bool feasible = true;
  bool converged = false;
  int iterations = 0;
  double grad_norm = kInf;
};

// Maximizes dual_objective over the multipliers: projected Newton with
// zeta >= 0, eta per mode, and gamma <= 0 when l' is unbounded. A diverging
// ascent is reported as value +inf with feasible = false.
InnerSupResult inner_sup(const XTable& table, const DualTargets& t,
                         PsiConstraint mode, const RateOptions& opts = {},
                         std::optional<RateMultipliers> start = std::nullopt);

struct PhiResult {
  double value = kInf;
  double s = 0.0;
  double g = 0.0;
  RateMultipliers mult;
  bool feasible = false;
};

// Hint for the outer search, typically from the fixed point.
struct OuterHint {
  double s = 0.0;
  double g = 0.0;
};

// Scalar M-estimation form with lambda = 0 and psi = l0(v - w):
// inf over (s, g) of the sup over multipliers. mode selects Phi_tuk(rho; L)
// (equality), the inf over iota <= L (upper_bound) or over all iota (none).
PhiResult phi_scalar(double rho, double L, PsiConstraint mode,
                     const ProblemConfig& cfg, const JointGrid& grid,
                     const RateOptions& opts = {},
                     std::optional<OuterHint> hint = std::nullopt);

double phi_tuk(double rho, double iota, const ProblemConfig& cfg,
               const JointGrid& grid, const RateOptions& opts = {},
               std::optional<OuterHint> hint = std::nullopt);

// General form over (s, g) for a trivariate loss and covariance R.
PhiResult phi_fin(const Eigen::Matrix2d& R, double L, PsiConstraint mode,
                  const ProblemConfig& cfg, const LossSpec& loss,
                  const PsiFn& psi, const JointGrid& grid,
                  const RateOptions& opts = {},
                  std::optional<OuterHint> hint = std::nullopt);

// R for the M-estimation reduction: (v, v0) with v - v0 ~ N(0, rho^2)
// independent of v0 ~ N(0, r00).
Eigen::Matrix2d reduction_covariance(double rho, double r00);

struct RateSurface {
  std::vector<double> rho_grid;
  std::vector<double> iota_grid;
  Eigen::MatrixXd phi;           // phi(i, j) = Phi_tuk(rho_i; iota_j)
  std::vector<double> phi_inf;   // min over the iota grid
  std::vector<double> phi_zero;  // Phi_0, constraint E psi <= iota0
  double iota0 = 0.0;
  double rho_star = 0.0;
  bool iota0_found = false;
};

struct CurveOptions {
  RateOptions rate;
  double iota_tol = 1e-3;
  // Numerical zero for the sign test that defines iota0.
  double zero_tol = 1e-4;
  Execution ex = Execution::parallel;
};

RateSurface phi_curves(const ProblemConfig& cfg, const JointGrid& grid,
                       const std::vector<double>& rho_grid,
                       const std::vector<double>& iota_grid,
                       const CurveOptions& opts = {});

struct TrivializationReport {
  double alpha0 = 0.0;
  double tau0 = 0.0;
  bool in_T = false;
  double b_star = 0.0;
  double g_star = 0.0;
  // Phi_mu + G_star - B_star / alpha - log(alpha) / alpha with Phi_mu = 0.
  double lower_bound = 0.0;
  double alpha_star = kInf;  // +inf when E l''(beta Z - w) <= 0 somewhere
};

// nu is given through a curvature measure; R through rho in the reduction.
TrivializationReport trivialization_diagnostics(const ProblemConfig& cfg,
                                                double rho,
                                                const CurvatureMeasure& nu,
                                                const JointGrid& grid,
                                                const RateOptions& opts = {});

// Smallest alpha beyond which the large-alpha certificate holds for every
// beta in [a_L / (2 L), A_R] (beta grid of n_beta points).
double alpha_star_certificate(const ProblemConfig& cfg, const JointGrid& grid,
                              const RateOptions& opts = {}, int n_beta = 64);

double f_nu(double x);

// nu in the prox family: v = w + prox_{l0}(rho' G - w; s').
struct ProxFamily {
  double rho = 0.0;
  double s = 0.0;
};

struct PhiMeasures {
  double kl_conditional = 0.0;  // KL(nu_{.|w} || pi_{R,s})
  double kl_v0 = 0.0;           // zero in the reduction
  double f_term = 0.0;          // F(alpha s^2 E l'^2 / Schur) / (2 alpha)
  double value = 0.0;           // sum of the three
  // -E log(1 + s l'') + log(alpha e s^2 E l'^2 / Schur)/(2 alpha)
  // + KL(nu_{.|w} || N(0, rho^2)); equals value when E[v l'] = 0.
  double direct = 0.0;
  bool replicon_boundary = false;  // s within 1e-12 of the replicon edge
};

// Phi_nu at (R from rho, s). Throws DomainError when s is outside S_0(nu).
PhiMeasures phi_measures(const ProxFamily& nu, double rho, double s,
                         const ProblemConfig& cfg, const JointGrid& grid);

// (1/alpha) KL(N(a t0, q) || N(b t0, Schur)) averaged over t0 ~ N(0, r00),
// b = r10 / r00.
double phi_mu_gaussian(double a, double q, const Eigen::Matrix2d& R,
                       double alpha);

}  // namespace landscape
