#include "landscape/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "landscape/errors.hpp"

namespace landscape {

namespace {

// Golub-Welsch for a symmetric Jacobi matrix with zero diagonal.
std::vector<double> jacobi_nodes(const Eigen::VectorXd& offdiag, int n) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag, Eigen::EigenvaluesOnly);
  std::vector<double> x(es.eigenvalues().data(),
                        es.eigenvalues().data() + n);
  std::sort(x.begin(), x.end());
  return x;
}

void symmetrize(QuadratureGrid& g) {
  const int n = g.order;
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (g.nodes[j] - g.nodes[i]);
    const double w = 0.5 * (g.weights[i] + g.weights[j]);
    g.nodes[i] = -x;
    g.nodes[j] = x;
    g.weights[i] = g.weights[j] = w;
  }
  if (n % 2 == 1) g.nodes[n / 2] = 0.0;
}

}  // namespace

QuadratureGrid build_hermite(int order) {
  if (order < 2) throw InvalidParameter("build_hermite: order must be >= 2");
  const int n = order;
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  QuadratureGrid g;
  g.order = n;
  g.nodes = jacobi_nodes(off, n);
  g.weights.resize(n);
  // Newton polish on the orthonormal recurrence; weight = 1 / sum psi_k^2.
  for (int i = 0; i < n; ++i) {
    double x = g.nodes[i];
    double sum = 0.0;
    for (int it = 0; it < 3; ++it) {
      double pm = 0.0, p = 1.0;
      sum = 1.0;
      for (int k = 0; k < n; ++k) {
        const double next =
            (x * p - std::sqrt(static_cast<double>(k)) * pm) /
            std::sqrt(static_cast<double>(k + 1));
        pm = p;
        p = next;
        if (k + 1 < n) sum += p * p;
      }
      // p = psi_n(x), pm = psi_{n-1}(x), psi_n' = sqrt(n) psi_{n-1}.
      const double step = p / (std::sqrt(static_cast<double>(n)) * pm);
      if (it < 2) x -= step;
    }
    g.nodes[i] = x;
    g.weights[i] = 1.0 / sum;
  }
  symmetrize(g);
  double total = 0.0;
  for (double w : g.weights) total += w;
  for (double& w : g.weights) w /= total;
  return g;
}

QuadratureGrid build_legendre(int order) {
  if (order < 1) throw InvalidParameter("build_legendre: order must be >= 1");
  const int n = order;
  QuadratureGrid g;
  g.order = n;
  if (n == 1) {
    g.nodes = {0.0};
    g.weights = {2.0};
    return g;
  }
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  g.nodes = jacobi_nodes(off, n);
  g.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = g.nodes[i];
    double dp = 1.0;
    for (int it = 0; it < 3; ++it) {
      double pm = 1.0, p = x;
      for (int k = 2; k <= n; ++k) {
        const double next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * pm) / k;
        pm = p;
        p = next;
      }
      dp = n * (x * p - pm) / (x * x - 1.0);
      if (it < 2) x -= p / dp;
    }
    g.nodes[i] = x;
    g.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  symmetrize(g);
  return g;
}

JointGrid make_joint_grid(const NoiseSpec& noise, int order, int order2d) {
  if (noise.atoms.empty()) throw InvalidParameter("make_joint_grid: empty noise");
  JointGrid g;
  g.order = order;
  g.gauss = build_hermite(order);
  g.gauss2d = build_hermite(order2d);
  g.legendre = build_legendre(std::max(4, order / 20));
  g.noise = noise;
  return g;
}

double expect_joint(const std::function<double(double, double)>& f,
                    double scale, const JointGrid& grid) {
  if (!(scale >= 0.0)) throw InvalidParameter("expect_joint: scale must be >= 0");
  double total = 0.0;
  for (std::size_t j = 0; j < grid.noise.size(); ++j) {
    const double w = grid.noise.atoms[j];
    double inner = 0.0;
    for (int i = 0; i < grid.gauss.order; ++i) {
      const double g = scale * grid.gauss.nodes[i];
      const double v = f(g, w);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "expect_joint: non-finite integrand at g=" << g << " w=" << w;
        throw DomainError(os.str());
      }
      inner += grid.gauss.weights[i] * v;
    }
    total += grid.noise.probs[j] * inner;
  }
  return total;
}

double expect_joint(const std::function<double(double, double)>& f,
                    double scale, const JointGrid& grid,
                    const std::function<std::vector<double>(double)>& breaks) {
  if (!(scale > 0.0)) return expect_joint(f, scale, grid);
  double total = 0.0;
  for (std::size_t j = 0; j < grid.noise.size(); ++j) {
    const double w = grid.noise.atoms[j];
    const Rule r = gaussian_rule(0.0, scale, breaks(w), grid.legendre, 10.0, 12);
    double inner = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double v = f(r.nodes[i], w);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "expect_joint: non-finite integrand at g=" << r.nodes[i] << " w=" << w;
        throw DomainError(os.str());
      }
      inner += r.weights[i] * v;
    }
    total += grid.noise.probs[j] * inner;
  }
  return total;
}

double expect_bivariate(
    const std::function<double(double, double, double)>& f,
    const Eigen::Matrix2d& R, const JointGrid& grid) {
  if (std::abs(R(0, 1) - R(1, 0)) > 1e-12 * (1.0 + R.cwiseAbs().maxCoeff()))
    throw InvalidParameter("expect_bivariate: R must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(R);
  const Eigen::Vector2d ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-12 * (1.0 + std::abs(ev.maxCoeff())))
    throw InvalidParameter("expect_bivariate: R is not positive semidefinite");
  const Eigen::Matrix2d L =
      es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const auto& q = grid.gauss2d;
  double total = 0.0;
  for (std::size_t j = 0; j < grid.noise.size(); ++j) {
    const double w = grid.noise.atoms[j];
    double inner = 0.0;
    for (int a = 0; a < q.order; ++a) {
      for (int b = 0; b < q.order; ++b) {
        const Eigen::Vector2d x =
            L * Eigen::Vector2d(q.nodes[a], q.nodes[b]);
        const double v = f(x(0), x(1), w);
        if (!std::isfinite(v))
          throw DomainError("expect_bivariate: non-finite integrand");
        inner += q.weights[a] * q.weights[b] * v;
      }
    }
    total += grid.noise.probs[j] * inner;
  }
  return total;
}

Rule interval_rule(double a, double b, std::vector<double> breaks,
                   double max_panel, const QuadratureGrid& legendre) {
  Rule r;
  if (!(b > a)) return r;
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> pts;
  for (double x : breaks) {
    if (x < a || x > b) continue;
    if (pts.empty() || x - pts.back() > 1e-14 * (1.0 + std::abs(x)))
      pts.push_back(x);
  }
  const std::size_t p = legendre.nodes.size();
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double lo = pts[k], hi = pts[k + 1];
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_panel)));
    const double h = (hi - lo) / panels;
    for (int m = 0; m < panels; ++m) {
      const double c = lo + (m + 0.5) * h;
      for (std::size_t i = 0; i < p; ++i) {
        r.nodes.push_back(c + 0.5 * h * legendre.nodes[i]);
        r.weights.push_back(0.5 * h * legendre.weights[i]);
      }
    }
  }
  return r;
}

double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Rule gaussian_rule(double mean, double sd, const std::vector<double>& breaks,
                   const QuadratureGrid& legendre, double half_width,
                   int grade) {
  if (!(sd > 0.0)) throw InvalidParameter("gaussian_rule: sd must be positive");
  const double a = mean - half_width * sd, b = mean + half_width * sd;
  std::vector<double> pts;
  for (double x : breaks)
    if (x > a && x < b) pts.push_back(x);
  std::sort(pts.begin(), pts.end());
  double width = sd;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double gap = pts[i] - pts[i - 1];
    if (gap > 0.0) width = std::min(width, 0.5 * gap);
  }
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    double h = width;
    for (int k = 0; k < grade; ++k) {
      h *= 0.5;
      pts.push_back(pts[i] - h);
      pts.push_back(pts[i] + h);
    }
  }
  Rule r = interval_rule(a, b, std::move(pts), width, legendre);
  const double var = sd * sd;
  for (std::size_t i = 0; i < r.size(); ++i)
    r.weights[i] *= normal_pdf(r.nodes[i] - mean, var);
  return r;
}

}  // namespace landscape
