#include "landscape/erm.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "landscape/errors.hpp"

namespace landscape {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Row and column blocks are fixed-size so results do not depend on the
// thread count.
constexpr Eigen::Index kBlock = 64;

std::size_t n_blocks(Eigen::Index n) {
  return static_cast<std::size_t>((n + kBlock - 1) / kBlock);
}

void block_range(std::size_t b, Eigen::Index n, Eigen::Index& start,
                 Eigen::Index& len) {
  start = static_cast<Eigen::Index>(b) * kBlock;
  len = std::min(kBlock, n - start);
}

// X theta - y.
Eigen::VectorXd residual(const Eigen::VectorXd& theta, const Dataset& data,
                         Execution ex) {
  if (ex == Execution::serial) return data.X * theta - data.y;
  const Eigen::Index n = data.n();
  Eigen::VectorXd r(n);
  for_each_index(n_blocks(n), ex, [&](std::size_t b) {
    Eigen::Index s, len;
    block_range(b, n, s, len);
    r.segment(s, len).noalias() = data.X.middleRows(s, len) * theta;
    r.segment(s, len) -= data.y.segment(s, len);
  });
  return r;
}

// X' v.
Eigen::VectorXd xt_times(const Dataset& data, const Eigen::VectorXd& v,
                         Execution ex) {
  if (ex == Execution::serial) return data.X.transpose() * v;
  const Eigen::Index d = data.d();
  Eigen::VectorXd out(d);
  for_each_index(n_blocks(d), ex, [&](std::size_t b) {
    Eigen::Index s, len;
    block_range(b, d, s, len);
    out.segment(s, len).noalias() = data.X.middleCols(s, len).transpose() * v;
  });
  return out;
}

// X u.
Eigen::VectorXd x_times(const Dataset& data, const Eigen::VectorXd& u,
                        Execution ex) {
  if (ex == Execution::serial) return data.X * u;
  const Eigen::Index n = data.n();
  Eigen::VectorXd out(n);
  for_each_index(n_blocks(n), ex, [&](std::size_t b) {
    Eigen::Index s, len;
    block_range(b, n, s, len);
    out.segment(s, len).noalias() = data.X.middleRows(s, len) * u;
  });
  return out;
}

// f(r_i) elementwise.
Eigen::VectorXd apply(const Eigen::VectorXd& r, const LossSpec::Fn& f,
                      Execution ex) {
  const Eigen::Index n = r.size();
  Eigen::VectorXd out(n);
  for_each_index(n_blocks(n), ex, [&](std::size_t b) {
    Eigen::Index s, len;
    block_range(b, n, s, len);
    for (Eigen::Index i = s; i < s + len; ++i) out[i] = f(r[i], 0.0, 0.0);
  });
  return out;
}

double mean_loss(const Eigen::VectorXd& r, const LossSpec& loss) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) acc += loss.eval(r[i], 0.0, 0.0);
  return acc / static_cast<double>(r.size());
}

// Mean of l(r - t u) - l(r), each term as the integral of l' along the
// segment (3-point Gauss-Legendre per piece between kinks). Exact for
// piecewise polynomial l' up to degree 5 and accurate relative to the
// change itself, so decreases near the gradient tolerance keep their sign.
double mean_loss_change(const Eigen::VectorXd& r, const Eigen::VectorXd& u,
                        double t, const LossSpec& loss,
                        const std::vector<double>& kinks) {
  static const double xs[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double ws[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  auto piece = [&](double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) acc += ws[k] * loss.d1(mid + half * xs[k], 0.0, 0.0);
    return half * acc;
  };
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double a = r[i], b = r[i] - t * u[i];
    const double lo = std::min(a, b), hi = std::max(a, b);
    double acc = 0.0, start = lo;
    for (double k : kinks) {
      if (k > start && k < hi) {
        acc += piece(start, k);
        start = k;
      }
    }
    acc += piece(start, hi);
    total += b >= a ? acc : -acc;
  }
  return total / static_cast<double>(r.size());
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix(seed ^ splitmix(stream + 0x632be59bd9b4e019ULL))) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return splitmix(key_ ^ splitmix(counter));
}

double CounterRng::uniform(std::uint64_t counter) const {
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Dataset gen_data(int n, int d, const ProblemConfig& cfg, std::uint64_t seed,
                 std::optional<std::uint64_t> theta_seed) {
  if (n < 1 || d < 1) throw InvalidParameter("gen_data: n, d >= 1");
  if (cfg.noise.size() == 0) throw InvalidParameter("gen_data: empty noise");
  Dataset data;
  data.seed = seed;
  const auto nn = static_cast<std::uint64_t>(n);
  const auto dd = static_cast<std::uint64_t>(d);

  const CounterRng xr(seed, static_cast<std::uint64_t>(RngStream::design));
  data.X.resize(n, d);
  for (std::uint64_t j = 0; j < dd; ++j)
    for (std::uint64_t i = 0; i < nn; ++i)
      data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          xr.normal(i * dd + j);

  const CounterRng tr(theta_seed.value_or(seed),
                      static_cast<std::uint64_t>(RngStream::theta0));
  data.theta0.resize(d);
  for (std::uint64_t j = 0; j < dd; ++j)
    data.theta0[static_cast<Eigen::Index>(j)] = tr.normal(j);
  data.theta0 *= std::sqrt(cfg.r00) / data.theta0.norm();

  const CounterRng wr(seed, static_cast<std::uint64_t>(RngStream::noise));
  std::vector<double> cum(cfg.noise.probs.size());
  std::partial_sum(cfg.noise.probs.begin(), cfg.noise.probs.end(), cum.begin());
  data.w.resize(n);
  for (std::uint64_t i = 0; i < nn; ++i) {
    const double u = wr.uniform(i) * cum.back();
    std::size_t k = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    k = std::min(k, cum.size() - 1);
    data.w[static_cast<Eigen::Index>(i)] = cfg.noise.atoms[k];
  }
  data.y = data.X * data.theta0 + data.w;
  return data;
}

Eigen::VectorXd sphere_point(int d, std::uint64_t seed, std::uint64_t index) {
  if (d < 1) throw InvalidParameter("sphere_point: d >= 1");
  const CounterRng rng(seed, static_cast<std::uint64_t>(RngStream::init));
  const auto dd = static_cast<std::uint64_t>(d);
  Eigen::VectorXd v(d);
  for (std::uint64_t j = 0; j < dd; ++j)
    v[static_cast<Eigen::Index>(j)] = rng.normal(index * dd + j);
  return v / v.norm();
}

RiskEval risk_grad(const Eigen::VectorXd& theta, const Dataset& data,
                   const ProblemConfig& cfg, Execution ex) {
  const double n = static_cast<double>(data.n());
  const Eigen::VectorXd r = residual(theta, data, ex);
  const Eigen::VectorXd l = apply(r, cfg.loss.eval, ex);
  const Eigen::VectorXd l1 = apply(r, cfg.loss.d1, ex);
  RiskEval out;
  out.risk = l.sum() / n + 0.5 * cfg.lambda * theta.squaredNorm();
  out.grad = xt_times(data, l1, ex) / n + cfg.lambda * theta;
  return out;
}

double risk(const Eigen::VectorXd& theta, const Dataset& data,
            const ProblemConfig& cfg, Execution ex) {
  const Eigen::VectorXd r = residual(theta, data, ex);
  return apply(r, cfg.loss.eval, ex).sum() / static_cast<double>(data.n()) +
         0.5 * cfg.lambda * theta.squaredNorm();
}

Eigen::MatrixXd hessian(const Eigen::VectorXd& theta, const Dataset& data,
                        const ProblemConfig& cfg, Execution ex) {
  const double n = static_cast<double>(data.n());
  const Eigen::VectorXd r = residual(theta, data, ex);
  const Eigen::VectorXd D = apply(r, cfg.loss.d2, ex);
  const Eigen::Index d = data.d();
  Eigen::MatrixXd H(d, d);
  if (ex == Execution::serial) {
    H.noalias() = data.X.transpose() * (D.asDiagonal() * data.X);
  } else {
    for_each_index(n_blocks(d), ex, [&](std::size_t b) {
      Eigen::Index s, len;
      block_range(b, d, s, len);
      const Eigen::MatrixXd DX = D.asDiagonal() * data.X.middleCols(s, len);
      H.middleCols(s, len).noalias() = data.X.transpose() * DX;
    });
  }
  H /= n;
  H.diagonal().array() += cfg.lambda;
  return H;
}

Eigen::VectorXd hessian_vec(const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& u, const Dataset& data,
                            const ProblemConfig& cfg, Execution ex) {
  const Eigen::VectorXd r = residual(theta, data, ex);
  const Eigen::VectorXd D = apply(r, cfg.loss.d2, ex);
  const Eigen::VectorXd Xu = x_times(data, u, ex);
  return xt_times(data, D.cwiseProduct(Xu), ex) /
             static_cast<double>(data.n()) +
         cfg.lambda * u;
}

GDResult gd_run(const Dataset& data, const ProblemConfig& cfg,
                const GDConfig& gd, const Eigen::VectorXd& init) {
  if (!(gd.grad_tol > 0.0)) throw InvalidParameter("gd_run: grad_tol > 0");
  if (!(gd.backtrack_base > 0.0 && gd.backtrack_base < 1.0))
    throw InvalidParameter("gd_run: backtrack_base in (0, 1)");
  if (gd.backtrack_powers < 0 || gd.max_iters < 0)
    throw InvalidParameter("gd_run: negative iteration counts");
  if (init.size() != data.d()) throw InvalidParameter("gd_run: init size");

  const double n = static_cast<double>(data.n());
  const double lam = cfg.lambda;
  const LossSpec& loss = cfg.loss;
  std::vector<double> kinks = loss.kinks_at(0.0, 0.0);
  std::sort(kinks.begin(), kinks.end());
  GDResult res;
  Eigen::VectorXd theta = init;
  Eigen::VectorXd r = residual(theta, data, gd.ex);
  auto gradient = [&]() {
    return Eigen::VectorXd(
        xt_times(data, apply(r, loss.d1, gd.ex), gd.ex) / n + lam * theta);
  };
  Eigen::VectorXd g = gradient();
  if (gd.record_risk)
    res.risk_history.push_back(mean_loss(r, loss) +
                               0.5 * lam * theta.squaredNorm());

  int it = 0;
  double gnorm = g.norm();
  while (gnorm > gd.grad_tol && it < gd.max_iters) {
    const Eigen::VectorXd Xg = x_times(data, g, gd.ex);
    const double tg = theta.dot(g), gg = g.squaredNorm();
    double step = 1.0;
    bool accepted = false;
    for (int j = 0; j <= gd.backtrack_powers; ++j) {
      const double change = mean_loss_change(r, Xg, step, loss, kinks) +
                            0.5 * lam * (step * step * gg - 2.0 * step * tg);
      if (change < 0.0) {
        accepted = true;
        break;
      }
      step *= gd.backtrack_base;
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    theta -= step * g;
    ++it;
    if (gd.refresh_every > 0 && it % gd.refresh_every == 0)
      r = residual(theta, data, gd.ex);
    else
      r -= step * Xg;
    g = gradient();
    gnorm = g.norm();
    if (gd.record_risk)
      res.risk_history.push_back(mean_loss(r, loss) +
                                 0.5 * lam * theta.squaredNorm());
  }

  r = residual(theta, data, gd.ex);
  g = gradient();
  res.theta_hat = theta;
  res.iterations = it;
  res.final_grad_norm = g.norm();
  res.train_loss = mean_loss(r, loss) + 0.5 * lam * theta.squaredNorm();
  res.est_error = (theta - data.theta0).norm();
  return res;
}

GDResult gd_run(const Dataset& data, const ProblemConfig& cfg,
                const GDConfig& gd) {
  return gd_run(data, cfg, gd,
                sphere_point(static_cast<int>(data.d()), gd.seed, 0));
}

std::vector<double> hessian_spectrum(const Dataset& data,
                                     const ProblemConfig& cfg,
                                     const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd H = hessian(theta, data, cfg, Execution::parallel);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericError("hessian_spectrum: eigensolver failed");
  const Eigen::VectorXd ev = es.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

ClusterReport cluster_solutions(const std::vector<Eigen::VectorXd>& thetas,
                                double threshold) {
  const int M = static_cast<int>(thetas.size());
  if (M < 1) throw InvalidParameter("cluster_solutions: no solutions");
  ClusterReport rep;
  rep.threshold = threshold;
  rep.gram.resize(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j <= i; ++j)
      rep.gram(i, j) = rep.gram(j, i) = thetas[i].dot(thetas[j]);

  std::vector<int> parent(M);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < i; ++j) {
      const double dist = (thetas[i] - thetas[j]).norm();
      rep.max_pair_dist = std::max(rep.max_pair_dist, dist);
      const double scale = std::sqrt(thetas[i].norm() * thetas[j].norm());
      const bool close = scale > 0.0 ? dist / scale < threshold : dist == 0.0;
      if (close) parent[find(i)] = find(j);
    }
  }
  rep.labels.assign(M, -1);
  int next = 0;
  std::vector<int> root_label(M, -1);
  for (int i = 0; i < M; ++i) {
    const int root = find(i);
    if (root_label[root] < 0) root_label[root] = next++;
    rep.labels[i] = root_label[root];
  }
  rep.n_clusters = next;
  return rep;
}

ClusterReport multi_init_experiment(const Dataset& data,
                                    const ProblemConfig& cfg,
                                    const GDConfig& gd, int M, double threshold,
                                    Execution ex) {
  if (M < 2) throw InvalidParameter("multi_init_experiment: M >= 2");
  std::vector<Eigen::VectorXd> inits;
  for (int m = 0; m < M; ++m)
    inits.push_back(sphere_point(static_cast<int>(data.d()), gd.seed,
                                 static_cast<std::uint64_t>(m)));
  return multi_init_experiment(data, cfg, gd, inits, threshold, ex);
}

ClusterReport multi_init_experiment(const Dataset& data,
                                    const ProblemConfig& cfg,
                                    const GDConfig& gd,
                                    const std::vector<Eigen::VectorXd>& inits,
                                    double threshold, Execution ex) {
  if (inits.size() < 2) throw InvalidParameter("multi_init_experiment: M >= 2");
  std::vector<GDResult> runs(inits.size());
  GDConfig inner = gd;
  inner.ex = Execution::serial;
  for_each_index(inits.size(), ex, [&](std::size_t m) {
    runs[m] = gd_run(data, cfg, inner, inits[m]);
  });
  std::vector<Eigen::VectorXd> thetas;
  for (const auto& r : runs) thetas.push_back(r.theta_hat);
  ClusterReport rep = cluster_solutions(thetas, threshold);
  rep.runs = std::move(runs);
  return rep;
}

}  // namespace landscape
