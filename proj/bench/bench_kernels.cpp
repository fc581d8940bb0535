#include <benchmark/benchmark.h>

#include <map>

#include "landscape/erm.hpp"

using namespace landscape;

namespace {

struct Fixture {
  ProblemConfig cfg;
  Dataset data;
  Eigen::VectorXd theta;
};

const Fixture& fixture(int d) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(d);
  if (it == cache.end()) {
    Fixture f;
    f.cfg = tukey_problem(8.0, 2.73);
    f.data = gen_data(8 * d, d, f.cfg, 1);
    f.theta = f.data.theta0 + 0.2 * sphere_point(d, 2, 0);
    it = cache.emplace(d, std::move(f)).first;
  }
  return it->second;
}

Execution mode(const benchmark::State& st) {
  return st.range(1) ? Execution::parallel : Execution::serial;
}

void BM_RiskGrad(benchmark::State& st) {
  const auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st)
    benchmark::DoNotOptimize(risk_grad(f.theta, f.data, f.cfg, mode(st)).risk);
}

void BM_HessianVec(benchmark::State& st) {
  const auto& f = fixture(static_cast<int>(st.range(0)));
  const Eigen::VectorXd u = sphere_point(static_cast<int>(st.range(0)), 3, 0);
  for (auto _ : st)
    benchmark::DoNotOptimize(hessian_vec(f.theta, u, f.data, f.cfg, mode(st)).data());
}

void BM_Hessian(benchmark::State& st) {
  const auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st)
    benchmark::DoNotOptimize(hessian(f.theta, f.data, f.cfg, mode(st)).data());
}

void BM_GradientDescent(benchmark::State& st) {
  const auto& f = fixture(static_cast<int>(st.range(0)));
  GDConfig gd;
  gd.ex = mode(st);
  for (auto _ : st) benchmark::DoNotOptimize(gd_run(f.data, f.cfg, gd).iterations);
}

void BM_MultiInit(benchmark::State& st) {
  const auto& f = fixture(static_cast<int>(st.range(0)));
  for (auto _ : st)
    benchmark::DoNotOptimize(
        multi_init_experiment(f.data, f.cfg, GDConfig{}, 4, 1e-3, mode(st)).n_clusters);
}

// Second argument: 0 serial reference, 1 OpenMP.
#define SIZES ->ArgsProduct({{100, 400}, {0, 1}})->Unit(benchmark::kMillisecond)

BENCHMARK(BM_RiskGrad) SIZES;
BENCHMARK(BM_HessianVec) SIZES;
BENCHMARK(BM_Hessian) SIZES;
BENCHMARK(BM_GradientDescent) SIZES;
BENCHMARK(BM_MultiInit)->ArgsProduct({{100}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
