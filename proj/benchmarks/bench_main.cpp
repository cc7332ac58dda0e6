#include <benchmark/benchmark.h>

#include <random>

#include "qte/estimators.hpp"
#include "qte/grid.hpp"
#include "qte/nuisance.hpp"
#include "qte/sim.hpp"

namespace {

struct Fixture {
  qte::Dataset data;
  qte::NuisancePair nuis;
};

Fixture make_fixture(Eigen::Index n, int grid_size) {
  std::mt19937_64 rng(7);
  const qte::KsData ks = qte::generate_ks(n, rng);
  const qte::ScenarioFit fit = qte::fit_scenario(ks, qte::Scenario::A, grid_size);
  Fixture f;
  f.data = {ks.X, ks.T, ks.Y, qte::EstimandKind::MissingOutcome};
  f.nuis = fit.arm1;
  return f;
}

void BM_tmle_missing(benchmark::State& state) {
  const Fixture f = make_fixture(500, 500);
  for (auto _ : state) {
    benchmark::DoNotOptimize(qte::tmle_missing(f.data, f.nuis, 0.5).theta);
  }
}
BENCHMARK(BM_tmle_missing);

void BM_grid_quantile(benchmark::State& state) {
  const Fixture f = make_fixture(500, 500);
  const Eigen::VectorXd uw = Eigen::VectorXd::Constant(500, 1.0 / 500.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        qte::grid_marginal_quantile(f.nuis.conditional_distribution, uw, 0.5));
  }
}
BENCHMARK(BM_grid_quantile);

void BM_aipw(benchmark::State& state) {
  const Fixture f = make_fixture(500, 500);
  for (auto _ : state) {
    benchmark::DoNotOptimize(qte::estimate_aipw(f.data, f.nuis, 0.5));
  }
}
BENCHMARK(BM_aipw);

void BM_logistic_fit(benchmark::State& state) {
  std::mt19937_64 rng(11);
  const qte::KsData ks = qte::generate_ks(2000, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(qte::fit_logistic(ks.W, ks.T).coefficients);
  }
}
BENCHMARK(BM_logistic_fit);

}  // namespace

BENCHMARK_MAIN();
