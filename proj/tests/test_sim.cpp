#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "qte/io.hpp"
#include "qte/sim.hpp"

using namespace qte;

TEST_CASE("data-generating process matches its stated moments") {
  std::mt19937_64 rng(1);
  const KsData d = generate_ks(100000, rng);
  CHECK(d.T.mean() == doctest::Approx(0.5).epsilon(0.02));
  CHECK(d.Y.mean() == doctest::Approx(210.0).epsilon(0.01));
  for (int j = 0; j < 4; ++j) {
    CHECK(d.W.col(j).mean() == doctest::Approx(0.0).epsilon(1.0).scale(0.02));
  }
  // X2 = W2/(1+exp(W1)) + 10 stays near 10
  CHECK(d.X.col(1).mean() == doctest::Approx(10.0).epsilon(0.01));
  // true propensities stay inside a comfortably bounded interval
  for (Eigen::Index i = 0; i < d.T.size(); ++i) {
    const double e = 1.0 / (1.0 + std::exp(d.W(i, 0) - 0.5 * d.W(i, 1) +
                                           0.25 * d.W(i, 2) + 0.1 * d.W(i, 3)));
    CHECK(e > 0.001);
    CHECK(e < 0.999);
  }
}

TEST_CASE("treated-arm shift moves only treated outcomes") {
  std::mt19937_64 rng1(5), rng2(5);
  const KsData base = generate_ks(500, rng1, 0.0);
  const KsData moved = generate_ks(500, rng2, 3.0);
  for (Eigen::Index i = 0; i < 500; ++i) {
    CHECK(moved.T[i] == base.T[i]);
    CHECK(moved.Y[i] == doctest::Approx(base.Y[i] + 3.0 * base.T[i]));
  }
}

TEST_CASE("scenario mapping picks the right design matrices") {
  std::mt19937_64 rng(7);
  const KsData d = generate_ks(400, rng);
  const ScenarioFit a = fit_scenario(d, Scenario::A, 50);
  const ScenarioFit b = fit_scenario(d, Scenario::B, 50);
  const ScenarioFit c = fit_scenario(d, Scenario::C, 50);
  const ScenarioFit dd = fit_scenario(d, Scenario::D, 50);

  // (a) and (c) share the correct propensity model, (b) and (d) the wrong one.
  CHECK((a.arm1.propensity - c.arm1.propensity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.arm1.propensity - dd.arm1.propensity).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.arm1.propensity - b.arm1.propensity).cwiseAbs().maxCoeff() > 1e-6);

  // (a) and (b) share the correct outcome grids, (c) and (d) the wrong ones.
  CHECK((a.arm1.conditional_distribution.grid -
         b.arm1.conditional_distribution.grid).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c.arm0.conditional_distribution.grid -
         dd.arm0.conditional_distribution.grid).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.arm1.conditional_distribution.grid -
         dd.arm1.conditional_distribution.grid).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("replication substreams are reproducible and distinct") {
  CHECK(replication_seed(42, 0) == replication_seed(42, 0));
  CHECK(replication_seed(42, 0) != replication_seed(42, 1));
  CHECK(replication_seed(42, 0) != replication_seed(43, 0));
}

TEST_CASE("summaries are identical across thread counts") {
  ScenarioSpec spec;
  spec.n = 120;
  spec.reps = 6;
  spec.scenario = Scenario::B;
  spec.grid_size = 40;
  spec.seed = 2024;

  spec.threads = 1;
  const SimulationSummary s1 = run_monte_carlo(spec);
  spec.threads = 3;
  const SimulationSummary s3 = run_monte_carlo(spec);

  std::ostringstream o1, o3;
  write_summary_csv(o1, s1.cells);
  write_summary_csv(o3, s3.cells);
  CHECK(o1.str() == o3.str());
  CHECK(s1.tmle_runs == s3.tmle_runs);
  CHECK(s1.tmle_converged == s3.tmle_converged);
}

TEST_CASE("single-replication summary collapses to the estimate") {
  ScenarioSpec spec;
  spec.n = 150;
  spec.reps = 1;
  spec.scenario = Scenario::A;
  spec.grid_size = 40;
  spec.seed = 9;
  const SimulationSummary s = run_monte_carlo(spec);
  REQUIRE(s.cells.size() == 5);
  for (const auto& cell : s.cells) {
    CHECK(cell.failures == 0);
    CHECK(cell.sd == 0.0);
    CHECK(cell.rmse == doctest::Approx(std::abs(cell.bias)).epsilon(1e-12));
  }
}

TEST_CASE("rmse decomposes into bias and sd") {
  ScenarioSpec spec;
  spec.n = 100;
  spec.reps = 8;
  spec.scenario = Scenario::D;
  spec.grid_size = 40;
  spec.seed = 31;
  const SimulationSummary s = run_monte_carlo(spec);
  for (const auto& cell : s.cells) {
    if (cell.failures == cell.reps) continue;
    CHECK(cell.rmse * cell.rmse ==
          doctest::Approx(cell.bias * cell.bias + cell.sd * cell.sd)
              .epsilon(1e-9));
  }
}

TEST_CASE("bad specs are rejected") {
  ScenarioSpec spec;
  spec.reps = 0;
  CHECK_THROWS(run_monte_carlo(spec));
  spec.reps = 1;
  spec.q_levels = {1.5};
  CHECK_THROWS(run_monte_carlo(spec));
  CHECK_THROWS(parse_scenario("e"));
  CHECK(scenario_label(parse_scenario("c")) == "c");
}
