#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qte/dataset.hpp"
#include "qte/nuisance.hpp"

namespace qte {

// Misspecification scenarios: (a) both nuisance models on the structural
// covariates W, (b) only the outcome model on W, (c) only the propensity
// model on W, (d) both on the observed transformations X.
enum class Scenario { A, B, C, D };

Scenario parse_scenario(const std::string& s);
std::string scenario_label(Scenario s);

struct KsData {
  Eigen::MatrixXd W;  // structural covariates, n x 4
  Eigen::MatrixXd X;  // observed transformations, n x 4
  Eigen::VectorXd T;
  Eigen::VectorXd Y;
};

// Kang-Schafer draw; `shift` is added to Y on treated units to move the
// quantile effect away from the null (0 under the default).
KsData generate_ks(Eigen::Index n, std::mt19937_64& rng, double shift = 0.0);

struct ScenarioFit {
  NuisancePair arm1;  // treated-arm conditional grid, shared e-hat
  NuisancePair arm0;  // control-arm conditional grid, same e-hat
};

ScenarioFit fit_scenario(const KsData& data, Scenario scenario, int grid_size);

struct ScenarioSpec {
  Eigen::Index n = 500;
  int reps = 1000;
  Scenario scenario = Scenario::A;
  std::vector<double> q_levels{0.5};
  int grid_size = 500;
  std::uint64_t seed = 1;
  int threads = 1;
  double shift = 0.0;
  double ci_level = 0.95;
  std::vector<std::string> estimators{"od", "ipw", "firpo", "aipw", "tmle"};
};

struct CellSummary {
  std::string scenario;
  Eigen::Index n = 0;
  double q = 0.5;
  std::string estimator;
  double bias = 0.0;
  double sd = 0.0;    // population formula, 0-flagged when reps == 1
  double rmse = 0.0;  // rmse^2 == bias^2 + sd^2
  double coverage = 0.0;
  bool has_coverage = false;
  double rejection_rate = 0.0;  // two-sided Wald test of zero effect
  double mean_iterations = 0.0;
  int reps = 0;
  int failures = 0;
};

struct SimulationSummary {
  std::vector<CellSummary> cells;
  // TMLE diagnostics pooled over arms and replications.
  long tmle_runs = 0;
  long tmle_converged = 0;
  long tmle_score_ok = 0;  // |Pn D| within 5e-4 * n^-0.6 among converged runs
  long tmle_monotone = 0;  // nondecreasing tilted log-likelihood path
};

// Per-replication key for the RNG substream: identical (seed, rep) pairs give
// identical datasets regardless of scenario or thread count.
std::uint64_t replication_seed(std::uint64_t seed, int rep);

SimulationSummary run_monte_carlo(const ScenarioSpec& spec);

}  // namespace qte
