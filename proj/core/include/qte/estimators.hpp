#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qte/dataset.hpp"
#include "qte/grid.hpp"
#include "qte/nuisance.hpp"

namespace qte {

struct TmleDiagnostics {
  int iterations = 0;
  double final_epsilon = 0.0;
  // |weighted score of the fluctuation model| at exit.
  double score_residual = 0.0;
  bool converged = false;
};

struct TmleResult {
  double theta = 0.0;
  GridDistribution tilted;
  TmleDiagnostics diagnostics;
  // Cumulative tilted log-likelihood after each iteration; nondecreasing.
  std::vector<double> loglik_path;
  // G-tilde(theta | X_i) per unit, for influence-function evaluation.
  Eigen::VectorXd gbar;
};

// Plug-in quantile of the model-implied marginal CDF, no targeting. Unit
// weights follow the estimand: uniform for MissingOutcome, treated indicator
// for EffectOnTreated.
double estimate_od(const Dataset& data, const GridDistribution& G, double q);

// Horvitz-Thompson IPW root: smallest observed y where
// (1/n) sum (M_i/e_i) 1{Y_i <= y} reaches q. Unsolvable equations return the
// max observed outcome and set *warning.
double estimate_ipw(const Dataset& data, const Eigen::VectorXd& e_hat, double q,
                    bool* warning = nullptr);

// Check-loss minimizer: Hajek weighted quantile of observed y with weights
// M_i/e_i.
double estimate_firpo(const Dataset& data, const Eigen::VectorXd& e_hat,
                      double q);

// Root of the estimating equation over the pooled sorted candidate set
// (observed outcomes + grid atoms). Among sign changes the crossing with the
// smallest |function value| wins, ties to the smaller theta.
double estimate_aipw(const Dataset& data, const NuisancePair& nuis, double q,
                     bool* warning = nullptr);

// Iterative exponential tilting of the grid masses along the quantile score,
// stopping once |eps| < 1e-4 * n^-0.6 or after 20 iterations.
TmleResult tmle_missing(const Dataset& data, const NuisancePair& nuis,
                        double q);

// Effect-on-the-treated variant: likelihood over control units, clever
// covariate e/(1-e), treated-weighted marginal CDF.
TmleResult tmle_att(const Dataset& data, const NuisancePair& nuis, double q);

struct EffectResult {
  double effect = 0.0;
  TmleResult arm1;
  TmleResult arm0;
};

// Difference of arm-specific TMLE quantiles: arm 1 treats T as the observed
// indicator with e-hat, arm 0 uses 1-T and 1-e-hat. Both pairs carry the
// treated-arm propensity e-hat.
EffectResult effect_on_quantile_full(const Dataset& data,
                                     const NuisancePair& nuis_arm1,
                                     const NuisancePair& nuis_arm0, double q);
double effect_on_quantile(const Dataset& data, const NuisancePair& nuis_arm1,
                          const NuisancePair& nuis_arm0, double q);

}  // namespace qte
