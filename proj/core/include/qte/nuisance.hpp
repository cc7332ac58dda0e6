#pragma once

#include <Eigen/Dense>

#include "qte/grid.hpp"

namespace qte {

struct LogisticModel {
  Eigen::VectorXd coefficients;  // intercept first
  bool converged = false;
  bool separation_warning = false;
  int iterations = 0;

  // Fitted probabilities on rows of X (without the intercept column).
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct GaussianRegressionModel {
  Eigen::VectorXd coefficients;  // intercept first
  double residual_sd = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// Bernoulli MLE via iteratively reweighted least squares with step-halving.
// Converged when the max absolute mean-score component drops below 1e-8.
// Diverging coefficients with a non-vanishing score set separation_warning
// and return the last iterate.
LogisticModel fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& t);

// OLS with residual_sd = sqrt(RSS / (n - p - 1)), floored at 1e-6 so the
// discretized grid stays invertible.
GaussianRegressionModel fit_gaussian_regression(const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& y);

// Row i holds Gaussian quantiles with mean x_i'beta at levels 1/K,...,1-1/K
// (K-1 atoms), uniform masses.
GridDistribution discretize_gaussian(const GaussianRegressionModel& model,
                                     const Eigen::MatrixXd& X, int K);

// eta = (G, e): per-unit propensity values (already trimmed) aligned with the
// rows of the conditional outcome distribution.
struct NuisancePair {
  Eigen::VectorXd propensity;
  GridDistribution conditional_distribution;
};

}  // namespace qte
