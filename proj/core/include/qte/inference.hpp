#pragma once

#include <Eigen/Dense>
#include <utility>

#include "qte/dataset.hpp"
#include "qte/estimators.hpp"
#include "qte/grid.hpp"
#include "qte/nuisance.hpp"

namespace qte {

struct EstimateReport {
  double q = 0.5;
  double theta_hat = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double density_at_theta = 0.0;
  TmleDiagnostics diagnostics;
  bool degenerate_ci = false;
};

// Efficient influence function for the quantile of an outcome missing at
// random: D = -(1/f) [ (m/e)(1{y<=theta} - g_theta) + g_theta - q ].
double eif_missing(double m, double y, double e, double g_theta, double theta,
                   double q, double f_theta);

// Effect-on-the-treated influence function; g_theta = G(theta | 0, x).
double eif_att(double t, double y, double e, double g_theta, double theta,
               double q, double f_theta, double p_treated);

// Gaussian KDE of the marginal outcome density at theta over the atoms of the
// estimated marginal, Silverman bandwidth 1.06 * sd * n^(-1/5), floored at
// 1e-8. n is the dataset size, not the atom count.
double density_at(const MarginalCdf& F, double theta, Eigen::Index n,
                  bool* degenerate = nullptr);
// Same estimate without materializing the sorted marginal.
double density_at(const GridDistribution& dist,
                  const Eigen::VectorXd& unit_weights, double theta,
                  Eigen::Index n, bool* degenerate = nullptr);

EstimateReport wald_report(double theta_hat, const Eigen::VectorXd& eif_values,
                           double level);

// Two-sided Wald test of zero effect given an effect estimate and its SE.
std::pair<double, double> wald_test_effect(double effect, double std_error);

}  // namespace qte
