#include <doctest.h>

#include <cmath>
#include <random>

#include "qte/normal.hpp"
#include "qte/nuisance.hpp"

using namespace qte;

TEST_CASE("logistic fit recovers a separable-free 1-d model") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  const int n = 100000;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = gauss(rng);
    const double p = 1.0 / (1.0 + std::exp(-(0.3 + 0.8 * X(i, 0))));
    t[i] = unif(rng) < p ? 1.0 : 0.0;
  }
  const LogisticModel m = fit_logistic(X, t);
  CHECK(m.converged);
  CHECK_FALSE(m.separation_warning);
  CHECK(m.coefficients[0] == doctest::Approx(0.3).epsilon(0.1));
  CHECK(m.coefficients[1] == doctest::Approx(0.8).epsilon(0.1));

  // Score equation holds at the fit: mean of X'(t - p) vanishes.
  const Eigen::VectorXd p = m.predict(X);
  CHECK(std::abs((t - p).mean()) < 1e-7);
  CHECK(std::abs((X.col(0).array() * (t - p).array()).mean()) < 1e-7);
}

TEST_CASE("logistic fit flags separated data") {
  Eigen::MatrixXd X(6, 1);
  Eigen::VectorXd t(6);
  X << -3, -2, -1, 1, 2, 3;
  t << 0, 0, 0, 1, 1, 1;
  const LogisticModel m = fit_logistic(X, t);
  CHECK(m.separation_warning);
}

TEST_CASE("OLS matches the normal equations and residual scale") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss;
  const int n = 50000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = gauss(rng);
    X(i, 1) = gauss(rng);
    y[i] = 1.5 - 2.0 * X(i, 0) + 0.5 * X(i, 1) + 0.7 * gauss(rng);
  }
  const GaussianRegressionModel m = fit_gaussian_regression(X, y);
  CHECK(m.coefficients[0] == doctest::Approx(1.5).epsilon(0.02));
  CHECK(m.coefficients[1] == doctest::Approx(-2.0).epsilon(0.02));
  CHECK(m.coefficients[2] == doctest::Approx(0.5).epsilon(0.05));
  CHECK(m.residual_sd == doctest::Approx(0.7).epsilon(0.02));
}

TEST_CASE("OLS names collinear columns") {
  Eigen::MatrixXd X(10, 2);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = i;
    X(i, 1) = 2.0 * i;  // exact copy up to scale
    y[i] = i;
  }
  CHECK_THROWS_WITH_AS(fit_gaussian_regression(X, y),
                       doctest::Contains("column"), std::invalid_argument);
}

TEST_CASE("discretized Gaussian grid holds the model's conditional quantiles") {
  GaussianRegressionModel m;
  m.coefficients = Eigen::VectorXd(2);
  m.coefficients << 1.0, 2.0;
  m.residual_sd = 3.0;
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  const int K = 10;
  const GridDistribution d = discretize_gaussian(m, X, K);
  REQUIRE(d.atoms() == K - 1);
  for (int j = 1; j < K; ++j) {
    const double z = norm_quantile(static_cast<double>(j) / K);
    CHECK(d.grid(0, j - 1) == doctest::Approx(1.0 + 3.0 * z).epsilon(1e-12));
    CHECK(d.grid(1, j - 1) == doctest::Approx(3.0 + 3.0 * z).epsilon(1e-12));
    CHECK(d.weights(0, j - 1) == doctest::Approx(1.0 / (K - 1)));
  }
  CHECK_THROWS(discretize_gaussian(m, X, 1));
}

TEST_CASE("nuisance fits are consistent on a known DGP") {
  // Large-sample sanity check of the full pipeline's building blocks.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  const int n = 100000;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd t(n), y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = gauss(rng);
    X(i, 1) = gauss(rng);
    const double e = 1.0 / (1.0 + std::exp(-(0.2 * X(i, 0) - 0.4 * X(i, 1))));
    t[i] = unif(rng) < e ? 1.0 : 0.0;
    y[i] = 2.0 + X(i, 0) + 0.5 * X(i, 1) + gauss(rng);
  }
  const LogisticModel pm = fit_logistic(X, t);
  Eigen::MatrixXd probe(1, 2);
  probe << 1.0, 1.0;
  const double e_true = 1.0 / (1.0 + std::exp(0.2));
  CHECK(pm.predict(probe)[0] == doctest::Approx(e_true).epsilon(0.05));

  const GaussianRegressionModel om = fit_gaussian_regression(X, y);
  CHECK(om.predict(probe)[0] == doctest::Approx(3.5).epsilon(0.1));
  CHECK(om.residual_sd == doctest::Approx(1.0).epsilon(0.1));
}
