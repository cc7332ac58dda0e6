#include "qte/nuisance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "qte/normal.hpp"

namespace qte {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd D(X.rows(), X.cols() + 1);
  D.col(0).setOnes();
  D.rightCols(X.cols()) = X;
  return D;
}

double bernoulli_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& t) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log p = -log(1+e^-eta), log(1-p) = -log(1+e^eta)
    const double a = eta[i];
    ll += t[i] * a - (a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)));
  }
  return ll;
}

}  // namespace

Eigen::VectorXd LogisticModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd eta = with_intercept(X) * coefficients;
  return eta.unaryExpr([](double v) { return expit(v); });
}

Eigen::VectorXd GaussianRegressionModel::predict(
    const Eigen::MatrixXd& X) const {
  return with_intercept(X) * coefficients;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& t) {
  const Eigen::Index n = X.rows();
  if (t.size() != n) throw std::invalid_argument("fit_logistic: size mismatch");
  if (n <= X.cols() + 1) {
    throw std::invalid_argument("fit_logistic: n must exceed p+1");
  }
  const double tbar = t.mean();
  if (tbar <= 0.0 || tbar >= 1.0) {
    throw std::invalid_argument("fit_logistic: response is constant");
  }

  const Eigen::MatrixXd D = with_intercept(X);
  const Eigen::Index p1 = D.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p1);

  LogisticModel model;
  const double tol = 1e-8;
  const int max_iter = 100;
  double ll = bernoulli_loglik(D * beta, t);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd eta = D * beta;
    const Eigen::VectorXd p = eta.unaryExpr([](double v) { return expit(v); });
    const Eigen::VectorXd score =
        D.transpose() * (t - p) / static_cast<double>(n);
    model.iterations = iter;
    if (score.lpNorm<Eigen::Infinity>() <= tol) {
      model.converged = true;
      break;
    }
    if (beta.lpNorm<Eigen::Infinity>() > 1e3) {
      model.separation_warning = true;
      break;
    }
    Eigen::VectorXd wt =
        (p.array() * (1.0 - p.array())).max(1e-10).matrix() /
        static_cast<double>(n);
    Eigen::MatrixXd gram = D.transpose() * wt.asDiagonal() * D;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success ||
        (ldlt.vectorD().array().abs() < 1e-14 * gram.norm()).any()) {
      throw std::runtime_error("fit_logistic: singular weighted Gram matrix");
    }
    Eigen::VectorXd step = ldlt.solve(score);
    double scale = 1.0;
    double new_ll = bernoulli_loglik(D * (beta + step), t);
    int halvings = 0;
    while (new_ll < ll && halvings < 40) {
      scale *= 0.5;
      new_ll = bernoulli_loglik(D * (beta + scale * step), t);
      ++halvings;
    }
    beta += scale * step;
    if ((scale * step).lpNorm<Eigen::Infinity>() < 1e-14) {
      // Round-off plateau; score may sit just above tol.
      const Eigen::VectorXd pf =
          (D * beta).unaryExpr([](double v) { return expit(v); });
      const double s =
          (D.transpose() * (t - pf)).lpNorm<Eigen::Infinity>() /
          static_cast<double>(n);
      model.converged = s <= 10 * tol;
      model.separation_warning = !model.converged;
      break;
    }
    ll = new_ll;
  }
  if (!model.converged && !model.separation_warning) {
    const Eigen::VectorXd p =
        (D * beta).unaryExpr([](double v) { return expit(v); });
    model.converged = (D.transpose() * (t - p) / static_cast<double>(n))
                          .lpNorm<Eigen::Infinity>() <= tol;
    model.separation_warning = !model.converged;
  }
  // Under perfect separation the score vanishes while the fitted
  // probabilities saturate at the labels; flag that too.
  if (!model.separation_warning) {
    const Eigen::VectorXd p =
        (D * beta).unaryExpr([](double v) { return expit(v); });
    model.separation_warning = (t - p).cwiseAbs().maxCoeff() < 1e-3;
  }
  model.coefficients = beta;
  return model;
}

GaussianRegressionModel fit_gaussian_regression(const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows();
  if (y.size() != n) {
    throw std::invalid_argument("fit_gaussian_regression: size mismatch");
  }
  if (n <= X.cols() + 1) {
    throw std::invalid_argument("fit_gaussian_regression: n must exceed p+1");
  }
  const Eigen::MatrixXd D = with_intercept(X);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  qr.setThreshold(1e-10);
  if (qr.rank() < D.cols()) {
    std::string cols;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < D.cols(); ++j) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(perm[j] - 1);  // -1: design column 0 is intercept
    }
    throw std::invalid_argument(
        "fit_gaussian_regression: rank-deficient design, collinear covariate "
        "column(s) " +
        cols);
  }
  GaussianRegressionModel model;
  model.coefficients = qr.solve(y);
  const double rss = (y - D * model.coefficients).squaredNorm();
  const double dof = static_cast<double>(n - D.cols());
  model.residual_sd = std::max(std::sqrt(rss / dof), 1e-6);
  return model;
}

GridDistribution discretize_gaussian(const GaussianRegressionModel& model,
                                     const Eigen::MatrixXd& X, int K) {
  if (K < 2) throw std::invalid_argument("discretize_gaussian: K must be >= 2");
  const Eigen::VectorXd mu = model.predict(X);
  const int A = K - 1;
  Eigen::VectorXd z(A);
  for (int j = 0; j < A; ++j) {
    z[j] = norm_quantile(static_cast<double>(j + 1) / static_cast<double>(K));
  }
  Eigen::MatrixXd Q(X.rows(), A);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int j = 0; j < A; ++j) {
      Q(i, j) = mu[i] + model.residual_sd * z[j];
    }
  }
  return make_uniform_grid(std::move(Q));
}

}  // namespace qte
