#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "qte/dataset.hpp"
#include "qte/grid.hpp"
#include "qte/nuisance.hpp"

namespace qte {

// Bin boundaries from cutting the (range-scaled, interpolated) ECDF with the
// slanted line family: c = 0 gives equal-width bins, c -> infinity gives
// equal-count bins. Endpoints are padded by half a median inter-point gap.
struct BinScheme {
  Eigen::VectorXd boundaries;  // k+1 strictly increasing values
  double c = 0.0;
  int k = 1;

  int bin_index(double y) const;  // 1-based; throws outside [b0, bk]
  double width(int t) const { return boundaries[t] - boundaries[t - 1]; }
};

BinScheme denby_mallows_boundaries(const Eigen::VectorXd& y_observed, double c,
                                   int k);

// Repeated-measures expansion of the hazard factorization: unit i in bin t
// contributes rows j = 1..t with label 1{j == t}.
struct ExpandedTable {
  Eigen::MatrixXd covariates;   // stacked covariate rows
  Eigen::VectorXi bin_index;    // j for each expanded row, 1-based
  Eigen::VectorXd label;        // 1{j == t_i}
  Eigen::VectorXi unit;         // source row in the dataset
};

ExpandedTable expand_repeated_measures(const Dataset& data,
                                       const BinScheme& scheme);

// Conditional density estimator interface: fit on (X, y), evaluate density
// and CDF at a covariate row.
class ConditionalDensity {
 public:
  virtual ~ConditionalDensity() = default;
  virtual void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) = 0;
  virtual double density(const Eigen::RowVectorXd& x, double y) const = 0;
  virtual double cdf(const Eigen::RowVectorXd& x, double y) const = 0;
  virtual std::unique_ptr<ConditionalDensity> clone_unfitted() const = 0;
};

// Binned candidate: hazard-factorized bin probabilities from a logistic
// regression on (covariates, bin one-hot) over the expanded table, density
// constant within bins. The last bin's hazard is 1 by construction, so bin
// masses sum to one exactly.
class HazardDensityCandidate final : public ConditionalDensity {
 public:
  HazardDensityCandidate(double c, int k) : c_(c), k_(k) {}

  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
  double density(const Eigen::RowVectorXd& x, double y) const override;
  double cdf(const Eigen::RowVectorXd& x, double y) const override;
  std::unique_ptr<ConditionalDensity> clone_unfitted() const override;

  Eigen::VectorXd bin_probabilities(const Eigen::RowVectorXd& x) const;
  const BinScheme& scheme() const { return scheme_; }

 private:
  double c_;
  int k_;
  BinScheme scheme_;
  Eigen::VectorXd coef_;  // logistic coefficients on [1, x, bin dummies]
};

struct StackedDensity {
  std::vector<std::shared_ptr<ConditionalDensity>> candidates;  // fitted
  Eigen::VectorXd alpha;  // simplex weights
  bool converged = true;

  double density(const Eigen::RowVectorXd& x, double y) const;
  double cdf(const Eigen::RowVectorXd& x, double y) const;
  double quantile(const Eigen::RowVectorXd& x, double level, double lo,
                  double hi) const;
};

// Deterministic J-fold partition of the observed rows.
std::vector<std::vector<Eigen::Index>> make_folds(Eigen::Index n, int J,
                                                  std::uint64_t seed);

// Cross-validated negative log-likelihood, density values floored at 1e-12.
double cv_risk(const ConditionalDensity& prototype, const Dataset& data, int J,
               std::uint64_t seed);

// Convex stacking of the library by exponentiated-gradient descent on the
// cross-validated risk; the returned stack never does worse than the best
// single candidate.
StackedDensity stack_weights(
    const std::vector<std::shared_ptr<ConditionalDensity>>& prototypes,
    const Dataset& data, int J, std::uint64_t seed);

// Quantile atoms of the stacked conditional distribution at levels
// 1/K .. 1-1/K per covariate row, uniform masses.
GridDistribution to_grid(const StackedDensity& stacked, const Eigen::MatrixXd& X,
                         int K);

}  // namespace qte
