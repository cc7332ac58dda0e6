#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace qte {

inline constexpr double kPropensityFloor = 1e-10;

inline double trim_propensity(double e) {
  return e < kPropensityFloor ? kPropensityFloor : e;
}

// Per-unit conditional outcome distribution: row i of `grid` holds atom
// locations (conditional quantiles, nondecreasing), row i of `weights` holds
// the point masses (a simplex per unit). Tilting acts on the weights only.
struct GridDistribution {
  Eigen::MatrixXd grid;     // n x A
  Eigen::MatrixXd weights;  // n x A

  Eigen::Index n() const { return grid.rows(); }
  Eigen::Index atoms() const { return grid.cols(); }

  void validate() const;

  // Row-conditional CDF: sum of masses at atoms <= y.
  double row_cdf(Eigen::Index i, double y) const;
};

// Uniform 1/A masses over the supplied quantile atoms. Rejects K < 2 columns
// and non-sorted rows (naming the offending row).
GridDistribution make_uniform_grid(Eigen::MatrixXd Q);

// Marginal step-function CDF over a merged, sorted atom set. Ties are merged
// at construction so inversion has a well-defined inf.
class MarginalCdf {
 public:
  MarginalCdf(std::vector<double> atoms, std::vector<double> masses);

  double operator()(double y) const;
  // Smallest atom y* with F(y*) >= q; exact over the finite atom set.
  double quantile(double q) const;

  std::pair<double, double> support_hint() const {
    return {atoms_.front(), atoms_.back()};
  }
  const std::vector<double>& atom_values() const { return atoms_; }
  const std::vector<double>& atom_masses() const { return masses_; }

 private:
  std::vector<double> atoms_;   // strictly increasing
  std::vector<double> masses_;  // positive, sums to ~1
  std::vector<double> cum_;     // running totals
};

// F(y) = sum_i w_i sum_k 1{Q[i,k] <= y} w[i,k], unit weights normalized.
MarginalCdf marginal_cdf(const GridDistribution& dist,
                         const Eigen::VectorXd& unit_weights);
MarginalCdf marginal_cdf(const GridDistribution& dist);  // uniform units

double invert_cdf(const MarginalCdf& cdf, double q);

// Quantile of the marginal grid mixture without materializing the sorted atom
// set (value bisection over the per-row sorted atoms). Equal to
// invert_cdf(marginal_cdf(dist, unit_weights), q).
double grid_marginal_quantile(const GridDistribution& dist,
                              const Eigen::VectorXd& unit_weights, double q);

// Smallest order statistic whose normalized cumulative weight reaches q
// (Hajek convention).
double weighted_quantile(const Eigen::VectorXd& y, const Eigen::VectorXd& h,
                         double q);

}  // namespace qte
