#include "qte/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qte {

void GridDistribution::validate() const {
  if (n() < 1 || atoms() < 1) {
    throw std::invalid_argument("GridDistribution: empty grid");
  }
  if (grid.rows() != weights.rows() || grid.cols() != weights.cols()) {
    throw std::invalid_argument("GridDistribution: grid/weights shape mismatch");
  }
  for (Eigen::Index i = 0; i < n(); ++i) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < atoms(); ++k) {
      if (k > 0 && grid(i, k) < grid(i, k - 1)) {
        throw std::invalid_argument("GridDistribution: row " +
                                    std::to_string(i) + " not nondecreasing");
      }
      if (weights(i, k) < 0.0) {
        throw std::invalid_argument("GridDistribution: negative weight in row " +
                                    std::to_string(i));
      }
      sum += weights(i, k);
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument("GridDistribution: row " + std::to_string(i) +
                                  " weights off the simplex");
    }
  }
}

double GridDistribution::row_cdf(Eigen::Index i, double y) const {
  double s = 0.0;
  for (Eigen::Index k = 0; k < atoms() && grid(i, k) <= y; ++k) {
    s += weights(i, k);
  }
  return s;
}

GridDistribution make_uniform_grid(Eigen::MatrixXd Q) {
  if (Q.rows() < 1) throw std::invalid_argument("make_uniform_grid: no rows");
  if (Q.cols() < 1) {
    throw std::invalid_argument("make_uniform_grid: need at least one atom");
  }
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    for (Eigen::Index k = 1; k < Q.cols(); ++k) {
      if (Q(i, k) < Q(i, k - 1)) {
        throw std::invalid_argument("make_uniform_grid: row " +
                                    std::to_string(i) + " not sorted");
      }
    }
  }
  GridDistribution d;
  d.weights = Eigen::MatrixXd::Constant(Q.rows(), Q.cols(),
                                        1.0 / static_cast<double>(Q.cols()));
  d.grid = std::move(Q);
  return d;
}

MarginalCdf::MarginalCdf(std::vector<double> atoms, std::vector<double> masses) {
  if (atoms.empty() || atoms.size() != masses.size()) {
    throw std::invalid_argument("MarginalCdf: bad atom/mass vectors");
  }
  std::vector<std::size_t> order(atoms.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });
  atoms_.reserve(atoms.size());
  masses_.reserve(atoms.size());
  for (std::size_t j : order) {
    if (!atoms_.empty() && atoms[j] == atoms_.back()) {
      masses_.back() += masses[j];
    } else {
      atoms_.push_back(atoms[j]);
      masses_.push_back(masses[j]);
    }
  }
  cum_.resize(atoms_.size());
  double run = 0.0;
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    run += masses_[j];
    cum_[j] = run;
  }
}

double MarginalCdf::operator()(double y) const {
  auto it = std::upper_bound(atoms_.begin(), atoms_.end(), y);
  if (it == atoms_.begin()) return 0.0;
  return cum_[static_cast<std::size_t>(it - atoms_.begin()) - 1];
}

double MarginalCdf::quantile(double q) const {
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("MarginalCdf::quantile: q must be in (0,1)");
  }
  auto it = std::lower_bound(cum_.begin(), cum_.end(), q);
  if (it == cum_.end()) return atoms_.back();
  return atoms_[static_cast<std::size_t>(it - cum_.begin())];
}

namespace {

Eigen::VectorXd normalize_units(const Eigen::VectorXd& unit_weights) {
  if ((unit_weights.array() < 0.0).any()) {
    throw std::invalid_argument("marginal_cdf: negative unit weight");
  }
  const double total = unit_weights.sum();
  if (total <= 0.0) {
    throw std::invalid_argument("marginal_cdf: all-zero unit weights");
  }
  return unit_weights / total;
}

}  // namespace

MarginalCdf marginal_cdf(const GridDistribution& dist,
                         const Eigen::VectorXd& unit_weights) {
  const Eigen::VectorXd w = normalize_units(unit_weights);
  std::vector<double> atoms, masses;
  atoms.reserve(static_cast<std::size_t>(dist.n() * dist.atoms()));
  masses.reserve(atoms.capacity());
  for (Eigen::Index i = 0; i < dist.n(); ++i) {
    if (w[i] == 0.0) continue;
    for (Eigen::Index k = 0; k < dist.atoms(); ++k) {
      atoms.push_back(dist.grid(i, k));
      masses.push_back(w[i] * dist.weights(i, k));
    }
  }
  return MarginalCdf(std::move(atoms), std::move(masses));
}

MarginalCdf marginal_cdf(const GridDistribution& dist) {
  return marginal_cdf(dist, Eigen::VectorXd::Ones(dist.n()));
}

double invert_cdf(const MarginalCdf& cdf, double q) { return cdf.quantile(q); }

double grid_marginal_quantile(const GridDistribution& dist,
                              const Eigen::VectorXd& unit_weights, double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("grid_marginal_quantile: q must be in (0,1)");
  }
  const Eigen::VectorXd w = normalize_units(unit_weights);
  const Eigen::Index n = dist.n();
  const Eigen::Index A = dist.atoms();

  // Per-row prefix sums of masses; rows are sorted so F(v) is one binary
  // search per row.
  Eigen::MatrixXd prefix(n, A + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    prefix(i, 0) = 0.0;
    for (Eigen::Index k = 0; k < A; ++k) {
      prefix(i, k + 1) = prefix(i, k) + dist.weights(i, k);
    }
  }
  auto eval = [&](double v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w[i] == 0.0) continue;
      Eigen::Index lo = 0, hi = A;
      while (lo < hi) {
        const Eigen::Index mid = (lo + hi) / 2;
        if (dist.grid(i, mid) <= v) {
          lo = mid + 1;
        } else {
          hi = mid;
        }
      }
      s += w[i] * prefix(i, lo);
    }
    return s;
  };

  double lo = dist.grid.minCoeff();
  double hi = dist.grid.maxCoeff();
  if (eval(lo) >= q) return lo;  // first atom already reaches q
  // Invariant: F(lo) < q <= F(hi). Shrink until only a handful of atoms can
  // lie in (lo, hi], then pick the smallest one crossing q exactly.
  const double tol = 1e-13 * std::max({1.0, std::abs(lo), std::abs(hi)});
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (eval(mid) >= q) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  // Candidate atoms in (lo, hi].
  std::vector<double> cands;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] == 0.0) continue;
    for (Eigen::Index k = 0; k < A; ++k) {
      const double v = dist.grid(i, k);
      if (v > lo && v <= hi) cands.push_back(v);
      if (v > hi) break;
    }
  }
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  for (double v : cands) {
    if (eval(v) >= q) return v;
  }
  return hi;
}

double weighted_quantile(const Eigen::VectorXd& y, const Eigen::VectorXd& h,
                         double q) {
  if (y.size() != h.size() || y.size() == 0) {
    throw std::invalid_argument("weighted_quantile: size mismatch");
  }
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("weighted_quantile: q must be in (0,1)");
  }
  if ((h.array() < 0.0).any()) {
    throw std::invalid_argument("weighted_quantile: negative weight");
  }
  const double total = h.sum();
  if (total <= 0.0) {
    throw std::invalid_argument("weighted_quantile: all-zero weights");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(y.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return y[a] < y[b]; });
  double cum = 0.0;
  for (Eigen::Index j : order) {
    cum += h[j];
    if (cum / total >= q - 1e-12) return y[j];
  }
  return y[order.back()];
}

}  // namespace qte
