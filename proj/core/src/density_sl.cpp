#include "qte/density_sl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace qte {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double median_gap(const std::vector<double>& sorted_unique) {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < sorted_unique.size(); ++i) {
    gaps.push_back(sorted_unique[i] - sorted_unique[i - 1]);
  }
  if (gaps.empty()) return 0.0;
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  return gaps[gaps.size() / 2];
}

}  // namespace

int BinScheme::bin_index(double y) const {
  if (y < boundaries[0] || y > boundaries[k]) {
    throw std::invalid_argument("BinScheme: outcome outside [b0, bk]");
  }
  auto begin = boundaries.data();
  auto it = std::upper_bound(begin, begin + k + 1, y);
  int t = static_cast<int>(it - begin);  // y < boundaries[t]
  if (t > k) t = k;                      // y == b_k falls in the last bin
  if (t < 1) t = 1;
  return t;
}

BinScheme denby_mallows_boundaries(const Eigen::VectorXd& y_observed, double c,
                                   int k) {
  if (k < 1) throw std::invalid_argument("denby_mallows_boundaries: k >= 1");
  if (c < 0.0) throw std::invalid_argument("denby_mallows_boundaries: c >= 0");
  std::vector<double> ys(y_observed.data(), y_observed.data() + y_observed.size());
  std::sort(ys.begin(), ys.end());
  std::vector<double> uniq(ys);
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) < k) {
    throw std::invalid_argument(
        "denby_mallows_boundaries: fewer distinct values than bins");
  }

  const std::size_t n = ys.size();
  const double x0 = ys.front();
  const double range = ys.back() - ys.front();
  if (range <= 0.0) {
    throw std::invalid_argument("denby_mallows_boundaries: degenerate range");
  }

  // ECDF interpolated through the order statistics and scaled to the data
  // range; the b-th cut line intersects where
  //   (x - x0) + c * range * Fn(x) = b * (1 + c) * range / k.
  std::vector<double> gvals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double level =
        n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    gvals[i] = (ys[i] - x0) + c * range * level;
  }
  const double total = (1.0 + c) * range;

  BinScheme scheme;
  scheme.c = c;
  scheme.k = k;
  scheme.boundaries.resize(k + 1);

  double pad = 0.5 * median_gap(uniq);
  if (pad <= 0.0) pad = 1e-6 * std::max(1.0, std::abs(ys.back()));
  scheme.boundaries[0] = ys.front() - pad;
  scheme.boundaries[k] = ys.back() + pad;

  std::size_t seg = 0;
  for (int j = 1; j < k; ++j) {
    const double target = total * static_cast<double>(j) / static_cast<double>(k);
    while (seg + 1 < n && gvals[seg + 1] < target) ++seg;
    double x;
    if (seg + 1 >= n) {
      x = ys.back();
    } else if (gvals[seg + 1] == gvals[seg]) {
      x = ys[seg];
    } else {
      const double frac = (target - gvals[seg]) / (gvals[seg + 1] - gvals[seg]);
      x = ys[seg] + frac * (ys[seg + 1] - ys[seg]);
    }
    scheme.boundaries[j] = x;
  }
  // Duplicate-heavy data can collapse adjacent cuts; keep strict ordering.
  for (int j = 1; j <= k; ++j) {
    if (scheme.boundaries[j] <= scheme.boundaries[j - 1]) {
      scheme.boundaries[j] = scheme.boundaries[j - 1] + 1e-12 * (1.0 + range);
    }
  }
  return scheme;
}

ExpandedTable expand_repeated_measures(const Dataset& data,
                                       const BinScheme& scheme) {
  std::vector<Eigen::Index> rows;
  std::vector<int> bins, units;
  std::vector<double> labels;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.indicator[i] != 1.0) continue;
    const int t = scheme.bin_index(data.outcome[i]);
    for (int j = 1; j <= t; ++j) {
      rows.push_back(i);
      bins.push_back(j);
      labels.push_back(j == t ? 1.0 : 0.0);
      units.push_back(static_cast<int>(i));
    }
  }
  ExpandedTable table;
  const auto m = static_cast<Eigen::Index>(rows.size());
  table.covariates.resize(m, data.p());
  table.bin_index.resize(m);
  table.label.resize(m);
  table.unit.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    table.covariates.row(r) = data.covariates.row(rows[static_cast<std::size_t>(r)]);
    table.bin_index[r] = bins[static_cast<std::size_t>(r)];
    table.label[r] = labels[static_cast<std::size_t>(r)];
    table.unit[r] = units[static_cast<std::size_t>(r)];
  }
  return table;
}

void HazardDensityCandidate::fit(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y) {
  scheme_ = denby_mallows_boundaries(y, c_, k_);
  if (k_ == 1) {
    coef_.resize(0);
    return;
  }

  // Hazards are modeled for bins 1..k-1; the last bin's hazard is 1 given the
  // at-risk event, which makes the bin masses telescope to one.
  const int dummies = std::max(k_ - 2, 0);
  std::vector<Eigen::Index> unit_rows;
  std::vector<int> bin_rows;
  std::vector<double> labels;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int t = scheme_.bin_index(y[i]);
    for (int j = 1; j <= std::min(t, k_ - 1); ++j) {
      unit_rows.push_back(i);
      bin_rows.push_back(j);
      labels.push_back(j == t ? 1.0 : 0.0);
    }
  }
  const auto m = static_cast<Eigen::Index>(unit_rows.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, X.cols() + dummies);
  Eigen::VectorXd lab(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    D.row(r).head(X.cols()) = X.row(unit_rows[static_cast<std::size_t>(r)]);
    const int j = bin_rows[static_cast<std::size_t>(r)];
    if (j >= 2) D(r, X.cols() + j - 2) = 1.0;
    lab[r] = labels[static_cast<std::size_t>(r)];
  }

  const double lab_mean = lab.mean();
  if (lab_mean <= 0.0 || lab_mean >= 1.0 || m <= D.cols() + 1) {
    // Degenerate expansion; constant hazard at the clamped empirical rate.
    const double p = std::min(std::max(lab_mean, 1e-6), 1.0 - 1e-6);
    coef_ = Eigen::VectorXd::Zero(D.cols() + 1);
    coef_[0] = std::log(p / (1.0 - p));
    return;
  }
  try {
    coef_ = fit_logistic(D, lab).coefficients;
  } catch (const std::exception&) {
    const double p = std::min(std::max(lab_mean, 1e-6), 1.0 - 1e-6);
    coef_ = Eigen::VectorXd::Zero(D.cols() + 1);
    coef_[0] = std::log(p / (1.0 - p));
  }
}

Eigen::VectorXd HazardDensityCandidate::bin_probabilities(
    const Eigen::RowVectorXd& x) const {
  Eigen::VectorXd probs(k_);
  if (k_ == 1) {
    probs[0] = 1.0;
    return probs;
  }
  double surv = 1.0;
  for (int j = 1; j <= k_ - 1; ++j) {
    double eta = coef_[0];
    for (Eigen::Index v = 0; v < x.size(); ++v) eta += coef_[1 + v] * x[v];
    if (j >= 2) eta += coef_[1 + x.size() + j - 2];
    const double hazard = expit(eta);
    probs[j - 1] = surv * hazard;
    surv *= 1.0 - hazard;
  }
  probs[k_ - 1] = surv;  // hazard of the last bin is 1
  return probs;
}

double HazardDensityCandidate::density(const Eigen::RowVectorXd& x,
                                       double y) const {
  if (y < scheme_.boundaries[0] || y > scheme_.boundaries[k_]) return 0.0;
  const int t = scheme_.bin_index(y);
  return bin_probabilities(x)[t - 1] / scheme_.width(t);
}

double HazardDensityCandidate::cdf(const Eigen::RowVectorXd& x, double y) const {
  if (y <= scheme_.boundaries[0]) return 0.0;
  if (y >= scheme_.boundaries[k_]) return 1.0;
  const int t = scheme_.bin_index(y);
  const Eigen::VectorXd probs = bin_probabilities(x);
  double cdf = 0.0;
  for (int j = 1; j < t; ++j) cdf += probs[j - 1];
  cdf += probs[t - 1] * (y - scheme_.boundaries[t - 1]) / scheme_.width(t);
  return cdf;
}

std::unique_ptr<ConditionalDensity> HazardDensityCandidate::clone_unfitted()
    const {
  return std::make_unique<HazardDensityCandidate>(c_, k_);
}

double StackedDensity::density(const Eigen::RowVectorXd& x, double y) const {
  double d = 0.0;
  for (Eigen::Index c = 0; c < alpha.size(); ++c) {
    if (alpha[c] > 0.0) d += alpha[c] * candidates[static_cast<std::size_t>(c)]->density(x, y);
  }
  return d;
}

double StackedDensity::cdf(const Eigen::RowVectorXd& x, double y) const {
  double f = 0.0;
  for (Eigen::Index c = 0; c < alpha.size(); ++c) {
    if (alpha[c] > 0.0) f += alpha[c] * candidates[static_cast<std::size_t>(c)]->cdf(x, y);
  }
  return f;
}

double StackedDensity::quantile(const Eigen::RowVectorXd& x, double level,
                                double lo, double hi) const {
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(hi)); ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (cdf(x, mid) >= level) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

std::vector<std::vector<Eigen::Index>> make_folds(Eigen::Index n, int J,
                                                  std::uint64_t seed) {
  if (J < 2) throw std::invalid_argument("make_folds: J must be >= 2");
  if (n < J) throw std::invalid_argument("make_folds: fewer rows than folds");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(J));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    folds[i % static_cast<std::size_t>(J)].push_back(idx[i]);
  }
  return folds;
}

namespace {

constexpr double kDensityFloor = 1e-12;

struct ObservedRows {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

ObservedRows observed_rows(const Dataset& data) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.indicator[i] == 1.0) rows.push_back(i);
  }
  if (rows.empty()) throw std::invalid_argument("density_sl: no observed rows");
  ObservedRows out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.p());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.X.row(static_cast<Eigen::Index>(r)) = data.covariates.row(rows[r]);
    out.y[static_cast<Eigen::Index>(r)] = data.outcome[rows[r]];
  }
  return out;
}

// Cross-validated density evaluations: one row per validation point (fixed
// order), one column per candidate.
Eigen::MatrixXd cv_density_matrix(
    const std::vector<std::shared_ptr<ConditionalDensity>>& prototypes,
    const ObservedRows& obs, const std::vector<std::vector<Eigen::Index>>& folds) {
  std::vector<Eigen::Index> val_order;
  for (const auto& fold : folds) {
    if (fold.empty()) throw std::invalid_argument("cv_risk: empty fold");
    val_order.insert(val_order.end(), fold.begin(), fold.end());
  }
  Eigen::MatrixXd L(static_cast<Eigen::Index>(val_order.size()),
                    static_cast<Eigen::Index>(prototypes.size()));
  Eigen::Index row0 = 0;
  for (const auto& fold : folds) {
    std::vector<char> in_val(static_cast<std::size_t>(obs.y.size()), 0);
    for (Eigen::Index i : fold) in_val[static_cast<std::size_t>(i)] = 1;
    std::vector<Eigen::Index> train;
    for (Eigen::Index i = 0; i < obs.y.size(); ++i) {
      if (!in_val[static_cast<std::size_t>(i)]) train.push_back(i);
    }
    Eigen::MatrixXd Xt(static_cast<Eigen::Index>(train.size()), obs.X.cols());
    Eigen::VectorXd yt(static_cast<Eigen::Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
      Xt.row(static_cast<Eigen::Index>(r)) = obs.X.row(train[r]);
      yt[static_cast<Eigen::Index>(r)] = obs.y[train[r]];
    }
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
      auto fitted = prototypes[c]->clone_unfitted();
      fitted->fit(Xt, yt);
      for (std::size_t v = 0; v < fold.size(); ++v) {
        const Eigen::Index i = fold[v];
        L(row0 + static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) =
            fitted->density(obs.X.row(i), obs.y[i]);
      }
    }
    row0 += static_cast<Eigen::Index>(fold.size());
  }
  return L;
}

double risk_of_mixture(const Eigen::MatrixXd& L, const Eigen::VectorXd& alpha) {
  double risk = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    risk -= std::log(std::max(L.row(r).dot(alpha), kDensityFloor));
  }
  return risk / static_cast<double>(L.rows());
}

}  // namespace

double cv_risk(const ConditionalDensity& prototype, const Dataset& data, int J,
               std::uint64_t seed) {
  const ObservedRows obs = observed_rows(data);
  const auto folds = make_folds(obs.y.size(), J, seed);
  std::vector<std::shared_ptr<ConditionalDensity>> protos{
      std::shared_ptr<ConditionalDensity>(prototype.clone_unfitted())};
  const Eigen::MatrixXd L = cv_density_matrix(protos, obs, folds);
  // Mean over folds of the per-fold mean; folds are contiguous row blocks.
  double risk = 0.0;
  Eigen::Index row0 = 0;
  for (const auto& fold : folds) {
    double fold_risk = 0.0;
    for (std::size_t v = 0; v < fold.size(); ++v) {
      fold_risk -= std::log(
          std::max(L(row0 + static_cast<Eigen::Index>(v), 0), kDensityFloor));
    }
    risk += fold_risk / static_cast<double>(fold.size());
    row0 += static_cast<Eigen::Index>(fold.size());
  }
  return risk / static_cast<double>(folds.size());
}

StackedDensity stack_weights(
    const std::vector<std::shared_ptr<ConditionalDensity>>& prototypes,
    const Dataset& data, int J, std::uint64_t seed) {
  if (prototypes.empty()) {
    throw std::invalid_argument("stack_weights: need at least one candidate");
  }
  const ObservedRows obs = observed_rows(data);
  const auto n_cand = static_cast<Eigen::Index>(prototypes.size());

  StackedDensity stack;
  stack.alpha = Eigen::VectorXd::Constant(n_cand, 1.0 / static_cast<double>(n_cand));

  if (n_cand > 1) {
    const auto folds = make_folds(obs.y.size(), J, seed);
    const Eigen::MatrixXd L = cv_density_matrix(prototypes, obs, folds);

    Eigen::VectorXd alpha = stack.alpha;
    double risk = risk_of_mixture(L, alpha);
    double lr = 1.0;
    bool improved_out = true;
    for (int it = 0; it < 500; ++it) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_cand);
      for (Eigen::Index r = 0; r < L.rows(); ++r) {
        const double mix = std::max(L.row(r).dot(alpha), kDensityFloor);
        grad -= L.row(r).transpose() / mix;
      }
      grad /= static_cast<double>(L.rows());
      const double shift = grad.mean();
      Eigen::VectorXd trial =
          (alpha.array() * (-lr * (grad.array() - shift)).exp()).matrix();
      trial /= trial.sum();
      const double trial_risk = risk_of_mixture(L, trial);
      if (trial_risk <= risk) {
        const double gain = risk - trial_risk;
        alpha = trial;
        risk = trial_risk;
        lr *= 1.1;
        if (gain < 1e-10) break;
      } else {
        lr *= 0.5;
        if (lr < 1e-14) break;
      }
      improved_out = it < 499;
    }
    stack.converged = improved_out;
    // Convexity guarantees the optimum is no worse than any vertex; fall back
    // if the iterate stopped short.
    Eigen::Index best_vertex = 0;
    double best_vertex_risk = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < n_cand; ++c) {
      Eigen::VectorXd vertex = Eigen::VectorXd::Zero(n_cand);
      vertex[c] = 1.0;
      const double vr = risk_of_mixture(L, vertex);
      if (vr < best_vertex_risk) {
        best_vertex_risk = vr;
        best_vertex = c;
      }
    }
    if (best_vertex_risk < risk) {
      alpha = Eigen::VectorXd::Zero(n_cand);
      alpha[best_vertex] = 1.0;
    }
    stack.alpha = alpha;
  } else {
    stack.alpha = Eigen::VectorXd::Ones(1);
  }

  for (const auto& proto : prototypes) {
    auto fitted = proto->clone_unfitted();
    fitted->fit(obs.X, obs.y);
    stack.candidates.emplace_back(std::move(fitted));
  }
  return stack;
}

GridDistribution to_grid(const StackedDensity& stacked, const Eigen::MatrixXd& X,
                         int K) {
  if (K < 2) throw std::invalid_argument("to_grid: K must be >= 2");
  // Support envelope over the binned candidates.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& cand : stacked.candidates) {
    if (const auto* hc = dynamic_cast<const HazardDensityCandidate*>(cand.get())) {
      lo = std::min(lo, hc->scheme().boundaries[0]);
      hi = std::max(hi, hc->scheme().boundaries[hc->scheme().k]);
    }
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("to_grid: candidates expose no support");
  }
  const int A = K - 1;
  Eigen::MatrixXd Q(X.rows(), A);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int j = 1; j <= A; ++j) {
      Q(i, j - 1) = stacked.quantile(
          X.row(i), static_cast<double>(j) / static_cast<double>(K), lo, hi);
    }
  }
  return make_uniform_grid(std::move(Q));
}

}  // namespace qte
