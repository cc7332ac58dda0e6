#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qte/density_sl.hpp"

using namespace qte;

namespace {

Dataset gaussian_dataset(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> gauss;
  Dataset d;
  d.covariates.resize(n, 1);
  d.indicator = Eigen::VectorXd::Ones(n);
  d.outcome.resize(n);
  for (int i = 0; i < n; ++i) {
    d.covariates(i, 0) = gauss(rng);
    d.outcome[i] = 0.5 * d.covariates(i, 0) + gauss(rng);
  }
  return d;
}

}  // namespace

TEST_CASE("boundary geometry on a hand-solvable configuration") {
  // y = {0,1,2,3}, c = 1, k = 2: the cut line meets the scaled ECDF halfway
  // between the second and third points, at 1.5.
  Eigen::VectorXd y(4);
  y << 0.0, 1.0, 2.0, 3.0;
  const BinScheme s = denby_mallows_boundaries(y, 1.0, 2);
  REQUIRE(s.boundaries.size() == 3);
  CHECK(s.boundaries[1] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(s.boundaries[0] < 0.0);
  CHECK(s.boundaries[2] > 3.0);
  // Endpoints sit half a median gap beyond the data.
  CHECK(s.boundaries[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(s.boundaries[2] == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("c = 0 gives equal-width interior boundaries") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-2.0, 5.0);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) y[i] = unif(rng);
  const int k = 4;
  const BinScheme s = denby_mallows_boundaries(y, 0.0, k);
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  for (int j = 1; j < k; ++j) {
    CHECK(s.boundaries[j] == doctest::Approx(lo + j * (hi - lo) / k).epsilon(1e-9));
  }
}

TEST_CASE("large c approaches empirical quantiles") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  std::vector<double> ys(301);
  for (auto& v : ys) v = gauss(rng);
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), 301);
  std::sort(ys.begin(), ys.end());
  const int k = 4;
  const BinScheme s = denby_mallows_boundaries(y, 1e6, k);
  double max_gap = 0.0;
  for (std::size_t i = 1; i < ys.size(); ++i) {
    max_gap = std::max(max_gap, ys[i] - ys[i - 1]);
  }
  for (int j = 1; j < k; ++j) {
    const double target = ys[static_cast<std::size_t>(
        std::llround(j * (ys.size() - 1.0) / k))];
    CHECK(std::abs(s.boundaries[j] - target) <= max_gap + 1e-9);
  }
}

TEST_CASE("boundaries reject degenerate inputs") {
  Eigen::VectorXd constant = Eigen::VectorXd::Ones(10);
  CHECK_THROWS(denby_mallows_boundaries(constant, 0.0, 2));
  Eigen::VectorXd two(2);
  two << 0.0, 1.0;
  CHECK_THROWS(denby_mallows_boundaries(two, 0.0, 3));
}

TEST_CASE("repeated-measures expansion emits rows 1..t with terminal label") {
  BinScheme s;
  s.k = 3;
  s.c = 0.0;
  s.boundaries.resize(4);
  s.boundaries << 0.0, 1.0, 2.0, 3.0;

  Dataset d;
  d.covariates.resize(3, 1);
  d.covariates << 7.0, 8.0, 9.0;
  d.indicator.resize(3);
  d.indicator << 1.0, 1.0, 0.0;
  d.outcome.resize(3);
  d.outcome << 0.5, 2.5, 1.5;  // bins 1 and 3; last row unobserved

  const ExpandedTable t = expand_repeated_measures(d, s);
  REQUIRE(t.label.size() == 4);  // 1 row for bin 1, 3 rows for bin 3
  CHECK(t.bin_index[0] == 1);
  CHECK(t.label[0] == 1.0);
  CHECK(t.covariates(0, 0) == 7.0);
  CHECK(t.bin_index[1] == 1);
  CHECK(t.label[1] == 0.0);
  CHECK(t.bin_index[3] == 3);
  CHECK(t.label[3] == 1.0);
  CHECK(t.unit[3] == 1);
}

TEST_CASE("fitted candidate is a genuine conditional density") {
  std::mt19937_64 rng(9);
  const Dataset d = gaussian_dataset(rng, 400);
  HazardDensityCandidate cand(1.0, 8);
  cand.fit(d.covariates, d.outcome);

  Eigen::RowVectorXd x(1);
  x << 0.3;
  const Eigen::VectorXd probs = cand.bin_probabilities(x);
  CHECK(std::abs(probs.sum() - 1.0) <= 1e-10);
  CHECK(probs.minCoeff() >= 0.0);

  // density integrates to one over the bins
  double mass = 0.0;
  for (int t = 1; t <= 8; ++t) {
    const double mid = 0.5 * (cand.scheme().boundaries[t - 1] +
                              cand.scheme().boundaries[t]);
    mass += cand.density(x, mid) * cand.scheme().width(t);
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));

  // CDF is monotone from 0 to 1 and density vanishes off-support
  CHECK(cand.cdf(x, cand.scheme().boundaries[0] - 1.0) == 0.0);
  CHECK(cand.cdf(x, cand.scheme().boundaries[8] + 1.0) == 1.0);
  double prev = -1.0;
  for (double yv = -4.0; yv <= 4.0; yv += 0.05) {
    const double f = cand.cdf(x, yv);
    CHECK(f >= prev - 1e-12);
    prev = f;
  }
  CHECK(cand.density(x, cand.scheme().boundaries[8] + 1.0) == 0.0);
}

TEST_CASE("folds partition the index set") {
  const auto folds = make_folds(23, 5, 99);
  REQUIRE(folds.size() == 5);
  std::vector<int> seen(23, 0);
  for (const auto& f : folds) {
    CHECK(f.size() >= 4);
    for (Eigen::Index i : f) seen[static_cast<std::size_t>(i)]++;
  }
  for (int c : seen) CHECK(c == 1);
  CHECK_THROWS(make_folds(10, 1, 0));
  CHECK_THROWS(make_folds(3, 5, 0));
}

TEST_CASE("stacking favors the clearly better candidate") {
  std::mt19937_64 rng(21);
  const Dataset d = gaussian_dataset(rng, 500);
  std::vector<std::shared_ptr<ConditionalDensity>> lib{
      std::make_shared<HazardDensityCandidate>(1.0, 20),
      std::make_shared<HazardDensityCandidate>(0.0, 2),
  };
  const StackedDensity stack = stack_weights(lib, d, 5, 42);
  CHECK(stack.alpha.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stack.alpha.minCoeff() >= 0.0);
  CHECK(stack.alpha[0] >= 0.9);  // the 20-bin candidate dominates the 2-bin one

  const double risk20 = cv_risk(HazardDensityCandidate(1.0, 20), d, 5, 42);
  const double risk2 = cv_risk(HazardDensityCandidate(0.0, 2), d, 5, 42);
  CHECK(risk20 < risk2);
}

TEST_CASE("stacked quantiles invert the stacked CDF") {
  std::mt19937_64 rng(33);
  const Dataset d = gaussian_dataset(rng, 300);
  std::vector<std::shared_ptr<ConditionalDensity>> lib{
      std::make_shared<HazardDensityCandidate>(1.0, 10),
      std::make_shared<HazardDensityCandidate>(1e6, 5),
  };
  const StackedDensity stack = stack_weights(lib, d, 5, 7);
  Eigen::RowVectorXd x(1);
  x << -0.2;
  for (double level : {0.1, 0.5, 0.9}) {
    const double qv = stack.quantile(x, level, -10.0, 10.0);
    CHECK(stack.cdf(x, qv) == doctest::Approx(level).epsilon(1e-6));
  }

  const GridDistribution g = to_grid(stack, d.covariates, 10);
  g.validate();
  CHECK(g.n() == d.n());
  CHECK(g.atoms() == 9);
}
