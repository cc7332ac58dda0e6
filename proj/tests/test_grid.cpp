#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "qte/grid.hpp"
#include "qte/normal.hpp"

using namespace qte;

namespace {

// Reference implementation: materialize every atom, sort, invert.
double brute_marginal_quantile(const GridDistribution& dist,
                               const Eigen::VectorXd& uw, double q) {
  std::vector<std::pair<double, double>> atoms;
  const double total = uw.sum();
  for (Eigen::Index i = 0; i < dist.n(); ++i) {
    for (Eigen::Index k = 0; k < dist.atoms(); ++k) {
      atoms.push_back({dist.grid(i, k), uw[i] / total * dist.weights(i, k)});
    }
  }
  std::sort(atoms.begin(), atoms.end());
  double cum = 0.0;
  for (const auto& [v, w] : atoms) {
    cum += w;
    if (cum >= q - 1e-13) return v;
  }
  return atoms.back().first;
}

GridDistribution random_grid(std::mt19937_64& rng, int n, int A) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  Eigen::MatrixXd Q(n, A), W(n, A);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(A);
    for (auto& v : row) v = gauss(rng);
    std::sort(row.begin(), row.end());
    double s = 0.0;
    for (int k = 0; k < A; ++k) {
      Q(i, k) = row[static_cast<std::size_t>(k)];
      W(i, k) = unif(rng);
      s += W(i, k);
    }
    W.row(i) /= s;
  }
  GridDistribution d{std::move(Q), std::move(W)};
  d.validate();
  return d;
}

}  // namespace

TEST_CASE("normal quantile matches tabled values") {
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
  CHECK(norm_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-10));
  CHECK(norm_quantile(0.999) == doctest::Approx(3.090232306167814).epsilon(1e-9));
  CHECK(norm_cdf(norm_quantile(0.123)) == doctest::Approx(0.123).epsilon(1e-12));
  CHECK_THROWS(norm_quantile(0.0));
  CHECK_THROWS(norm_quantile(1.0));
}

TEST_CASE("make_uniform_grid validates and assigns uniform masses") {
  Eigen::MatrixXd Q(2, 3);
  Q << 1.0, 2.0, 3.0, -1.0, 0.0, 5.0;
  const GridDistribution d = make_uniform_grid(Q);
  CHECK(d.weights(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(d.weights(1, 2) == doctest::Approx(1.0 / 3.0));

  Eigen::MatrixXd bad(1, 2);
  bad << 2.0, 1.0;
  CHECK_THROWS_WITH_AS(make_uniform_grid(bad),
                       doctest::Contains("row 0"), std::invalid_argument);
}

TEST_CASE("marginal CDF merges ties and inverts with the inf convention") {
  // Atom set {1 (mass .25), 2 (.5), 3 (.25)} with a duplicated atom at 2.
  MarginalCdf F({1.0, 2.0, 2.0, 3.0}, {0.25, 0.25, 0.25, 0.25});
  CHECK(F(0.5) == doctest::Approx(0.0));
  CHECK(F(1.0) == doctest::Approx(0.25));
  CHECK(F(2.0) == doctest::Approx(0.75));
  CHECK(F(2.5) == doctest::Approx(0.75));
  CHECK(F(3.0) == doctest::Approx(1.0));

  CHECK(F.quantile(0.25) == doctest::Approx(1.0));
  CHECK(F.quantile(0.26) == doctest::Approx(2.0));
  CHECK(F.quantile(0.75) == doctest::Approx(2.0));
  CHECK(F.quantile(0.76) == doctest::Approx(3.0));
}

TEST_CASE("grid quantile matches the brute-force sorted inversion") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uq(0.05, 0.95);
  std::uniform_real_distribution<double> uwgt(0.1, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const GridDistribution d = random_grid(rng, 12, 7);
    Eigen::VectorXd uw(12);
    for (Eigen::Index i = 0; i < 12; ++i) uw[i] = uwgt(rng);
    const double q = uq(rng);
    const double expected = brute_marginal_quantile(d, uw, q);
    CHECK(grid_marginal_quantile(d, uw, q) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(invert_cdf(marginal_cdf(d, uw), q) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("weighted quantile follows the Hajek convention") {
  Eigen::VectorXd y(4), h(4);
  y << 10.0, 20.0, 30.0, 40.0;
  h << 1.0, 1.0, 1.0, 1.0;
  CHECK(weighted_quantile(y, h, 0.5) == doctest::Approx(20.0));
  CHECK(weighted_quantile(y, h, 0.51) == doctest::Approx(30.0));

  h << 3.0, 1.0, 1.0, 1.0;  // heavy first atom drags the median down
  CHECK(weighted_quantile(y, h, 0.5) == doctest::Approx(10.0));
}

TEST_CASE("row_cdf is a step function in y") {
  Eigen::MatrixXd Q(1, 3);
  Q << 0.0, 1.0, 2.0;
  const GridDistribution d = make_uniform_grid(Q);
  CHECK(d.row_cdf(0, -0.1) == doctest::Approx(0.0));
  CHECK(d.row_cdf(0, 0.0) == doctest::Approx(1.0 / 3.0));
  CHECK(d.row_cdf(0, 1.5) == doctest::Approx(2.0 / 3.0));
  CHECK(d.row_cdf(0, 2.0) == doctest::Approx(1.0));
}

TEST_CASE("propensity trim floors at 1e-10") {
  CHECK(trim_propensity(0.5) == doctest::Approx(0.5));
  CHECK(trim_propensity(0.0) == doctest::Approx(1e-10));
  CHECK(trim_propensity(-0.2) == doctest::Approx(1e-10));
}
