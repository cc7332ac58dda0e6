#include "qte/inference.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qte/normal.hpp"

namespace qte {

double eif_missing(double m, double y, double e, double g_theta, double theta,
                   double q, double f_theta) {
  if (f_theta <= 0.0) {
    throw std::invalid_argument("eif_missing: f_theta must be positive");
  }
  const double resid = m / e * ((y <= theta ? 1.0 : 0.0) - g_theta);
  return -(resid + g_theta - q) / f_theta;
}

double eif_att(double t, double y, double e, double g_theta, double theta,
               double q, double f_theta, double p_treated) {
  if (f_theta <= 0.0) {
    throw std::invalid_argument("eif_att: f_theta must be positive");
  }
  if (!(p_treated > 0.0 && p_treated < 1.0)) {
    throw std::invalid_argument("eif_att: p_treated must be in (0,1)");
  }
  const double resid = (1.0 - t) / p_treated * e / (1.0 - e) *
                       ((y <= theta ? 1.0 : 0.0) - g_theta);
  const double tail = t / p_treated * (g_theta - q);
  return -(resid + tail) / f_theta;
}

namespace {

double kde_at(const double* values, const double* masses, std::size_t count,
              double total_mass, double theta, Eigen::Index n,
              bool* degenerate) {
  double mean = 0.0;
  for (std::size_t j = 0; j < count; ++j) mean += masses[j] * values[j];
  mean /= total_mass;
  double var = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    const double d = values[j] - mean;
    var += masses[j] * d * d;
  }
  var /= total_mass;
  const double sd = std::sqrt(var);
  if (degenerate) *degenerate = false;
  if (sd <= 0.0) {
    if (degenerate) *degenerate = true;
    return 1e-8;
  }
  const double bw = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
  double dens = 0.0;
  const double cutoff = 8.0 * bw;
  for (std::size_t j = 0; j < count; ++j) {
    const double d = values[j] - theta;
    if (d < -cutoff || d > cutoff) continue;
    dens += masses[j] * norm_pdf(d / bw);
  }
  dens /= total_mass * bw;
  return std::max(dens, 1e-8);
}

}  // namespace

double density_at(const MarginalCdf& F, double theta, Eigen::Index n,
                  bool* degenerate) {
  const auto& v = F.atom_values();
  const auto& m = F.atom_masses();
  double total = 0.0;
  for (double x : m) total += x;
  return kde_at(v.data(), m.data(), v.size(), total, theta, n, degenerate);
}

double density_at(const GridDistribution& dist,
                  const Eigen::VectorXd& unit_weights, double theta,
                  Eigen::Index n, bool* degenerate) {
  std::vector<double> values, masses;
  values.reserve(static_cast<std::size_t>(dist.n() * dist.atoms()));
  masses.reserve(values.capacity());
  double total = 0.0;
  for (Eigen::Index i = 0; i < dist.n(); ++i) {
    if (unit_weights[i] == 0.0) continue;
    for (Eigen::Index k = 0; k < dist.atoms(); ++k) {
      values.push_back(dist.grid(i, k));
      const double mass = unit_weights[i] * dist.weights(i, k);
      masses.push_back(mass);
      total += mass;
    }
  }
  if (values.empty() || total <= 0.0) {
    throw std::invalid_argument("density_at: empty marginal");
  }
  return kde_at(values.data(), masses.data(), values.size(), total, theta, n,
                degenerate);
}

EstimateReport wald_report(double theta_hat, const Eigen::VectorXd& eif_values,
                           double level) {
  const Eigen::Index n = eif_values.size();
  if (n < 2) throw std::invalid_argument("wald_report: need n >= 2");
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("wald_report: level must be in (0,1)");
  }
  const double mean = eif_values.mean();
  const double var =
      (eif_values.array() - mean).square().sum() / static_cast<double>(n - 1);
  EstimateReport rep;
  rep.theta_hat = theta_hat;
  rep.std_error = std::sqrt(var / static_cast<double>(n));
  rep.degenerate_ci = rep.std_error == 0.0;
  const double z = norm_quantile(0.5 * (1.0 + level));
  rep.ci_low = theta_hat - z * rep.std_error;
  rep.ci_high = theta_hat + z * rep.std_error;
  return rep;
}

std::pair<double, double> wald_test_effect(double effect, double std_error) {
  if (!(std_error > 0.0)) {
    throw std::invalid_argument("wald_test_effect: missing standard error");
  }
  const double z = effect / std_error;
  const double p = 2.0 * norm_cdf(-std::abs(z));
  return {z, p};
}

}  // namespace qte
