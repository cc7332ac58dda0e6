#include "qte/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace qte {

namespace {

void row_prefix_sums(const Eigen::MatrixXd& w, Eigen::MatrixXd& prefix) {
  const Eigen::Index n = w.rows();
  const Eigen::Index A = w.cols();
  prefix.resize(n, A + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    prefix(i, 0) = 0.0;
    for (Eigen::Index k = 0; k < A; ++k) {
      prefix(i, k + 1) = prefix(i, k) + w(i, k);
    }
  }
}

// Number of atoms in row i that are <= v (rows sorted nondecreasing).
Eigen::Index row_count_le(const Eigen::MatrixXd& Q, Eigen::Index i, double v) {
  Eigen::Index lo = 0, hi = Q.cols();
  while (lo < hi) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (Q(i, mid) <= v) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double mixture_cdf(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& prefix,
                   const Eigen::VectorXd& uw, double v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    if (uw[i] == 0.0) continue;
    s += uw[i] * prefix(i, row_count_le(Q, i, v));
  }
  return s;
}

// Smallest atom y* with F(y*) >= q, by value bisection over the per-row
// sorted atoms. Exact step-function inversion.
double mixture_quantile(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& prefix,
                        const Eigen::VectorXd& uw, double q) {
  double lo = Q.minCoeff();
  double hi = Q.maxCoeff();
  if (mixture_cdf(Q, prefix, uw, lo) >= q) return lo;
  const double tol = 1e-13 * std::max({1.0, std::abs(lo), std::abs(hi)});
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (mixture_cdf(Q, prefix, uw, mid) >= q) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  std::vector<double> cands;
  for (Eigen::Index i = 0; i < Q.rows(); ++i) {
    if (uw[i] == 0.0) continue;
    for (Eigen::Index k = row_count_le(Q, i, lo); k < Q.cols(); ++k) {
      const double v = Q(i, k);
      if (v > hi) break;
      if (v > lo) cands.push_back(v);
    }
  }
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  for (double v : cands) {
    if (mixture_cdf(Q, prefix, uw, v) >= q) return v;
  }
  return hi;
}

struct TmleCoreInput {
  const Eigen::MatrixXd* Q = nullptr;
  Eigen::MatrixXd w;       // initial grid masses, mutated in place
  const Eigen::VectorXd* y = nullptr;
  Eigen::VectorXd lik;     // indicator selecting log-likelihood units
  Eigen::VectorXd clever;  // per-unit scale of the clever covariate
  Eigen::VectorXd uw;      // normalized unit weights for the marginal CDF
  double q = 0.5;
  double score_denom = 1.0;
  double n_tol = 1.0;  // n entering the stopping rule
};

// One-dimensional tilting objective. With the two-valued clever covariate
// per row (atoms at/below theta share one value, the rest another), the
// log-normalizer collapses to a two-term log-sum-exp per unit.
struct EpsObjective {
  const Eigen::VectorXd& lik;
  const Eigen::VectorXd& Do;
  const Eigen::VectorXd& a;  // clever * (1 - gbar)
  const Eigen::VectorXd& b;  // clever * (0 - gbar)
  const Eigen::VectorXd& S;  // gbar: mass at or below theta
  double nunits;

  void eval(double e, double* obj, double* grad, double* hess) const {
    double o = 0.0, g = 0.0, h = 0.0;
    for (Eigen::Index i = 0; i < lik.size(); ++i) {
      if (lik[i] == 0.0) continue;
      // Rows with all grid mass on one side of theta cannot be moved by the
      // tilt; keeping them would add a term linear in epsilon and let the
      // maximizer run away.
      if (S[i] <= 0.0 || S[i] >= 1.0) continue;
      const double la = e * a[i];
      const double lb = e * b[i];
      const double m = std::max(la, lb);
      const double ea = S[i] * std::exp(la - m);
      const double eb = (1.0 - S[i]) * std::exp(lb - m);
      const double denom = ea + eb;
      const double lse = m + std::log(denom);
      const double mu = (ea * a[i] + eb * b[i]) / denom;
      const double m2 = (ea * a[i] * a[i] + eb * b[i] * b[i]) / denom;
      o += lik[i] * (e * Do[i] - lse);
      g += lik[i] * (Do[i] - mu);
      h -= lik[i] * (m2 - mu * mu);
    }
    if (obj) *obj = o / nunits;
    if (grad) *grad = g / nunits;
    if (hess) *hess = h / nunits;
  }

  double objective(double e) const {
    double o;
    eval(e, &o, nullptr, nullptr);
    return o;
  }
};

// Maximize the concave tilting objective by safeguarded Newton from 0.
double solve_epsilon(const EpsObjective& f) {
  double e = 0.0;
  double obj, grad, hess;
  f.eval(0.0, &obj, &grad, &hess);
  const double g0 = std::abs(grad);
  for (int it = 0; it < 100; ++it) {
    if (std::abs(grad) <= 1e-12 * (1.0 + g0)) break;
    double step = (hess < -1e-300) ? -grad / hess
                                   : (grad > 0.0 ? 1.0 : -1.0);
    double cand_obj;
    int halvings = 0;
    while (true) {
      cand_obj = f.objective(e + step);
      if (cand_obj >= obj || halvings >= 60) break;
      step *= 0.5;
      ++halvings;
    }
    if (cand_obj < obj) break;
    e += step;
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(e))) {
      f.eval(e, &obj, &grad, &hess);
      break;
    }
    f.eval(e, &obj, &grad, &hess);
  }
  return e;
}

TmleResult tmle_core(TmleCoreInput in) {
  const Eigen::MatrixXd& Q = *in.Q;
  const Eigen::VectorXd& y = *in.y;
  const Eigen::Index n = Q.rows();
  const double nunits = static_cast<double>(n);
  if (in.lik.sum() <= 0.0) {
    throw std::invalid_argument("tmle: no units contribute to the likelihood");
  }
  if (!(in.q > 0.0 && in.q < 1.0)) {
    throw std::invalid_argument("tmle: q must be in (0,1)");
  }

  const double eps_tol = 1e-4 * std::pow(in.n_tol, -0.6);
  const int max_iter = 20;

  TmleResult res;
  Eigen::MatrixXd prefix;
  Eigen::VectorXd gbar(n), Do(n), a(n), b(n);
  double theta = 0.0;
  double cum_loglik = 0.0;
  bool stopped = false;

  for (int iter = 1; iter <= max_iter; ++iter) {
    row_prefix_sums(in.w, prefix);
    theta = mixture_quantile(Q, prefix, in.uw, in.q);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      counts[static_cast<std::size_t>(i)] = row_count_le(Q, i, theta);
      gbar[i] = prefix(i, counts[static_cast<std::size_t>(i)]);
      Do[i] = in.clever[i] * ((y[i] <= theta ? 1.0 : 0.0) - gbar[i]);
      a[i] = in.clever[i] * (1.0 - gbar[i]);
      b[i] = -in.clever[i] * gbar[i];
    }
    EpsObjective f{in.lik, Do, a, b, gbar, nunits};
    const double eps = solve_epsilon(f);
    cum_loglik += f.objective(eps);
    res.loglik_path.push_back(cum_loglik);
    res.diagnostics.iterations = iter;
    res.diagnostics.final_epsilon = eps;

    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index c = counts[static_cast<std::size_t>(i)];
      if (c == 0 || c == Q.cols()) continue;  // tilt factor is identically 1
      const double la = eps * a[i];
      const double lb = eps * b[i];
      const double m = std::max(la, lb);
      const double fa = std::exp(la - m);
      const double fb = std::exp(lb - m);
      const double norm = gbar[i] * fa + (1.0 - gbar[i]) * fb;
      for (Eigen::Index k = 0; k < c; ++k) in.w(i, k) *= fa / norm;
      for (Eigen::Index k = c; k < Q.cols(); ++k) in.w(i, k) *= fb / norm;
    }

    if (std::abs(eps) < eps_tol) {
      stopped = true;
      break;
    }
  }

  // Final quantile and score residual under the tilted masses. The residual
  // is the weighted score display of the fluctuation model; the remaining
  // piece of the influence function equation, F-tilde(theta) - q, is pinned
  // by the quantile definition up to the jump at theta.
  row_prefix_sums(in.w, prefix);
  theta = mixture_quantile(Q, prefix, in.uw, in.q);
  double score1 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    gbar[i] = prefix(i, row_count_le(Q, i, theta));
    score1 += in.lik[i] * in.clever[i] *
              ((y[i] <= theta ? 1.0 : 0.0) - gbar[i]);
  }
  res.diagnostics.score_residual = std::abs(score1 / in.score_denom);
  // The epsilon stopping rule alone can fire at a fixed point where rows
  // with one-sided grid support leave the score equation unsolved; only
  // claim convergence when the targeted equation actually holds.
  res.diagnostics.converged =
      stopped &&
      res.diagnostics.score_residual <= 5e-4 * std::pow(in.n_tol, -0.6);
  res.theta = theta;
  res.gbar = gbar;
  res.tilted.grid = Q;
  res.tilted.weights = std::move(in.w);
  return res;
}

Eigen::VectorXd estimand_unit_weights(const Dataset& data) {
  if (data.kind == EstimandKind::EffectOnTreated) {
    if (data.indicator.sum() <= 0.0) {
      throw std::invalid_argument("estimator: no treated units");
    }
    return data.indicator / data.indicator.sum();
  }
  return Eigen::VectorXd::Constant(data.n(), 1.0 / static_cast<double>(data.n()));
}

void check_alignment(const Dataset& data, const GridDistribution& G) {
  if (G.n() != data.n()) {
    throw std::invalid_argument("estimator: grid not aligned with data rows");
  }
}

}  // namespace

double estimate_od(const Dataset& data, const GridDistribution& G, double q) {
  check_alignment(data, G);
  return grid_marginal_quantile(G, estimand_unit_weights(data) *
                                       static_cast<double>(data.n()),
                                q);
}

double estimate_ipw(const Dataset& data, const Eigen::VectorXd& e_hat, double q,
                    bool* warning) {
  if (e_hat.size() != data.n()) {
    throw std::invalid_argument("estimate_ipw: propensity size mismatch");
  }
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("estimate_ipw: q must be in (0,1)");
  }
  const double n = static_cast<double>(data.n());
  std::vector<std::pair<double, double>> obs;  // (y, h/n)
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.indicator[i] == 1.0) {
      obs.emplace_back(data.outcome[i], 1.0 / (trim_propensity(e_hat[i]) * n));
    }
  }
  if (obs.empty()) throw std::invalid_argument("estimate_ipw: no observed units");
  std::sort(obs.begin(), obs.end());
  double cum = 0.0;
  for (const auto& [yv, jump] : obs) {
    cum += jump;
    // accumulation tolerance so exact-weight reductions stay exact
    if (cum - q >= -1e-12) {
      if (warning) *warning = false;
      return yv;
    }
  }
  if (warning) *warning = true;  // weights sum below q*n: equation unsolvable
  return obs.back().first;
}

double estimate_firpo(const Dataset& data, const Eigen::VectorXd& e_hat,
                      double q) {
  if (e_hat.size() != data.n()) {
    throw std::invalid_argument("estimate_firpo: propensity size mismatch");
  }
  std::vector<double> yv, hv;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.indicator[i] == 1.0) {
      yv.push_back(data.outcome[i]);
      hv.push_back(1.0 / trim_propensity(e_hat[i]));
    }
  }
  if (yv.empty()) {
    throw std::invalid_argument("estimate_firpo: no observed units");
  }
  Eigen::VectorXd ye = Eigen::Map<Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));
  Eigen::VectorXd he = Eigen::Map<Eigen::VectorXd>(hv.data(), static_cast<Eigen::Index>(hv.size()));
  return weighted_quantile(ye, he, q);
}

double estimate_aipw(const Dataset& data, const NuisancePair& nuis, double q,
                     bool* warning) {
  const GridDistribution& G = nuis.conditional_distribution;
  check_alignment(data, G);
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("estimate_aipw: q must be in (0,1)");
  }
  const double n = static_cast<double>(data.n());

  struct Event {
    double value;
    double jump;
  };
  std::vector<Event> events;
  events.reserve(static_cast<std::size_t>(data.n() * (G.atoms() + 1)));
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double h = data.indicator[i] == 1.0
                         ? 1.0 / trim_propensity(nuis.propensity[i])
                         : 0.0;
    if (h > 0.0) events.push_back({data.outcome[i], h / n});
    const double scale = (1.0 - h) / n;
    for (Eigen::Index k = 0; k < G.atoms(); ++k) {
      events.push_back({G.grid(i, k), scale * G.weights(i, k)});
    }
  }
  std::sort(events.begin(), events.end(),
            [](const Event& x, const Event& y) { return x.value < y.value; });

  double cum = 0.0;
  double prev_f = -q;
  double best_theta = 0.0, best_abs = std::numeric_limits<double>::infinity();
  bool found = false;
  std::size_t j = 0;
  double first_theta = 0.0, first_abs = 0.0, last_theta = 0.0, last_abs = 0.0;
  bool have_first = false;
  while (j < events.size()) {
    const double v = events[j].value;
    while (j < events.size() && events[j].value == v) {
      cum += events[j].jump;
      ++j;
    }
    const double f = cum - q;
    if (!have_first) {
      first_theta = v;
      first_abs = std::abs(f);
      have_first = true;
    }
    last_theta = v;
    last_abs = std::abs(f);
    const bool crossing = (prev_f < 0.0 && f >= 0.0) || (prev_f > 0.0 && f <= 0.0);
    if (crossing && std::abs(f) < best_abs) {
      best_abs = std::abs(f);
      best_theta = v;
      found = true;
    }
    prev_f = f;
  }
  if (found) {
    if (warning) *warning = false;
    return best_theta;
  }
  if (warning) *warning = true;
  return first_abs <= last_abs ? first_theta : last_theta;
}

TmleResult tmle_missing(const Dataset& data, const NuisancePair& nuis,
                        double q) {
  check_alignment(data, nuis.conditional_distribution);
  const Eigen::Index n = data.n();
  TmleCoreInput in;
  in.Q = &nuis.conditional_distribution.grid;
  in.w = nuis.conditional_distribution.weights;
  in.y = &data.outcome;
  in.lik = data.indicator;
  in.clever.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    in.clever[i] = 1.0 / trim_propensity(nuis.propensity[i]);
  }
  in.uw = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  in.q = q;
  in.score_denom = static_cast<double>(n);
  in.n_tol = static_cast<double>(n);
  return tmle_core(std::move(in));
}

TmleResult tmle_att(const Dataset& data, const NuisancePair& nuis, double q) {
  if (data.kind != EstimandKind::EffectOnTreated) {
    throw std::invalid_argument("tmle_att: estimand must be EffectOnTreated");
  }
  check_alignment(data, nuis.conditional_distribution);
  const Eigen::Index n = data.n();
  const double n_treated = data.indicator.sum();
  if (n_treated <= 0.0) throw std::invalid_argument("tmle_att: no treated units");
  if (n_treated >= static_cast<double>(n)) {
    throw std::invalid_argument("tmle_att: no control units");
  }
  TmleCoreInput in;
  in.Q = &nuis.conditional_distribution.grid;
  in.w = nuis.conditional_distribution.weights;
  in.y = &data.outcome;
  in.lik = Eigen::VectorXd::Ones(n) - data.indicator;
  in.clever.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = std::min(std::max(nuis.propensity[i], kPropensityFloor),
                              1.0 - kPropensityFloor);
    in.clever[i] = e / (1.0 - e);
  }
  in.uw = data.indicator / n_treated;
  in.q = q;
  in.score_denom = n_treated;
  in.n_tol = static_cast<double>(n);
  return tmle_core(std::move(in));
}

EffectResult effect_on_quantile_full(const Dataset& data,
                                     const NuisancePair& nuis_arm1,
                                     const NuisancePair& nuis_arm0, double q) {
  check_alignment(data, nuis_arm1.conditional_distribution);
  check_alignment(data, nuis_arm0.conditional_distribution);
  const Eigen::Index n = data.n();

  auto run_arm = [&](const NuisancePair& nuis, bool arm1) {
    TmleCoreInput in;
    in.Q = &nuis.conditional_distribution.grid;
    in.w = nuis.conditional_distribution.weights;
    in.y = &data.outcome;
    in.lik = arm1 ? data.indicator
                  : Eigen::VectorXd(Eigen::VectorXd::Ones(n) - data.indicator);
    in.clever.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = arm1 ? nuis.propensity[i] : 1.0 - nuis.propensity[i];
      in.clever[i] = 1.0 / trim_propensity(e);
    }
    in.uw = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    in.q = q;
    in.score_denom = static_cast<double>(n);
    in.n_tol = static_cast<double>(n);
    return tmle_core(std::move(in));
  };

  EffectResult res;
  res.arm1 = run_arm(nuis_arm1, true);
  res.arm0 = run_arm(nuis_arm0, false);
  res.effect = res.arm1.theta - res.arm0.theta;
  return res;
}

double effect_on_quantile(const Dataset& data, const NuisancePair& nuis_arm1,
                          const NuisancePair& nuis_arm0, double q) {
  return effect_on_quantile_full(data, nuis_arm1, nuis_arm0, q).effect;
}

}  // namespace qte
