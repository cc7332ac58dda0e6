#include "qte/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "qte/estimators.hpp"
#include "qte/inference.hpp"

namespace qte {

Scenario parse_scenario(const std::string& s) {
  if (s == "a") return Scenario::A;
  if (s == "b") return Scenario::B;
  if (s == "c") return Scenario::C;
  if (s == "d") return Scenario::D;
  throw std::invalid_argument("unknown scenario '" + s + "', expected a|b|c|d");
}

std::string scenario_label(Scenario s) {
  switch (s) {
    case Scenario::A: return "a";
    case Scenario::B: return "b";
    case Scenario::C: return "c";
    case Scenario::D: return "d";
  }
  throw std::logic_error("scenario_label: bad enum");
}

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  std::uint64_t state = seed ^ (0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(rep + 1));
  std::uint64_t out = splitmix64(state);
  out ^= splitmix64(state);
  return out;
}

KsData generate_ks(Eigen::Index n, std::mt19937_64& rng, double shift) {
  if (n < 1) throw std::invalid_argument("generate_ks: n must be >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  KsData d;
  d.W.resize(n, 4);
  d.X.resize(n, 4);
  d.T.resize(n);
  d.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) d.W(i, j) = gauss(rng);
    const double noise = gauss(rng);
    const double u = unif(rng);
    const double w1 = d.W(i, 0), w2 = d.W(i, 1), w3 = d.W(i, 2), w4 = d.W(i, 3);
    const double e = expit(-w1 + 0.5 * w2 - 0.25 * w3 - 0.1 * w4);
    d.T[i] = u < e ? 1.0 : 0.0;
    d.Y[i] = 210.0 + 27.4 * w1 + 13.7 * (w2 + w3 + w4) + noise + shift * d.T[i];
    d.X(i, 0) = std::exp(w1 / 2.0);
    d.X(i, 1) = w2 / (1.0 + std::exp(w1)) + 10.0;
    d.X(i, 2) = std::pow(w1 * w3 / 25.0 + 0.6, 3.0);
    d.X(i, 3) = std::pow(w2 + w4 + 20.0, 2.0);
  }
  return d;
}

namespace {

Eigen::MatrixXd subset_rows(const Eigen::MatrixXd& M,
                            const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = M.row(rows[r]);
  }
  return out;
}

Eigen::VectorXd subset(const Eigen::VectorXd& v,
                       const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  }
  return out;
}

}  // namespace

ScenarioFit fit_scenario(const KsData& data, Scenario scenario, int grid_size) {
  const bool e_correct = scenario == Scenario::A || scenario == Scenario::C;
  const bool g_correct = scenario == Scenario::A || scenario == Scenario::B;
  const Eigen::MatrixXd& De = e_correct ? data.W : data.X;
  const Eigen::MatrixXd& Dg = g_correct ? data.W : data.X;

  const LogisticModel pm = fit_logistic(De, data.T);
  Eigen::VectorXd e_hat = pm.predict(De);
  for (Eigen::Index i = 0; i < e_hat.size(); ++i) {
    e_hat[i] = trim_propensity(e_hat[i]);
  }

  std::vector<Eigen::Index> treated, control;
  for (Eigen::Index i = 0; i < data.T.size(); ++i) {
    (data.T[i] == 1.0 ? treated : control).push_back(i);
  }
  if (treated.empty() || control.empty()) {
    throw std::invalid_argument("fit_scenario: an arm has no units");
  }

  const GaussianRegressionModel m1 =
      fit_gaussian_regression(subset_rows(Dg, treated), subset(data.Y, treated));
  const GaussianRegressionModel m0 =
      fit_gaussian_regression(subset_rows(Dg, control), subset(data.Y, control));

  ScenarioFit fit;
  fit.arm1 = {e_hat, discretize_gaussian(m1, Dg, grid_size)};
  fit.arm0 = {e_hat, discretize_gaussian(m0, Dg, grid_size)};
  return fit;
}

namespace {

struct EstimatorRecord {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

struct RepRecord {
  // Indexed [q][estimator], estimator order as in the spec.
  std::vector<std::vector<EstimatorRecord>> est;
  std::vector<char> tmle_covered;   // per q, meaningful when tmle ok
  std::vector<char> tmle_rejected;  // per q
  std::vector<double> tmle_iterations;
  int tmle_runs = 0;
  int tmle_converged = 0;
  int tmle_score_ok = 0;
  int tmle_monotone = 0;
};

bool path_nondecreasing(const std::vector<double>& path) {
  double prev = 0.0;  // the untilted model contributes zero gain
  for (double v : path) {
    if (v < prev - 1e-9) return false;
    prev = v;
  }
  return true;
}

void note_tmle_arm(const TmleResult& arm, double n, RepRecord& rec) {
  ++rec.tmle_runs;
  if (arm.diagnostics.converged) {
    ++rec.tmle_converged;
    if (arm.diagnostics.score_residual <= 5e-4 * std::pow(n, -0.6)) {
      ++rec.tmle_score_ok;
    }
  }
  if (path_nondecreasing(arm.loglik_path)) ++rec.tmle_monotone;
}

RepRecord run_replication(const ScenarioSpec& spec, int rep) {
  RepRecord rec;
  const std::size_t n_q = spec.q_levels.size();
  const std::size_t n_est = spec.estimators.size();
  rec.est.assign(n_q, std::vector<EstimatorRecord>(n_est));
  rec.tmle_covered.assign(n_q, 0);
  rec.tmle_rejected.assign(n_q, 0);
  rec.tmle_iterations.assign(n_q, 0.0);

  std::mt19937_64 rng(replication_seed(spec.seed, rep));
  const KsData data = generate_ks(spec.n, rng, spec.shift);

  ScenarioFit fit;
  try {
    fit = fit_scenario(data, spec.scenario, spec.grid_size);
  } catch (const std::exception&) {
    return rec;  // every estimator in this replication counts as failed
  }

  const Eigen::Index n = data.T.size();
  Dataset d1{data.X, data.T, data.Y, EstimandKind::MissingOutcome};
  Dataset d0{data.X, Eigen::VectorXd::Ones(n) - data.T, data.Y,
             EstimandKind::MissingOutcome};
  const Eigen::VectorXd e0 = (Eigen::VectorXd::Ones(n) - fit.arm1.propensity)
                                 .cwiseMax(kPropensityFloor);
  const NuisancePair nuis0{e0, fit.arm0.conditional_distribution};

  for (std::size_t qi = 0; qi < n_q; ++qi) {
    const double q = spec.q_levels[qi];
    for (std::size_t ei = 0; ei < n_est; ++ei) {
      const std::string& name = spec.estimators[ei];
      EstimatorRecord& out = rec.est[qi][ei];
      try {
        if (name == "od") {
          out.value = estimate_od(d1, fit.arm1.conditional_distribution, q) -
                      estimate_od(d0, fit.arm0.conditional_distribution, q);
        } else if (name == "ipw") {
          out.value = estimate_ipw(d1, fit.arm1.propensity, q) -
                      estimate_ipw(d0, e0, q);
        } else if (name == "firpo") {
          out.value = estimate_firpo(d1, fit.arm1.propensity, q) -
                      estimate_firpo(d0, e0, q);
        } else if (name == "aipw") {
          out.value = estimate_aipw(d1, fit.arm1, q) -
                      estimate_aipw(d0, nuis0, q);
        } else if (name == "tmle") {
          const EffectResult res =
              effect_on_quantile_full(d1, fit.arm1, fit.arm0, q);
          out.value = res.effect;
          note_tmle_arm(res.arm1, static_cast<double>(n), rec);
          note_tmle_arm(res.arm0, static_cast<double>(n), rec);
          rec.tmle_iterations[qi] = 0.5 * (res.arm1.diagnostics.iterations +
                                           res.arm0.diagnostics.iterations);

          const Eigen::VectorXd uw =
              Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
          const double f1 = density_at(res.arm1.tilted, uw, res.arm1.theta, n);
          const double f0 = density_at(res.arm0.tilted, uw, res.arm0.theta, n);
          Eigen::VectorXd diff(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const double e = fit.arm1.propensity[i];
            const double d1i = eif_missing(data.T[i], data.Y[i], e,
                                           res.arm1.gbar[i], res.arm1.theta, q, f1);
            const double d0i = eif_missing(1.0 - data.T[i], data.Y[i], e0[i],
                                           res.arm0.gbar[i], res.arm0.theta, q, f0);
            diff[i] = d1i - d0i;
          }
          const EstimateReport rpt =
              wald_report(res.effect, diff, spec.ci_level);
          rec.tmle_covered[qi] =
              (rpt.ci_low <= spec.shift && spec.shift <= rpt.ci_high) ? 1 : 0;
          rec.tmle_rejected[qi] =
              (rpt.ci_low > 0.0 || rpt.ci_high < 0.0) ? 1 : 0;
        } else {
          throw std::invalid_argument("unknown estimator '" + name + "'");
        }
        if (!std::isfinite(out.value)) throw std::runtime_error("non-finite estimate");
        out.ok = true;
      } catch (const std::exception&) {
        out.ok = false;
        out.value = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return rec;
}

}  // namespace

SimulationSummary run_monte_carlo(const ScenarioSpec& spec) {
  if (spec.reps < 1) throw std::invalid_argument("run_monte_carlo: reps >= 1");
  if (spec.n < 2) throw std::invalid_argument("run_monte_carlo: n >= 2");
  for (double q : spec.q_levels) {
    if (!(q > 0.0 && q < 1.0)) {
      throw std::invalid_argument("run_monte_carlo: q levels must be in (0,1)");
    }
  }
  if (spec.estimators.empty()) {
    throw std::invalid_argument("run_monte_carlo: no estimators requested");
  }

  std::vector<RepRecord> records(static_cast<std::size_t>(spec.reps));
  const int workers =
      std::max(1, std::min(spec.threads, spec.reps));
  if (workers == 1) {
    for (int rep = 0; rep < spec.reps; ++rep) {
      records[static_cast<std::size_t>(rep)] = run_replication(spec, rep);
    }
  } else {
    std::atomic<int> next{0};
    auto work = [&] {
      for (;;) {
        const int rep = next.fetch_add(1);
        if (rep >= spec.reps) return;
        records[static_cast<std::size_t>(rep)] = run_replication(spec, rep);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  SimulationSummary summary;
  const double truth = spec.shift;
  for (std::size_t qi = 0; qi < spec.q_levels.size(); ++qi) {
    for (std::size_t ei = 0; ei < spec.estimators.size(); ++ei) {
      CellSummary cell;
      cell.scenario = scenario_label(spec.scenario);
      cell.n = spec.n;
      cell.q = spec.q_levels[qi];
      cell.estimator = spec.estimators[ei];
      cell.reps = spec.reps;

      double sum = 0.0, sumsq_err = 0.0;
      int ok_count = 0, covered = 0, rejected = 0;
      double iter_sum = 0.0;
      std::vector<double> values;
      values.reserve(records.size());
      for (const RepRecord& rec : records) {
        const EstimatorRecord& er = rec.est[qi][ei];
        if (!er.ok) continue;
        ++ok_count;
        sum += er.value;
        sumsq_err += (er.value - truth) * (er.value - truth);
        values.push_back(er.value);
        if (cell.estimator == "tmle") {
          covered += rec.tmle_covered[qi];
          rejected += rec.tmle_rejected[qi];
          iter_sum += rec.tmle_iterations[qi];
        }
      }
      cell.failures = spec.reps - ok_count;
      if (ok_count > 0) {
        const double mean = sum / ok_count;
        cell.bias = mean - truth;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        cell.sd = std::sqrt(ss / ok_count);
        cell.rmse = std::sqrt(sumsq_err / ok_count);
        if (cell.estimator == "tmle") {
          cell.coverage = static_cast<double>(covered) / ok_count;
          cell.has_coverage = true;
          cell.rejection_rate = static_cast<double>(rejected) / ok_count;
          cell.mean_iterations = iter_sum / ok_count;
        }
      }
      summary.cells.push_back(std::move(cell));
    }
  }
  for (const RepRecord& rec : records) {
    summary.tmle_runs += rec.tmle_runs;
    summary.tmle_converged += rec.tmle_converged;
    summary.tmle_score_ok += rec.tmle_score_ok;
    summary.tmle_monotone += rec.tmle_monotone;
  }
  return summary;
}

}  // namespace qte
