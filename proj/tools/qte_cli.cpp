#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qte/estimators.hpp"
#include "qte/inference.hpp"
#include "qte/io.hpp"
#include "qte/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitPartialFailure = 4;

std::vector<std::string> parse_estimators(const std::string& csv) {
  std::vector<std::string> names;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

struct OutputSink {
  std::ofstream file;
  std::ostream* stream = &std::cout;

  explicit OutputSink(const std::string& path) {
    if (!path.empty()) {
      file.open(path);
      if (!file) throw std::invalid_argument("cannot open output file: " + path);
      stream = &file;
    }
  }
};

qte::NuisancePair fit_nuisances(const qte::Dataset& data, int grid_size) {
  const qte::LogisticModel pm =
      qte::fit_logistic(data.covariates, data.indicator);
  Eigen::VectorXd e = pm.predict(data.covariates);
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = qte::trim_propensity(e[i]);

  // Outcome model on the arm whose conditional law the estimand needs:
  // observed rows for the missing-outcome quantile, control rows for the
  // effect on the treated.
  const double model_arm =
      data.kind == qte::EstimandKind::MissingOutcome ? 1.0 : 0.0;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.indicator[i] == model_arm) rows.push_back(i);
  }
  if (rows.empty()) throw std::invalid_argument("outcome-model arm is empty");
  Eigen::MatrixXd Xm(static_cast<Eigen::Index>(rows.size()), data.p());
  Eigen::VectorXd ym(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Xm.row(static_cast<Eigen::Index>(r)) = data.covariates.row(rows[r]);
    ym[static_cast<Eigen::Index>(r)] = data.outcome[rows[r]];
  }
  const qte::GaussianRegressionModel om = qte::fit_gaussian_regression(Xm, ym);
  return {e, qte::discretize_gaussian(om, data.covariates, grid_size)};
}

qte::NamedReport point_report(const std::string& name, double q, double theta) {
  qte::NamedReport r;
  r.estimator = name;
  r.report.q = q;
  r.report.theta_hat = theta;
  r.report.std_error = 0.0;
  r.report.ci_low = theta;
  r.report.ci_high = theta;
  r.report.degenerate_ci = true;
  return r;
}

qte::NamedReport tmle_report(const qte::Dataset& data,
                             const qte::NuisancePair& nuis, double q,
                             double ci_level) {
  const Eigen::Index n = data.n();
  qte::TmleResult res;
  Eigen::VectorXd uw;
  if (data.kind == qte::EstimandKind::MissingOutcome) {
    res = qte::tmle_missing(data, nuis, q);
    uw = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  } else {
    res = qte::tmle_att(data, nuis, q);
    uw = data.indicator / data.indicator.sum();
  }
  bool degenerate = false;
  const double f = qte::density_at(res.tilted, uw, res.theta, n, &degenerate);
  Eigen::VectorXd eif(n);
  const double p_treated = data.indicator.mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.kind == qte::EstimandKind::MissingOutcome) {
      eif[i] = qte::eif_missing(data.indicator[i], data.outcome[i],
                                nuis.propensity[i], res.gbar[i], res.theta, q, f);
    } else {
      eif[i] = qte::eif_att(data.indicator[i], data.outcome[i],
                            nuis.propensity[i], res.gbar[i], res.theta, q, f,
                            p_treated);
    }
  }
  qte::NamedReport out;
  out.estimator = "tmle";
  out.report = qte::wald_report(res.theta, eif, ci_level);
  out.report.q = q;
  out.report.density_at_theta = f;
  out.report.diagnostics = res.diagnostics;
  out.report.degenerate_ci = out.report.degenerate_ci || degenerate;
  return out;
}

int cmd_estimate(const std::string& input, const std::vector<double>& q_levels,
                 const std::string& estimand, const std::string& estimators_csv,
                 int grid_size, double ci_level, const std::string& format,
                 const std::string& output) {
  qte::Dataset data;
  try {
    data = qte::ingest_csv(input);
  } catch (const std::exception& ex) {
    std::cerr << "input error: " << ex.what() << "\n";
    return kExitInput;
  }

  const bool att = data.kind == qte::EstimandKind::EffectOnTreated;
  if (!estimand.empty()) {
    if ((estimand == "missing" && att) || (estimand == "att" && !att)) {
      std::cerr << "input error: --estimand " << estimand
                << " conflicts with the file's indicator column\n";
      return kExitInput;
    }
  }
  std::vector<std::string> names = parse_estimators(estimators_csv);
  if (names.size() == 1 && names[0] == "all") {
    names = att ? std::vector<std::string>{"od", "tmle"}
                : std::vector<std::string>{"od", "ipw", "firpo", "aipw", "tmle"};
  }
  for (const auto& name : names) {
    const bool known = name == "od" || name == "ipw" || name == "firpo" ||
                       name == "aipw" || name == "tmle";
    if (!known || (att && name != "od" && name != "tmle")) {
      std::cerr << "input error: estimator '" << name
                << "' is not available for this estimand\n";
      return kExitInput;
    }
  }

  std::vector<qte::NamedReport> reports;
  try {
    const qte::NuisancePair nuis = fit_nuisances(data, grid_size);
    for (double q : q_levels) {
      for (const auto& name : names) {
        if (name == "od") {
          reports.push_back(point_report(
              name, q,
              qte::estimate_od(data, nuis.conditional_distribution, q)));
        } else if (name == "ipw") {
          reports.push_back(point_report(
              name, q, qte::estimate_ipw(data, nuis.propensity, q)));
        } else if (name == "firpo") {
          reports.push_back(point_report(
              name, q, qte::estimate_firpo(data, nuis.propensity, q)));
        } else if (name == "aipw") {
          reports.push_back(
              point_report(name, q, qte::estimate_aipw(data, nuis, q)));
        } else {
          reports.push_back(tmle_report(data, nuis, q, ci_level));
        }
      }
    }
  } catch (const std::exception& ex) {
    std::cerr << "estimation error: " << ex.what() << "\n";
    return kExitEstimation;
  }

  try {
    OutputSink sink(output);
    if (format == "json") {
      qte::write_reports_json(*sink.stream, reports);
    } else {
      qte::write_reports_csv(*sink.stream, reports);
    }
  } catch (const std::exception& ex) {
    std::cerr << "input error: " << ex.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& scenario, long n, int reps,
                 const std::vector<double>& q_levels, std::uint64_t seed,
                 int grid_size, int threads, double shift, double ci_level,
                 const std::string& estimators_csv, const std::string& output) {
  std::vector<qte::Scenario> scenarios;
  try {
    if (scenario == "all") {
      scenarios = {qte::Scenario::A, qte::Scenario::B, qte::Scenario::C,
                   qte::Scenario::D};
    } else {
      scenarios = {qte::parse_scenario(scenario)};
    }
  } catch (const std::exception& ex) {
    std::cerr << "input error: " << ex.what() << "\n";
    return kExitInput;
  }

  std::vector<qte::CellSummary> cells;
  bool partial_failure = false;
  try {
    for (qte::Scenario sc : scenarios) {
      qte::ScenarioSpec spec;
      spec.n = n;
      spec.reps = reps;
      spec.scenario = sc;
      spec.q_levels = q_levels;
      spec.grid_size = grid_size;
      spec.seed = seed;
      spec.threads = threads;
      spec.shift = shift;
      spec.ci_level = ci_level;
      spec.estimators = parse_estimators(estimators_csv);
      if (spec.estimators.size() == 1 && spec.estimators[0] == "all") {
        spec.estimators = {"od", "ipw", "firpo", "aipw", "tmle"};
      }
      const qte::SimulationSummary summary = qte::run_monte_carlo(spec);
      for (const auto& cell : summary.cells) {
        if (cell.failures > 0.05 * cell.reps) partial_failure = true;
        cells.push_back(cell);
      }
    }
  } catch (const std::exception& ex) {
    std::cerr << "estimation error: " << ex.what() << "\n";
    return kExitEstimation;
  }

  try {
    OutputSink sink(output);
    qte::write_summary_csv(*sink.stream, cells);
  } catch (const std::exception& ex) {
    std::cerr << "input error: " << ex.what() << "\n";
    return kExitInput;
  }
  return partial_failure ? kExitPartialFailure : kExitOk;
}

int cmd_report(const std::string& input) {
  std::ifstream in(input);
  if (!in) {
    std::cerr << "input error: cannot open input file: " << input << "\n";
    return kExitInput;
  }
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    std::ostringstream row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v;
      std::istringstream num(cells[c]);
      if (!first && (num >> v) && num.eof() && cells[c].find('.') != std::string::npos) {
        row << std::setw(10) << std::fixed << std::setprecision(3) << v;
      } else {
        row << std::setw(10) << cells[c];
      }
      if (c + 1 < cells.size()) row << "  ";
    }
    std::cout << row.str() << "\n";
    first = false;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust quantile and quantile-effect estimation"};
  app.require_subcommand(1);

  std::string input, output, format = "csv", estimand, estimators = "all";
  std::string scenario = "all";
  std::vector<double> q_levels{0.5};
  long n = 500;
  int reps = 1000, grid_size = 500, threads = 1;
  std::uint64_t seed = 1;
  double ci_level = 0.95, shift = 0.0;

  CLI::App* est = app.add_subcommand("estimate", "Estimate quantiles from a CSV dataset");
  est->add_option("--input", input, "input CSV path")->required();
  est->add_option("--q", q_levels, "quantile levels in (0,1)");
  est->add_option("--estimand", estimand, "missing | att (defaults to the file's indicator column)");
  est->add_option("--estimators", estimators, "comma list of od,ipw,firpo,aipw,tmle or 'all'");
  est->add_option("--grid-size", grid_size, "atoms in the conditional grid");
  est->add_option("--ci-level", ci_level, "confidence level");
  est->add_option("--format", format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  est->add_option("--output", output, "output path (default stdout)");

  CLI::App* sim = app.add_subcommand("simulate", "Run the Monte Carlo benchmark");
  sim->add_option("--scenario", scenario, "a | b | c | d | all");
  sim->add_option("--n", n, "sample size per replication");
  sim->add_option("--reps", reps, "number of replications");
  sim->add_option("--q", q_levels, "quantile levels in (0,1)");
  sim->add_option("--seed", seed, "master RNG seed");
  sim->add_option("--grid-size", grid_size, "atoms in the conditional grid");
  sim->add_option("--threads", threads, "worker threads");
  sim->add_option("--shift", shift, "treated-arm outcome shift (true effect)");
  sim->add_option("--ci-level", ci_level, "confidence level");
  sim->add_option("--estimators", estimators, "comma list or 'all'");
  sim->add_option("--output", output, "output path (default stdout)");

  CLI::App* rep = app.add_subcommand("report", "Pretty-print a simulation summary CSV");
  rep->add_option("--input", input, "summary CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitInput;
  }

  for (double q : q_levels) {
    if (!(q > 0.0 && q < 1.0)) {
      std::cerr << "input error: q levels must lie in (0,1)\n";
      return kExitInput;
    }
  }

  if (est->parsed()) {
    return cmd_estimate(input, q_levels, estimand, estimators, grid_size,
                        ci_level, format, output);
  }
  if (sim->parsed()) {
    return cmd_simulate(scenario, n, reps, q_levels, seed, grid_size, threads,
                        shift, ci_level, estimators, output);
  }
  return cmd_report(input);
}
