#include "qte/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace qte {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_na(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("non-numeric cell '" + s + "' at row " +
                                std::to_string(row) + ", column " +
                                std::to_string(col));
  }
}

std::string fmt(double v) {
  // shortest representation that round-trips exactly
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Dataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open input file: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("empty input file: " + path);
  }
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim_ws(h);

  Eigen::Index y_col = -1, ind_col = -1;
  EstimandKind kind = EstimandKind::MissingOutcome;
  std::vector<Eigen::Index> cov_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") {
      y_col = static_cast<Eigen::Index>(c);
    } else if (header[c] == "m" || header[c] == "t") {
      ind_col = static_cast<Eigen::Index>(c);
      kind = header[c] == "m" ? EstimandKind::MissingOutcome
                              : EstimandKind::EffectOnTreated;
    } else {
      cov_cols.push_back(static_cast<Eigen::Index>(c));
    }
  }
  if (y_col < 0) throw std::invalid_argument("missing required column 'y'");
  if (ind_col < 0) {
    throw std::invalid_argument("missing required indicator column 'm' or 't'");
  }
  if (cov_cols.empty()) {
    throw std::invalid_argument("no covariate columns found");
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_ws(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("row " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) +
                                  " cells, expected " +
                                  std::to_string(header.size()));
    }
    std::vector<double> parsed(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim_ws(cells[c]);
      if (static_cast<Eigen::Index>(c) == y_col && is_na(cell)) {
        parsed[c] = std::numeric_limits<double>::quiet_NaN();
      } else {
        parsed[c] = parse_cell(cell, line_no, c + 1);
      }
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw std::invalid_argument("no data rows in " + path);

  const auto n = static_cast<Eigen::Index>(rows.size());
  Dataset d;
  d.kind = kind;
  d.covariates.resize(n, static_cast<Eigen::Index>(cov_cols.size()));
  d.indicator.resize(n);
  d.outcome.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    d.indicator[i] = r[static_cast<std::size_t>(ind_col)];
    d.outcome[i] = r[static_cast<std::size_t>(y_col)];
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      d.covariates(i, static_cast<Eigen::Index>(c)) =
          r[static_cast<std::size_t>(cov_cols[c])];
    }
    if (kind == EstimandKind::MissingOutcome && d.indicator[i] == 1.0 &&
        !std::isfinite(d.outcome[i])) {
      throw std::invalid_argument("row " + std::to_string(i + 2) +
                                  ": observed row with missing outcome");
    }
  }
  d.validate();
  return d;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "y," << (data.kind == EstimandKind::MissingOutcome ? "m" : "t");
  for (Eigen::Index c = 0; c < data.p(); ++c) out << ",x" << (c + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (std::isfinite(data.outcome[i])) {
      out << fmt(data.outcome[i]);
    } else {
      out << "NA";
    }
    out << "," << fmt(data.indicator[i]);
    for (Eigen::Index c = 0; c < data.p(); ++c) {
      out << "," << fmt(data.covariates(i, c));
    }
    out << "\n";
  }
}

void write_reports_csv(std::ostream& out,
                       const std::vector<NamedReport>& reports) {
  out << "estimator,q,theta_hat,std_error,ci_low,ci_high,density_at_theta,"
         "iterations,final_epsilon,score_residual,converged,degenerate_ci\n";
  for (const auto& r : reports) {
    const EstimateReport& e = r.report;
    out << r.estimator << "," << fmt(e.q) << "," << fmt(e.theta_hat) << ","
        << fmt(e.std_error) << "," << fmt(e.ci_low) << "," << fmt(e.ci_high)
        << "," << fmt(e.density_at_theta) << "," << e.diagnostics.iterations
        << "," << fmt(e.diagnostics.final_epsilon) << ","
        << fmt(e.diagnostics.score_residual) << ","
        << (e.diagnostics.converged ? 1 : 0) << ","
        << (e.degenerate_ci ? 1 : 0) << "\n";
  }
}

void write_reports_json(std::ostream& out,
                        const std::vector<NamedReport>& reports) {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    const EstimateReport& e = r.report;
    doc["reports"].push_back({
        {"estimator", r.estimator},
        {"q", e.q},
        {"theta_hat", e.theta_hat},
        {"std_error", e.std_error},
        {"ci_low", e.ci_low},
        {"ci_high", e.ci_high},
        {"density_at_theta", e.density_at_theta},
        {"iterations", e.diagnostics.iterations},
        {"final_epsilon", e.diagnostics.final_epsilon},
        {"score_residual", e.diagnostics.score_residual},
        {"converged", e.diagnostics.converged},
        {"degenerate_ci", e.degenerate_ci},
    });
  }
  out << doc.dump(2) << "\n";
}

void write_summary_csv(std::ostream& out,
                       const std::vector<CellSummary>& cells) {
  out << "scenario,n,q,estimator,bias,sd,rmse,coverage,reps,failures\n";
  for (const auto& c : cells) {
    out << c.scenario << "," << c.n << "," << fmt(c.q) << "," << c.estimator
        << "," << fmt(c.bias) << "," << fmt(c.sd) << "," << fmt(c.rmse) << ",";
    if (c.has_coverage) {
      out << fmt(c.coverage);
    } else {
      out << "NA";
    }
    out << "," << c.reps << "," << c.failures << "\n";
  }
}

}  // namespace qte
