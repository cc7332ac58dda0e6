#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qte/dataset.hpp"
#include "qte/inference.hpp"
#include "qte/sim.hpp"

namespace qte {

// CSV with a header row: column `y`, an indicator column named `m` (outcome
// missing at random) or `t` (effect on the treated), and covariate columns.
// Empty or NA outcome cells are allowed only on rows with indicator 0 under
// the missing-outcome estimand.
Dataset ingest_csv(const std::string& path);

void write_dataset_csv(std::ostream& out, const Dataset& data);

struct NamedReport {
  std::string estimator;
  EstimateReport report;
};

void write_reports_csv(std::ostream& out, const std::vector<NamedReport>& reports);
void write_reports_json(std::ostream& out, const std::vector<NamedReport>& reports);

// Columns: scenario,n,q,estimator,bias,sd,rmse,coverage,reps,failures.
// Coverage prints NA for estimators without a confidence interval.
void write_summary_csv(std::ostream& out, const std::vector<CellSummary>& cells);

}  // namespace qte
