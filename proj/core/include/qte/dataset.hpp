#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace qte {

enum class EstimandKind { MissingOutcome, EffectOnTreated };

// Observation table for either the missing-data problem (indicator = M,
// 1 = outcome observed) or the effect-on-the-treated problem (indicator = T).
struct Dataset {
  Eigen::MatrixXd covariates;  // n x p
  Eigen::VectorXd indicator;   // n, entries in {0,1}
  Eigen::VectorXd outcome;     // n
  EstimandKind kind = EstimandKind::MissingOutcome;

  Eigen::Index n() const { return covariates.rows(); }
  Eigen::Index p() const { return covariates.cols(); }

  void validate() const {
    if (n() < 1) throw std::invalid_argument("Dataset: n must be >= 1");
    if (indicator.size() != n() || outcome.size() != n()) {
      throw std::invalid_argument("Dataset: column lengths disagree");
    }
    if (!covariates.allFinite()) {
      throw std::invalid_argument("Dataset: non-finite covariate entry");
    }
    for (Eigen::Index i = 0; i < n(); ++i) {
      const double m = indicator[i];
      if (m != 0.0 && m != 1.0) {
        throw std::invalid_argument("Dataset: indicator not binary at row " +
                                    std::to_string(i));
      }
      const bool need_outcome =
          kind == EstimandKind::EffectOnTreated || m == 1.0;
      if (need_outcome && !std::isfinite(outcome[i])) {
        throw std::invalid_argument("Dataset: missing outcome at row " +
                                    std::to_string(i));
      }
    }
  }
};

}  // namespace qte
