#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "lmmsubset/dataset.hpp"

namespace lmmsubset {

/// Synthetic random-intercept design with AR(1)-correlated covariates.
struct SimDesign {
  int n = 300;
  int p = 15;
  int m = 4;
  double rho_star = 0.25;
  double snr = 1.0;
  int p_star = 5;
  double corr_base = 0.75;
  int n_reps = 100;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SimTruth {
  Eigen::VectorXd beta_star;       // p + 1, intercept first, in permuted column order
  double sigma2_u = 0;
  double sigma2_eps = 0;
  Eigen::VectorXd y_star;          // n, x_i' beta*
  std::vector<int> active_set;     // nonzero non-intercept columns of X
  std::vector<int> permutation;    // column j of X (j >= 1) is generated column permutation[j-1]
  Eigen::MatrixXd x_subject;       // n x (p + 1)
  int m = 4;
};

struct SimInstance {
  LongitudinalDataset data;
  SimTruth truth;
};

// Deterministic in design.seed.
SimInstance generate(const SimDesign& design);

// (1/N) sum_i (y*_i - x_i' delta)^2 1' Omega_i 1 with the true-parameter
// weight blocks, i.e. the Mahalanobis loss of predicting y* replicated m times.
double true_mahalanobis_loss(const Eigen::VectorXd& delta, const SimTruth& truth);

struct SelectionRates {
  double tpr = 0;
  double tnr = 0;
};
// Column 0 (intercept) is ignored.
SelectionRates selection_metrics(const std::vector<int>& selected, const SimTruth& truth);

// Type-7 q-quantile of the true losses of the given member coefficients.
double family_quantile_loss(const std::vector<Eigen::VectorXd>& member_coefficients,
                            const SimTruth& truth, double q);

struct IntervalMetrics {
  double mean_width = 0;
  double coverage = 0;
};
IntervalMetrics interval_metrics(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const SimTruth& truth);

}  // namespace lmmsubset
