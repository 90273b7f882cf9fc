#pragma once

#include <Eigen/Dense>

#include <vector>

#include "lmmsubset/posterior.hpp"

namespace lmmsubset {

/// Symmetric block-diagonal matrix; block i covers rows [offsets[i], offsets[i+1]).
struct BlockDiagonal {
  std::vector<Eigen::MatrixXd> blocks;
  std::vector<int> offsets{0};

  int size() const { return offsets.back(); }
  int block_count() const { return static_cast<int>(blocks.size()); }
  void push_back(Eigen::MatrixXd block);
  Eigen::MatrixXd dense() const;
  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;
  // B' M for an N x k matrix M, i.e. blockwise products.
  Eigen::MatrixXd multiply(const Eigen::MatrixXd& m) const;
};

/// Posterior summaries of the Mahalanobis weights for a prediction design.
///   omega_hat    E[Omega_psi | y]
///   y_omega_hat  E[Omega_psi y~ | y]
///   omega_chol   lower-triangular L per block with L L' = omega_hat, so the
///                square root in (Omega^{1/2})' Omega^{1/2} = Omega is L'.
struct WeightSummary {
  BlockDiagonal omega_hat;
  Eigen::VectorXd y_omega_hat;
  BlockDiagonal omega_chol;

  // Factorizes each block; NumericalError names the failing block.
  static WeightSummary from_blocks(BlockDiagonal omega_hat, Eigen::VectorXd y_omega_hat);
  int rows() const { return omega_hat.size(); }
};

// Random-intercept model: blockwise averages over draws with the closed-form
// weight blocks. Requires draws.y_tilde generated at `design`.
WeightSummary summarize_weights(const PosteriorDraws& draws, const PredictionDesign& design);

// Random-slope model: Omega = diag(omega_i) per draw, with one Sigma_u per
// draw shared by all prediction rows. y_tilde is T x n~.
WeightSummary summarize_random_slope_weights(const Eigen::VectorXd& sigma2_eps,
                                             const std::vector<Eigen::MatrixXd>& sigma_u,
                                             const Eigen::MatrixXd& X_tilde,
                                             const Eigen::MatrixXd& y_tilde);

struct SubsetCoefficients {
  std::vector<int> subset;   // sorted column indices
  Eigen::VectorXd delta_hat; // length p, zero off the subset
  double expected_loss = 0;  // ||y* - X* delta||^2 (constant term omitted)
};

struct PseudoData {
  Eigen::VectorXd y_star;  // L^{-1} y_omega_hat
  Eigen::MatrixXd X_star;  // L' X~
};

PseudoData pseudo_data(const WeightSummary& ws, const Eigen::MatrixXd& X_tilde);

/// Minimizer of the posterior expected Mahalanobis loss restricted to
/// `subset`, from the normal equations X_S' Omega_hat X_S d = X_S' y_omega_hat.
/// Rank-deficient systems fall back to the minimum-norm solution.
SubsetCoefficients optimal_coefficients(const WeightSummary& ws, const Eigen::MatrixXd& X_tilde,
                                        const std::vector<int>& subset);

/// Per-draw projections (X_S' Omega_hat X_S)^{-1} X_S' Omega_hat y~(t); T x p.
Eigen::MatrixXd project_predictive_draws(const WeightSummary& ws, const Eigen::MatrixXd& X_tilde,
                                         const std::vector<int>& subset,
                                         const Eigen::MatrixXd& y_tilde);

/// Precomputed decision problem for repeated subset queries.
class DecisionProblem {
 public:
  DecisionProblem(WeightSummary ws, Eigen::MatrixXd X_tilde);

  SubsetCoefficients optimal(const std::vector<int>& subset) const;
  // |S| x N~ operator (X_S' Omega_hat X_S)^{-1} X_S' Omega_hat.
  Eigen::MatrixXd projection_operator(const std::vector<int>& subset) const;
  Eigen::MatrixXd project(const std::vector<int>& subset, const Eigen::MatrixXd& y_tilde) const;

  const WeightSummary& weights() const { return ws_; }
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::VectorXd& cross() const { return cross_; }
  const PseudoData& pseudo() const { return pseudo_; }
  int p() const { return static_cast<int>(X_.cols()); }

 private:
  WeightSummary ws_;
  Eigen::MatrixXd X_;
  Eigen::MatrixXd omega_x_;  // Omega_hat X~
  Eigen::MatrixXd gram_;     // X~' Omega_hat X~
  Eigen::VectorXd cross_;    // X~' y_omega_hat
  PseudoData pseudo_;
};

struct CoefficientIntervals {
  std::vector<int> subset;
  Eigen::VectorXd estimate;  // delta_hat
  Eigen::VectorXd mean;      // mean of projected draws
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level = 0.9;
};

// Central empirical-quantile intervals of projected draws.
CoefficientIntervals projected_intervals(const SubsetCoefficients& coef,
                                         const Eigen::MatrixXd& projected, double level);

// Solves A x = b for symmetric PSD A by Cholesky, switching to the
// pseudo-inverse (cutoff 1e-10 * largest singular value) when A is singular
// or ill-conditioned.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);
Eigen::MatrixXd solve_normal_equations(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Column selection helpers.
Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& cols);
void check_subset(const std::vector<int>& subset, int p);

}  // namespace lmmsubset
