#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmmsubset/dataset.hpp"

namespace lmmsubset {

enum class PriorKind { Horseshoe, Gaussian };

struct ModelConfig {
  PriorKind prior = PriorKind::Horseshoe;
  // Gaussian prior covariance for beta (p x p); used when prior == Gaussian.
  Eigen::MatrixXd prior_cov;
  // Scale of the half-Cauchy prior on the horseshoe global scale.
  double horseshoe_global_scale = 1.0;
  // Prior variance for columns excluded from shrinkage (the intercept).
  double unpenalized_prior_var = 1.0e6;
  // sigma_u ~ Unif(0, sigma_u_upper).
  double sigma_u_upper = 100.0;
  // Inverse-gamma(shape, rate) prior on sigma_eps^2; (0, 0) is the Jeffreys prior.
  double sigma2_eps_prior_shape = 0.0;
  double sigma2_eps_prior_rate = 0.0;
  // Holds a variance at a known value instead of sampling it.
  std::optional<double> fixed_sigma2_eps;
  std::optional<double> fixed_sigma2_u;
  int n_burn = 5000;
  int n_save = 10000;
  std::uint64_t seed = 0;
  bool include_intercept = true;

  // Throws ValidationError on invalid settings; returns non-fatal warnings.
  std::vector<std::string> validate(int p) const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ChainDiagnostics {
  Eigen::VectorXd ess_beta;
  double ess_sigma2_eps = 0.0;
  double ess_sigma2_u = 0.0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Saved posterior draws, one row per draw.
struct PosteriorDraws {
  Eigen::MatrixXd beta;        // T x p
  Eigen::MatrixXd u;           // T x n
  Eigen::VectorXd sigma2_eps;  // T
  Eigen::VectorXd sigma2_u;    // T
  Eigen::MatrixXd y_tilde;     // T x N~ (empty until predictive_draws)
  ChainDiagnostics diagnostics;

  int draws() const { return static_cast<int>(sigma2_eps.size()); }
  int p() const { return static_cast<int>(beta.cols()); }
  int n() const { return static_cast<int>(u.cols()); }
  bool has_predictive() const { return y_tilde.size() > 0; }

  // Shapes agree and variance draws are strictly positive (or non-negative
  // when `allow_zero_variance`).
  void validate(bool allow_zero_variance = false) const;
  // Keeps every `stride`-th draw.
  PosteriorDraws thinned(int stride) const;
};

enum class PredictionMode { NewSubject, ExistingSubject };

/// Covariates and grouping at which predictive draws are generated.
/// Rows of `X` are grouped by prediction subject (sizes `group_sizes`).
/// In existing-subject mode, prediction subject i reuses the fitted random
/// intercept u[existing_index[i]].
struct PredictionDesign {
  Eigen::MatrixXd X;
  std::vector<int> group_sizes;
  std::vector<int> offsets;
  PredictionMode mode = PredictionMode::NewSubject;
  std::vector<int> existing_index;

  int rows() const { return static_cast<int>(X.rows()); }
  int subjects() const { return static_cast<int>(group_sizes.size()); }

  // X~ = X and Z~ = Z of a fitted dataset.
  static PredictionDesign in_sample(const LongitudinalDataset& data, PredictionMode mode);
  // One covariate row per prediction subject, replicated m_tilde[i] times.
  static PredictionDesign replicated(const Eigen::MatrixXd& subject_rows,
                                     const std::vector<int>& m_tilde, PredictionMode mode,
                                     std::vector<int> existing_index = {});
  static PredictionDesign grouped(Eigen::MatrixXd X, std::vector<int> group_sizes,
                                  PredictionMode mode, std::vector<int> existing_index = {});

  void validate(int p, int n_fitted) const;
};

/// Posterior predictive draws y~(t) = X~ beta(t) + Z~ u(t) + eps(t).
/// Draw t uses its own counter-based stream (seed, t), so the output is
/// identical for any thread count.
PosteriorDraws predictive_draws(const PosteriorDraws& draws, const PredictionDesign& design,
                                std::uint64_t seed, int threads = 1);

}  // namespace lmmsubset
