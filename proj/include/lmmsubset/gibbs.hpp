#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "lmmsubset/dataset.hpp"
#include "lmmsubset/posterior.hpp"
#include "lmmsubset/rng.hpp"

namespace lmmsubset {

struct GibbsState {
  Eigen::VectorXd beta;
  Eigen::VectorXd u;
  double sigma2_eps = 1.0;
  double sigma2_u = 1.0;
  // Horseshoe scales: beta_j ~ N(0, tau2 * lambda2_j) for penalized j, with
  // half-Cauchy scales written as inverse-gamma mixtures through nu and xi.
  Eigen::VectorXd lambda2;
  double tau2 = 1.0;
  Eigen::VectorXd nu;
  double xi = 1.0;

  // Variance-type fields strictly positive and finite.
  bool valid() const;
};

/// Blocked Gibbs sampler for the Gaussian random-intercept model
///   y_ij = x_ij' beta + u_i + eps_ij,  u_i ~ N(0, s2u),  eps_ij ~ N(0, s2e).
///
/// beta is drawn with u integrated out, then u | beta, so (beta, u) is a
/// joint draw. The marginal precision X' Omega X is assembled from per-group
/// column sums without forming Z or Omega. `data` must outlive the sampler.
class GibbsSampler {
 public:
  GibbsSampler(const LongitudinalDataset& data, const ModelConfig& config);

  struct BetaConditional {
    Eigen::MatrixXd precision;  // Q_beta
    Eigen::VectorXd linear;     // l_beta
    Eigen::VectorXd mean;       // Q_beta^{-1} l_beta
  };

  GibbsState initial_state() const;
  Eigen::MatrixXd prior_precision(const GibbsState& s) const;
  // Marginal GLS pieces X' Omega X and X' Omega y at the state's variances.
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> marginal_gram(double sigma2_eps, double sigma2_u) const;
  BetaConditional beta_conditional(const GibbsState& s) const;

  Eigen::VectorXd sample_beta_joint(const GibbsState& s, CounterRng& rng) const;
  Eigen::VectorXd sample_random_intercepts(const GibbsState& s, CounterRng& rng) const;
  std::pair<double, double> sample_variances(const GibbsState& s, CounterRng& rng) const;
  void sample_horseshoe(GibbsState& s, CounterRng& rng) const;
  void sweep(GibbsState& s, CounterRng& rng) const;

  const LongitudinalDataset& data() const { return data_; }
  const ModelConfig& config() const { return config_; }
  const std::vector<bool>& penalized() const { return penalized_; }

 private:
  const LongitudinalDataset& data_;
  ModelConfig config_;
  std::vector<bool> penalized_;
  int n_penalized_ = 0;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  Eigen::MatrixXd group_sums_;  // n x p column sums per subject
  Eigen::VectorXd group_ysum_;
  // Distinct group sizes with sum_i s_i s_i' and sum_i s_i ysum_i over groups of that size.
  std::vector<int> distinct_m_;
  std::vector<Eigen::MatrixXd> gram_by_m_;
  std::vector<Eigen::VectorXd> cross_by_m_;
  Eigen::MatrixXd gaussian_precision_;
};

/// Draws from the truncated conditional of s2u under sigma_u ~ Unif(0, B):
/// inverse-gamma(shape, rate) restricted to s2u <= B^2. Rejection first,
/// exact inverse-CDF fallback.
double sample_truncated_inverse_gamma(double shape, double rate, double upper, CounterRng& rng);

/// Runs burn-in plus n_save saved sweeps. Deterministic given config.seed.
PosteriorDraws run_chain(const LongitudinalDataset& data, const ModelConfig& config);

}  // namespace lmmsubset
