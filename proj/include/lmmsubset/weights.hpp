#pragma once

#include <Eigen/Dense>

#include <span>

namespace lmmsubset {

// Mahalanobis weight block of one subject under the random-intercept model:
//   Omega_i = s2e^{-1} [I - (s2e/s2u + m)^{-1} 1 1'],
// the inverse of s2u 1 1' + s2e I, written without a numerical inversion.
Eigen::MatrixXd weight_block_random_intercept(double sigma2_eps, double sigma2_u, int m);

// Scalar coefficient of 1 1' in the block above, s2e^{-1} (s2e/s2u + m)^{-1},
// finite as s2u -> 0.
double shared_weight_coefficient(double sigma2_eps, double sigma2_u, int m);

// Random-slope weight omega_i = 1 / (s2e + x' Sigma_u x). Sigma_u must be
// symmetric positive semidefinite (ValidationError otherwise).
double weight_random_slope(double sigma2_eps, const Eigen::MatrixXd& sigma_u,
                           const Eigen::VectorXd& x_tilde);

// ||e||^2_Omega for grouped residuals e under the random-intercept weights,
// accumulated per subject from sums and sums of squares.
double mahalanobis_loss_random_intercept(const Eigen::VectorXd& e, std::span<const int> group_sizes,
                                         double sigma2_eps, double sigma2_u);

}  // namespace lmmsubset
