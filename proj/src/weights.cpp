#include "lmmsubset/weights.hpp"

#include <cmath>

#include "lmmsubset/errors.hpp"

namespace lmmsubset {

double shared_weight_coefficient(double s2e, double s2u, int m) {
  return s2u / (s2e * (s2e + m * s2u));
}

Eigen::MatrixXd weight_block_random_intercept(double s2e, double s2u, int m) {
  if (!(s2e > 0.0) || !(s2u >= 0.0) || m < 1)
    throw ValidationError("weight block needs s2e > 0, s2u >= 0 and m >= 1");
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(m, m, -shared_weight_coefficient(s2e, s2u, m));
  w.diagonal().array() += 1.0 / s2e;
  return w;
}

double weight_random_slope(double s2e, const Eigen::MatrixXd& sigma_u, const Eigen::VectorXd& x) {
  if (!(s2e > 0.0)) throw ValidationError("random-slope weight needs s2e > 0");
  if (sigma_u.rows() != sigma_u.cols() || sigma_u.rows() != x.size())
    throw ValidationError("random-slope weight: Sigma_u and x_tilde shapes differ");
  const double scale = std::max(sigma_u.cwiseAbs().maxCoeff(), 1.0);
  if ((sigma_u - sigma_u.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError("random-slope weight: Sigma_u is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_u, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
    throw ValidationError("random-slope weight: Sigma_u is not positive semidefinite");
  return 1.0 / (s2e + x.dot(sigma_u * x));
}

double mahalanobis_loss_random_intercept(const Eigen::VectorXd& e, std::span<const int> group_sizes,
                                         double s2e, double s2u) {
  double total = 0.0;
  int r = 0;
  for (int m : group_sizes) {
    const auto seg = e.segment(r, m);
    const double s = seg.sum();
    total += seg.squaredNorm() / s2e - shared_weight_coefficient(s2e, s2u, m) * s * s;
    r += m;
  }
  if (r != e.size()) throw ValidationError("loss: group sizes do not match residual length");
  return total;
}

}  // namespace lmmsubset
