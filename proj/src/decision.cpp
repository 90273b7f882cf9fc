#include "lmmsubset/decision.hpp"

#include <algorithm>
#include <cmath>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/stats.hpp"
#include "lmmsubset/weights.hpp"

namespace lmmsubset {

// ---------------------------------------------------------------------------
// Block-diagonal helpers
// ---------------------------------------------------------------------------

void BlockDiagonal::push_back(Eigen::MatrixXd block) {
  offsets.push_back(offsets.back() + static_cast<int>(block.rows()));
  blocks.push_back(std::move(block));
}

Eigen::MatrixXd BlockDiagonal::dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(size(), size());
  for (int i = 0; i < block_count(); ++i) {
    const int m = static_cast<int>(blocks[i].rows());
    d.block(offsets[i], offsets[i], m, m) = blocks[i];
  }
  return d;
}

Eigen::VectorXd BlockDiagonal::multiply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < block_count(); ++i) {
    const int m = static_cast<int>(blocks[i].rows());
    out.segment(offsets[i], m).noalias() = blocks[i] * v.segment(offsets[i], m);
  }
  return out;
}

Eigen::MatrixXd BlockDiagonal::multiply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (int i = 0; i < block_count(); ++i) {
    const int m = static_cast<int>(blocks[i].rows());
    out.middleRows(offsets[i], m).noalias() = blocks[i] * x.middleRows(offsets[i], m);
  }
  return out;
}

WeightSummary WeightSummary::from_blocks(BlockDiagonal omega_hat, Eigen::VectorXd y_omega_hat) {
  if (omega_hat.size() != y_omega_hat.size())
    throw ValidationError("weight summary: y_omega_hat length does not match omega_hat");
  WeightSummary ws;
  for (int i = 0; i < omega_hat.block_count(); ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(omega_hat.blocks[i]);
    if (llt.info() != Eigen::Success)
      throw NumericalError("decision_analysis/summarize_weights",
                           "Cholesky failed for block " + std::to_string(i));
    ws.omega_chol.push_back(llt.matrixL());
  }
  ws.omega_hat = std::move(omega_hat);
  ws.y_omega_hat = std::move(y_omega_hat);
  return ws;
}

// ---------------------------------------------------------------------------
// Posterior summaries
// ---------------------------------------------------------------------------

WeightSummary summarize_weights(const PosteriorDraws& draws, const PredictionDesign& design) {
  draws.validate();
  design.validate(draws.p(), draws.n());
  if (!draws.has_predictive() || draws.y_tilde.cols() != design.rows())
    throw ValidationError("shape error: draws do not carry y_tilde for this design");
  const int T = draws.draws();
  const int n = design.subjects();

  // E[1/s2e] and E[shared coefficient] per distinct group size.
  double inv_s2e = 0.0;
  std::vector<double> shared(n, 0.0);
  Eigen::VectorXd y_omega = Eigen::VectorXd::Zero(design.rows());
  for (int t = 0; t < T; ++t) {
    const double s2e = draws.sigma2_eps(t);
    const double s2u = draws.sigma2_u(t);
    inv_s2e += 1.0 / s2e;
    for (int i = 0; i < n; ++i) {
      const int m = design.group_sizes[i];
      const double c = shared_weight_coefficient(s2e, s2u, m);
      shared[i] += c;
      const auto yi = draws.y_tilde.row(t).segment(design.offsets[i], m);
      const double sum = yi.sum();
      y_omega.segment(design.offsets[i], m) += (yi.transpose().array() / s2e - c * sum).matrix();
    }
  }
  BlockDiagonal omega;
  for (int i = 0; i < n; ++i) {
    const int m = design.group_sizes[i];
    Eigen::MatrixXd block = Eigen::MatrixXd::Constant(m, m, -shared[i] / T);
    block.diagonal().array() += inv_s2e / T;
    omega.push_back(std::move(block));
  }
  return WeightSummary::from_blocks(std::move(omega), y_omega / T);
}

WeightSummary summarize_random_slope_weights(const Eigen::VectorXd& sigma2_eps,
                                             const std::vector<Eigen::MatrixXd>& sigma_u,
                                             const Eigen::MatrixXd& X_tilde,
                                             const Eigen::MatrixXd& y_tilde) {
  const auto T = sigma2_eps.size();
  if (T == 0 || static_cast<Eigen::Index>(sigma_u.size()) != T || y_tilde.rows() != T ||
      y_tilde.cols() != X_tilde.rows())
    throw ValidationError("shape error: random-slope inputs disagree on draws or rows");
  const int n = static_cast<int>(X_tilde.rows());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd yw = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      const double omega = weight_random_slope(sigma2_eps(t), sigma_u[t], X_tilde.row(i).transpose());
      w(i) += omega;
      yw(i) += omega * y_tilde(t, i);
    }
  }
  BlockDiagonal omega;
  for (int i = 0; i < n; ++i) omega.push_back(Eigen::MatrixXd::Constant(1, 1, w(i) / T));
  return WeightSummary::from_blocks(std::move(omega), yw / T);
}

// ---------------------------------------------------------------------------
// Linear algebra helpers
// ---------------------------------------------------------------------------

Eigen::MatrixXd solve_normal_equations(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() == 0) return Eigen::MatrixXd(0, B.cols());
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) return llt.solve(B);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  return svd.solve(B);
}

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  return solve_normal_equations(A, Eigen::MatrixXd(b)).col(0);
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& cols) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(cols[k]);
  return out;
}

void check_subset(const std::vector<int>& subset, int p) {
  for (std::size_t k = 0; k < subset.size(); ++k) {
    if (subset[k] < 0 || subset[k] >= p)
      throw ValidationError("subset index " + std::to_string(subset[k]) + " out of range [0, " +
                            std::to_string(p) + ")");
    if (k > 0 && subset[k] <= subset[k - 1])
      throw ValidationError("subset indices must be sorted and distinct");
  }
}

// ---------------------------------------------------------------------------
// Pseudo-data and optimal coefficients
// ---------------------------------------------------------------------------

PseudoData pseudo_data(const WeightSummary& ws, const Eigen::MatrixXd& X) {
  if (X.rows() != ws.rows()) throw ValidationError("shape error: X_tilde rows differ from weights");
  PseudoData pd;
  pd.y_star.resize(ws.rows());
  pd.X_star.resize(X.rows(), X.cols());
  const auto& chol = ws.omega_chol;
  for (int i = 0; i < chol.block_count(); ++i) {
    const int o = chol.offsets[i];
    const int m = static_cast<int>(chol.blocks[i].rows());
    const auto L = chol.blocks[i].triangularView<Eigen::Lower>();
    pd.y_star.segment(o, m) = L.solve(ws.y_omega_hat.segment(o, m));
    pd.X_star.middleRows(o, m).noalias() = L.transpose() * X.middleRows(o, m);
  }
  return pd;
}

DecisionProblem::DecisionProblem(WeightSummary ws, Eigen::MatrixXd X)
    : ws_(std::move(ws)), X_(std::move(X)) {
  if (X_.rows() != ws_.rows()) throw ValidationError("shape error: X_tilde rows differ from weights");
  omega_x_ = ws_.omega_hat.multiply(X_);
  gram_ = X_.transpose() * omega_x_;
  gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
  cross_ = X_.transpose() * ws_.y_omega_hat;
  pseudo_ = pseudo_data(ws_, X_);
}

SubsetCoefficients DecisionProblem::optimal(const std::vector<int>& subset) const {
  check_subset(subset, p());
  SubsetCoefficients out;
  out.subset = subset;
  out.delta_hat = Eigen::VectorXd::Zero(p());
  const auto k = static_cast<Eigen::Index>(subset.size());
  if (k > 0) {
    Eigen::MatrixXd a(k, k);
    Eigen::VectorXd b(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      b(r) = cross_(subset[r]);
      for (Eigen::Index c = 0; c < k; ++c) a(r, c) = gram_(subset[r], subset[c]);
    }
    const Eigen::VectorXd d = solve_normal_equations(a, b);
    for (Eigen::Index r = 0; r < k; ++r) out.delta_hat(subset[r]) = d(r);
  }
  out.expected_loss = (pseudo_.y_star - pseudo_.X_star * out.delta_hat).squaredNorm();
  return out;
}

Eigen::MatrixXd DecisionProblem::projection_operator(const std::vector<int>& subset) const {
  check_subset(subset, p());
  const auto k = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXd a(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c) a(r, c) = gram_(subset[r], subset[c]);
  return solve_normal_equations(a, Eigen::MatrixXd(select_columns(omega_x_, subset).transpose()));
}

Eigen::MatrixXd DecisionProblem::project(const std::vector<int>& subset,
                                         const Eigen::MatrixXd& y_tilde) const {
  if (y_tilde.cols() != X_.rows()) throw ValidationError("shape error: y_tilde columns differ from X_tilde rows");
  const Eigen::MatrixXd P = projection_operator(subset);
  const Eigen::MatrixXd ds = y_tilde * P.transpose();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(y_tilde.rows(), p());
  for (std::size_t k = 0; k < subset.size(); ++k)
    out.col(subset[k]) = ds.col(static_cast<Eigen::Index>(k));
  return out;
}

SubsetCoefficients optimal_coefficients(const WeightSummary& ws, const Eigen::MatrixXd& X_tilde,
                                        const std::vector<int>& subset) {
  return DecisionProblem(ws, X_tilde).optimal(subset);
}

Eigen::MatrixXd project_predictive_draws(const WeightSummary& ws, const Eigen::MatrixXd& X_tilde,
                                         const std::vector<int>& subset,
                                         const Eigen::MatrixXd& y_tilde) {
  return DecisionProblem(ws, X_tilde).project(subset, y_tilde);
}

CoefficientIntervals projected_intervals(const SubsetCoefficients& coef,
                                         const Eigen::MatrixXd& projected, double level) {
  const int p = static_cast<int>(projected.cols());
  CoefficientIntervals ci;
  ci.subset = coef.subset;
  ci.estimate = coef.delta_hat;
  ci.level = level;
  ci.mean = projected.colwise().mean().transpose();
  ci.lower.resize(p);
  ci.upper.resize(p);
  const double alpha = 0.5 * (1.0 - level);
  for (int j = 0; j < p; ++j) {
    const Eigen::VectorXd col = projected.col(j);
    std::vector<double> v(col.data(), col.data() + col.size());
    std::sort(v.begin(), v.end());
    ci.lower(j) = stats::quantile_sorted(v, alpha);
    ci.upper(j) = stats::quantile_sorted(v, 1.0 - alpha);
  }
  return ci;
}

}  // namespace lmmsubset
