#include "lmmsubset/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/rng.hpp"
#include "lmmsubset/stats.hpp"

namespace lmmsubset {

void SimDesign::validate() const {
  if (n < 2) throw ValidationError("sim design: n must be >= 2");
  if (p < 1) throw ValidationError("sim design: p must be >= 1");
  if (m < 1) throw ValidationError("sim design: m must be >= 1");
  if (!(rho_star >= 0 && rho_star < 1)) throw ValidationError("sim design: rho_star must be in [0, 1)");
  if (!(snr > 0)) throw ValidationError("sim design: snr must be > 0");
  if (p_star < 0 || p_star > p) throw ValidationError("sim design: p_star must be in [0, p]");
  if (!(std::abs(corr_base) < 1)) throw ValidationError("sim design: |corr_base| must be < 1");
  if (n_reps < 1) throw ValidationError("sim design: n_reps must be >= 1");
}

nlohmann::json SimDesign::to_json() const {
  return {{"n", n}, {"p", p}, {"m", m}, {"rho_star", rho_star}, {"snr", snr},
          {"p_star", p_star}, {"corr_base", corr_base}, {"n_reps", n_reps}, {"seed", seed}};
}

SimInstance generate(const SimDesign& d) {
  d.validate();
  CounterRng rng(derive_seed(d.seed, "data"), 0);

  // AR(1) rows give Cor(x_j, x_j') = corr_base^|j - j'|.
  Eigen::MatrixXd raw(d.n, d.p);
  const double innov = std::sqrt(1.0 - d.corr_base * d.corr_base);
  for (int i = 0; i < d.n; ++i) {
    raw(i, 0) = rng.normal();
    for (int j = 1; j < d.p; ++j) raw(i, j) = d.corr_base * raw(i, j - 1) + innov * rng.normal();
  }

  SimTruth truth;
  truth.m = d.m;
  truth.permutation.resize(d.p);
  std::iota(truth.permutation.begin(), truth.permutation.end(), 0);
  for (int i = d.p - 1; i > 0; --i)
    std::swap(truth.permutation[i],
              truth.permutation[static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1))]);

  const int n_pos = (d.p_star + 1) / 2;
  truth.beta_star = Eigen::VectorXd::Zero(d.p + 1);
  truth.beta_star(0) = -1.0;
  truth.x_subject.resize(d.n, d.p + 1);
  truth.x_subject.col(0).setOnes();
  for (int j = 0; j < d.p; ++j) {
    const int orig = truth.permutation[j];
    truth.x_subject.col(j + 1) = raw.col(orig);
    if (orig < d.p_star) {
      truth.beta_star(j + 1) = orig < n_pos ? 1.0 : -1.0;
      truth.active_set.push_back(j + 1);
    }
  }

  truth.y_star = truth.x_subject * truth.beta_star;
  const std::vector<double> ys(truth.y_star.data(), truth.y_star.data() + d.n);
  const double total = stats::variance(ys) / d.snr;
  truth.sigma2_u = d.rho_star * total;
  truth.sigma2_eps = total - truth.sigma2_u;

  const int N = d.n * d.m;
  Eigen::VectorXd y(N);
  Eigen::MatrixXd X(N, d.p + 1);
  std::vector<std::string> labels(d.n);
  const double su = std::sqrt(truth.sigma2_u);
  const double se = std::sqrt(truth.sigma2_eps);
  for (int i = 0; i < d.n; ++i) {
    labels[i] = std::to_string(i + 1);
    const double ui = su * rng.normal();
    for (int r = 0; r < d.m; ++r) {
      const int row = i * d.m + r;
      X.row(row) = truth.x_subject.row(i);
      y(row) = truth.y_star(i) + ui + se * rng.normal();
    }
  }
  std::vector<std::string> names{"(Intercept)"};
  for (int j = 1; j <= d.p; ++j) names.push_back("x" + std::to_string(j));
  SimInstance out;
  out.data = LongitudinalDataset::from_groups(std::move(labels), std::vector<int>(d.n, d.m),
                                              std::move(y), std::move(X), std::move(names), true);
  out.truth = std::move(truth);
  return out;
}

double true_mahalanobis_loss(const Eigen::VectorXd& delta, const SimTruth& truth) {
  if (delta.size() != truth.beta_star.size())
    throw ValidationError("shape error: delta must have p + 1 entries");
  // 1' Omega_i 1 = m / (s2e + m s2u) for the true-parameter block.
  const double m = truth.m;
  const double weight = m / (truth.sigma2_eps + m * truth.sigma2_u);
  const Eigen::VectorXd r = truth.y_star - truth.x_subject * delta;
  return weight * r.squaredNorm() / (m * static_cast<double>(r.size()));
}

SelectionRates selection_metrics(const std::vector<int>& selected, const SimTruth& truth) {
  const int p = static_cast<int>(truth.beta_star.size()) - 1;
  std::vector<bool> sel(p + 1, false);
  for (int j : selected) {
    if (j < 0 || j > p) throw ValidationError("selection index out of range");
    sel[j] = true;
  }
  std::vector<bool> active(p + 1, false);
  for (int j : truth.active_set) active[j] = true;
  int tp = 0, n_active = 0, tn = 0, n_inactive = 0;
  for (int j = 1; j <= p; ++j) {
    if (active[j]) {
      ++n_active;
      tp += sel[j];
    } else {
      ++n_inactive;
      tn += !sel[j];
    }
  }
  SelectionRates r;
  r.tpr = n_active ? static_cast<double>(tp) / n_active : 1.0;
  r.tnr = n_inactive ? static_cast<double>(tn) / n_inactive : 1.0;
  return r;
}

double family_quantile_loss(const std::vector<Eigen::VectorXd>& member_coefficients,
                            const SimTruth& truth, double q) {
  if (member_coefficients.empty()) throw ValidationError("family_quantile_loss: empty family");
  std::vector<double> losses;
  losses.reserve(member_coefficients.size());
  for (const auto& d : member_coefficients) losses.push_back(true_mahalanobis_loss(d, truth));
  return stats::quantile(losses, q);
}

IntervalMetrics interval_metrics(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const SimTruth& truth) {
  const auto k = truth.beta_star.size();
  if (lower.size() != k || upper.size() != k)
    throw ValidationError("shape error: intervals must have p + 1 entries");
  IntervalMetrics out;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (lower(j) > upper(j)) throw ValidationError("interval_metrics: lower > upper");
    out.mean_width += upper(j) - lower(j);
    const double b = truth.beta_star(j);
    out.coverage += (lower(j) <= b && b <= upper(j)) ? 1.0 : 0.0;
  }
  out.mean_width /= static_cast<double>(k);
  out.coverage /= static_cast<double>(k);
  return out;
}

}  // namespace lmmsubset
