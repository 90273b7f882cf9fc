#include "lmmsubset/gibbs.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <map>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/stats.hpp"

namespace lmmsubset {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kHuge = 1e300;

double clamp_scale(double v) { return std::clamp(v, kTiny, kHuge); }

// Weight on the shared-intercept term: 1 / (s2e/s2u + m) = s2u / (s2e + m s2u).
double shared_weight(double s2e, double s2u, int m) { return s2u / (s2e + m * s2u); }

}  // namespace

bool GibbsState::valid() const {
  auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!pos(sigma2_eps) || !(std::isfinite(sigma2_u) && sigma2_u >= 0.0)) return false;
  if (!pos(tau2) || !pos(xi)) return false;
  for (int j = 0; j < lambda2.size(); ++j)
    if (!pos(lambda2(j)) || !pos(nu(j))) return false;
  return beta.allFinite() && u.allFinite();
}

GibbsSampler::GibbsSampler(const LongitudinalDataset& data, const ModelConfig& config)
    : data_(data), config_(config) {
  data_.validate();
  const int p = data_.cols();
  const int n = data_.subjects();
  config_.validate(p);
  if (!config_.fixed_sigma2_u && n < 2)
    throw ValidationError("config error: sampling sigma2_u requires at least two subjects");

  penalized_.assign(p, config_.prior == PriorKind::Horseshoe);
  if (data_.has_intercept && config_.prior == PriorKind::Horseshoe) penalized_[0] = false;
  n_penalized_ = static_cast<int>(std::count(penalized_.begin(), penalized_.end(), true));

  xtx_ = data_.X.transpose() * data_.X;
  xty_ = data_.X.transpose() * data_.y;
  group_sums_.resize(n, p);
  group_ysum_.resize(n);
  std::map<int, int> slot;
  for (int i = 0; i < n; ++i) {
    const int m = data_.group_sizes[i];
    group_sums_.row(i) = data_.X.middleRows(data_.offsets[i], m).colwise().sum();
    group_ysum_(i) = data_.y.segment(data_.offsets[i], m).sum();
    slot.try_emplace(m, 0);
  }
  for (auto& [m, idx] : slot) {
    idx = static_cast<int>(distinct_m_.size());
    distinct_m_.push_back(m);
    gram_by_m_.push_back(Eigen::MatrixXd::Zero(p, p));
    cross_by_m_.push_back(Eigen::VectorXd::Zero(p));
  }
  for (int i = 0; i < n; ++i) {
    const int k = slot.at(data_.group_sizes[i]);
    const Eigen::VectorXd s = group_sums_.row(i).transpose();
    gram_by_m_[k].selfadjointView<Eigen::Lower>().rankUpdate(s);
    cross_by_m_[k] += s * group_ysum_(i);
  }
  for (auto& g : gram_by_m_) g = g.selfadjointView<Eigen::Lower>();

  if (config_.prior == PriorKind::Gaussian) gaussian_precision_ = config_.prior_cov.inverse();
}

GibbsState GibbsSampler::initial_state() const {
  const int p = data_.cols();
  const int n = data_.subjects();
  GibbsState s;
  // Lightly ridged least squares start.
  Eigen::MatrixXd a = xtx_;
  a.diagonal().array() += 1e-6 * std::max(xtx_.trace() / std::max(p, 1), 1.0);
  s.beta = a.ldlt().solve(xty_);
  const Eigen::VectorXd resid = data_.y - data_.X * s.beta;
  const double var = std::max(resid.squaredNorm() / std::max(data_.rows() - 1, 1), 1e-6);
  s.sigma2_eps = config_.fixed_sigma2_eps.value_or(0.75 * var);
  s.sigma2_u = config_.fixed_sigma2_u.value_or(std::min(0.25 * var, 0.25 * config_.sigma_u_upper * config_.sigma_u_upper));
  s.u = Eigen::VectorXd::Zero(n);
  s.lambda2 = Eigen::VectorXd::Ones(p);
  s.nu = Eigen::VectorXd::Ones(p);
  s.tau2 = 1.0;
  s.xi = 1.0;
  return s;
}

Eigen::MatrixXd GibbsSampler::prior_precision(const GibbsState& s) const {
  if (config_.prior == PriorKind::Gaussian) return gaussian_precision_;
  const int p = data_.cols();
  Eigen::VectorXd d(p);
  for (int j = 0; j < p; ++j)
    d(j) = penalized_[j] ? 1.0 / clamp_scale(s.tau2 * s.lambda2(j)) : 1.0 / config_.unpenalized_prior_var;
  return d.asDiagonal();
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> GibbsSampler::marginal_gram(double s2e, double s2u) const {
  Eigen::MatrixXd q = xtx_;
  Eigen::VectorXd l = xty_;
  for (std::size_t k = 0; k < distinct_m_.size(); ++k) {
    const double c = shared_weight(s2e, s2u, distinct_m_[k]);
    if (c == 0.0) continue;
    q.noalias() -= c * gram_by_m_[k];
    l.noalias() -= c * cross_by_m_[k];
  }
  return {q / s2e, l / s2e};
}

GibbsSampler::BetaConditional GibbsSampler::beta_conditional(const GibbsState& s) const {
  auto [gram, cross] = marginal_gram(s.sigma2_eps, s.sigma2_u);
  BetaConditional bc;
  bc.precision = gram + prior_precision(s);
  bc.linear = std::move(cross);
  bc.mean = bc.precision.llt().solve(bc.linear);
  return bc;
}

Eigen::VectorXd GibbsSampler::sample_beta_joint(const GibbsState& s, CounterRng& rng) const {
  auto [gram, cross] = marginal_gram(s.sigma2_eps, s.sigma2_u);
  Eigen::MatrixXd q = gram + prior_precision(s);
  const int p = static_cast<int>(q.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) {
    q.diagonal().array() += 1e-10 * q.trace() / p;
    llt.compute(q);
    if (llt.info() != Eigen::Success)
      throw NumericalError("gibbs_sampler/sample_beta_joint",
                           "Q_beta is not positive definite after jitter");
  }
  Eigen::VectorXd z(p);
  for (int j = 0; j < p; ++j) z(j) = rng.normal();
  Eigen::VectorXd beta = llt.solve(cross);
  beta += llt.matrixU().solve(z);
  return beta;
}

Eigen::VectorXd GibbsSampler::sample_random_intercepts(const GibbsState& s, CounterRng& rng) const {
  const int n = data_.subjects();
  const Eigen::VectorXd resid = data_.y - data_.X * s.beta;
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) {
    const int m = data_.group_sizes[i];
    const double rsum = resid.segment(data_.offsets[i], m).sum();
    // Q = m/s2e + 1/s2u and l = rsum/s2e, written to stay finite as s2u -> 0.
    const double denom = s.sigma2_eps + m * s.sigma2_u;
    const double mean = s.sigma2_u * rsum / denom;
    const double var = s.sigma2_u * s.sigma2_eps / denom;
    u(i) = mean + std::sqrt(var) * rng.normal();
  }
  return u;
}

double sample_truncated_inverse_gamma(double shape, double rate, double upper, CounterRng& rng) {
  if (!(shape > 0.0)) throw NumericalError("gibbs_sampler/sample_variances", "non-positive shape");
  rate = std::max(rate, kTiny);
  const double upper2 = upper * upper;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double v = rng.inverse_gamma(shape, rate);
    if (v <= upper2 && v > 0.0) return v;
  }
  // Precision g = 1/v ~ Gamma(shape, rate) truncated to [1/B^2, inf).
  const double lower_p = boost::math::gamma_p(shape, rate / upper2);
  if (lower_p >= 1.0) return upper2;
  const double u = lower_p + (1.0 - lower_p) * rng.uniform();
  const double g = boost::math::gamma_p_inv(shape, std::min(u, 1.0 - 1e-16)) / rate;
  return std::clamp(1.0 / g, kTiny, upper2);
}

std::pair<double, double> GibbsSampler::sample_variances(const GibbsState& s, CounterRng& rng) const {
  double s2e = s.sigma2_eps;
  double s2u = s.sigma2_u;
  if (config_.fixed_sigma2_eps) {
    s2e = *config_.fixed_sigma2_eps;
  } else {
    double rss = 0.0;
    for (int i = 0; i < data_.subjects(); ++i) {
      const int m = data_.group_sizes[i];
      const auto rows = data_.X.middleRows(data_.offsets[i], m);
      rss += ((data_.y.segment(data_.offsets[i], m) - rows * s.beta).array() - s.u(i)).square().sum();
    }
    const double rate = config_.sigma2_eps_prior_rate + 0.5 * rss;
    if (!(rate > 0.0))
      throw NumericalError("gibbs_sampler/sample_variances", "residual sum of squares is zero");
    s2e = clamp_scale(rng.inverse_gamma(config_.sigma2_eps_prior_shape + 0.5 * data_.rows(), rate));
  }
  if (config_.fixed_sigma2_u) {
    s2u = *config_.fixed_sigma2_u;
  } else {
    const double shape = 0.5 * (data_.subjects() - 1);
    const double rate = 0.5 * s.u.squaredNorm();
    s2u = sample_truncated_inverse_gamma(shape, rate, config_.sigma_u_upper, rng);
  }
  return {s2e, s2u};
}

void GibbsSampler::sample_horseshoe(GibbsState& s, CounterRng& rng) const {
  if (config_.prior != PriorKind::Horseshoe || n_penalized_ == 0) return;
  const int p = data_.cols();
  double scaled_sum = 0.0;
  for (int j = 0; j < p; ++j) {
    if (!penalized_[j]) continue;
    const double b2 = s.beta(j) * s.beta(j);
    s.lambda2(j) = clamp_scale(rng.inverse_gamma(1.0, 1.0 / s.nu(j) + 0.5 * b2 / s.tau2));
    s.nu(j) = clamp_scale(rng.inverse_gamma(1.0, 1.0 + 1.0 / s.lambda2(j)));
    scaled_sum += b2 / s.lambda2(j);
  }
  s.tau2 = clamp_scale(rng.inverse_gamma(0.5 * (n_penalized_ + 1), 1.0 / s.xi + 0.5 * scaled_sum));
  const double a2 = config_.horseshoe_global_scale * config_.horseshoe_global_scale;
  s.xi = clamp_scale(rng.inverse_gamma(1.0, 1.0 / a2 + 1.0 / s.tau2));
}

void GibbsSampler::sweep(GibbsState& s, CounterRng& rng) const {
  s.beta = sample_beta_joint(s, rng);
  s.u = sample_random_intercepts(s, rng);
  std::tie(s.sigma2_eps, s.sigma2_u) = sample_variances(s, rng);
  sample_horseshoe(s, rng);
}

PosteriorDraws run_chain(const LongitudinalDataset& data, const ModelConfig& config) {
  GibbsSampler sampler(data, config);
  const auto warnings = config.validate(data.cols());
  CounterRng rng(derive_seed(config.seed, "chain"), 0);
  GibbsState state = sampler.initial_state();
  for (int it = 0; it < config.n_burn; ++it) sampler.sweep(state, rng);

  const int T = config.n_save;
  PosteriorDraws d;
  d.beta.resize(T, data.cols());
  d.u.resize(T, data.subjects());
  d.sigma2_eps.resize(T);
  d.sigma2_u.resize(T);
  for (int t = 0; t < T; ++t) {
    sampler.sweep(state, rng);
    d.beta.row(t) = state.beta.transpose();
    d.u.row(t) = state.u.transpose();
    d.sigma2_eps(t) = state.sigma2_eps;
    d.sigma2_u(t) = state.sigma2_u;
  }

  d.diagnostics.warnings = warnings;
  d.diagnostics.ess_beta.resize(data.cols());
  for (int j = 0; j < data.cols(); ++j) {
    const Eigen::VectorXd col = d.beta.col(j);
    d.diagnostics.ess_beta(j) = stats::effective_sample_size({col.data(), static_cast<std::size_t>(T)});
  }
  d.diagnostics.ess_sigma2_eps =
      stats::effective_sample_size({d.sigma2_eps.data(), static_cast<std::size_t>(T)});
  d.diagnostics.ess_sigma2_u =
      stats::effective_sample_size({d.sigma2_u.data(), static_cast<std::size_t>(T)});
  return d;
}

}  // namespace lmmsubset
