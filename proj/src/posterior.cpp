#include "lmmsubset/posterior.hpp"

#include <cmath>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/parallel.hpp"
#include "lmmsubset/rng.hpp"

namespace lmmsubset {

std::vector<std::string> ModelConfig::validate(int p) const {
  std::vector<std::string> warnings;
  if (!(sigma_u_upper > 0.0)) throw ValidationError("config error: sigma_u upper bound must be > 0");
  if (n_save < 1) throw ValidationError("config error: n_save must be >= 1");
  if (n_burn < 0) throw ValidationError("config error: n_burn must be >= 0");
  if (!(horseshoe_global_scale > 0.0))
    throw ValidationError("config error: horseshoe global scale must be > 0");
  if (!(unpenalized_prior_var > 0.0))
    throw ValidationError("config error: unpenalized prior variance must be > 0");
  if (sigma2_eps_prior_shape < 0.0 || sigma2_eps_prior_rate < 0.0)
    throw ValidationError("config error: sigma2_eps prior parameters must be >= 0");
  if (fixed_sigma2_eps && !(*fixed_sigma2_eps > 0.0))
    throw ValidationError("config error: fixed sigma2_eps must be > 0");
  if (fixed_sigma2_u && !(*fixed_sigma2_u >= 0.0))
    throw ValidationError("config error: fixed sigma2_u must be >= 0");
  if (prior == PriorKind::Gaussian) {
    if (prior_cov.rows() != p || prior_cov.cols() != p)
      throw ValidationError("config error: Gaussian prior covariance must be p x p");
    Eigen::LLT<Eigen::MatrixXd> llt(prior_cov);
    if (llt.info() != Eigen::Success)
      throw ValidationError("config error: Gaussian prior covariance is not positive definite");
  }
  if (n_save < 1000)
    warnings.push_back("n_save < 1000: acceptable-family probabilities will be coarse");
  return warnings;
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["prior"] = prior == PriorKind::Horseshoe ? "horseshoe" : "gaussian";
  if (prior == PriorKind::Gaussian) {
    std::vector<std::vector<double>> cov(prior_cov.rows(), std::vector<double>(prior_cov.cols()));
    for (int r = 0; r < prior_cov.rows(); ++r)
      for (int c = 0; c < prior_cov.cols(); ++c) cov[r][c] = prior_cov(r, c);
    j["prior_cov"] = cov;
  }
  j["horseshoe_global_scale"] = horseshoe_global_scale;
  j["unpenalized_prior_var"] = unpenalized_prior_var;
  j["sigma_u_upper"] = sigma_u_upper;
  j["sigma2_eps_prior_shape"] = sigma2_eps_prior_shape;
  j["sigma2_eps_prior_rate"] = sigma2_eps_prior_rate;
  j["fixed_sigma2_eps"] = fixed_sigma2_eps ? nlohmann::json(*fixed_sigma2_eps) : nlohmann::json();
  j["fixed_sigma2_u"] = fixed_sigma2_u ? nlohmann::json(*fixed_sigma2_u) : nlohmann::json();
  j["n_burn"] = n_burn;
  j["n_save"] = n_save;
  j["seed"] = seed;
  j["include_intercept"] = include_intercept;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.prior = j.value("prior", std::string("horseshoe")) == "gaussian" ? PriorKind::Gaussian
                                                                       : PriorKind::Horseshoe;
    if (j.contains("prior_cov")) {
      const auto rows = j.at("prior_cov").get<std::vector<std::vector<double>>>();
      c.prior_cov.resize(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t k = 0; k < rows[r].size(); ++k) c.prior_cov(r, k) = rows[r][k];
    }
    c.horseshoe_global_scale = j.value("horseshoe_global_scale", 1.0);
    c.unpenalized_prior_var = j.value("unpenalized_prior_var", 1.0e6);
    c.sigma_u_upper = j.value("sigma_u_upper", 100.0);
    c.sigma2_eps_prior_shape = j.value("sigma2_eps_prior_shape", 0.0);
    c.sigma2_eps_prior_rate = j.value("sigma2_eps_prior_rate", 0.0);
    if (j.contains("fixed_sigma2_eps") && !j["fixed_sigma2_eps"].is_null())
      c.fixed_sigma2_eps = j["fixed_sigma2_eps"].get<double>();
    if (j.contains("fixed_sigma2_u") && !j["fixed_sigma2_u"].is_null())
      c.fixed_sigma2_u = j["fixed_sigma2_u"].get<double>();
    c.n_burn = j.value("n_burn", 5000);
    c.n_save = j.value("n_save", 10000);
    c.seed = j.value("seed", std::uint64_t{0});
    c.include_intercept = j.value("include_intercept", true);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config error: ") + e.what());
  }
  return c;
}

nlohmann::json ChainDiagnostics::to_json() const {
  return {{"ess_beta", std::vector<double>(ess_beta.data(), ess_beta.data() + ess_beta.size())},
          {"ess_sigma2_eps", ess_sigma2_eps},
          {"ess_sigma2_u", ess_sigma2_u}};
}

void PosteriorDraws::validate(bool allow_zero_variance) const {
  const auto T = sigma2_eps.size();
  if (T == 0) throw ValidationError("shape error: no posterior draws");
  if (beta.rows() != T || u.rows() != T || sigma2_u.size() != T ||
      (y_tilde.size() > 0 && y_tilde.rows() != T))
    throw ValidationError("shape error: draw counts differ across parameter blocks");
  const double floor = allow_zero_variance ? 0.0 : std::nextafter(0.0, 1.0);
  if ((sigma2_eps.array() < floor).any() || (sigma2_u.array() < floor).any() ||
      !sigma2_eps.allFinite() || !sigma2_u.allFinite())
    throw ValidationError("validation error: variance draws must be positive and finite");
}

PosteriorDraws PosteriorDraws::thinned(int stride) const {
  if (stride <= 1) return *this;
  const int T = draws();
  const int kept = (T + stride - 1) / stride;
  PosteriorDraws out;
  out.beta.resize(kept, beta.cols());
  out.u.resize(kept, u.cols());
  out.sigma2_eps.resize(kept);
  out.sigma2_u.resize(kept);
  if (has_predictive()) out.y_tilde.resize(kept, y_tilde.cols());
  for (int k = 0; k < kept; ++k) {
    const int t = k * stride;
    out.beta.row(k) = beta.row(t);
    out.u.row(k) = u.row(t);
    out.sigma2_eps(k) = sigma2_eps(t);
    out.sigma2_u(k) = sigma2_u(t);
    if (has_predictive()) out.y_tilde.row(k) = y_tilde.row(t);
  }
  out.diagnostics = diagnostics;
  return out;
}

PredictionDesign PredictionDesign::grouped(Eigen::MatrixXd X, std::vector<int> group_sizes,
                                           PredictionMode mode, std::vector<int> existing_index) {
  PredictionDesign d;
  d.X = std::move(X);
  d.group_sizes = std::move(group_sizes);
  d.offsets.assign(d.group_sizes.size() + 1, 0);
  for (std::size_t i = 0; i < d.group_sizes.size(); ++i)
    d.offsets[i + 1] = d.offsets[i] + d.group_sizes[i];
  d.mode = mode;
  d.existing_index = std::move(existing_index);
  if (d.mode == PredictionMode::ExistingSubject && d.existing_index.empty()) {
    d.existing_index.resize(d.group_sizes.size());
    for (std::size_t i = 0; i < d.existing_index.size(); ++i) d.existing_index[i] = static_cast<int>(i);
  }
  if (d.offsets.back() != d.X.rows())
    throw ValidationError("shape error: prediction group sizes do not sum to the design rows");
  return d;
}

PredictionDesign PredictionDesign::in_sample(const LongitudinalDataset& data, PredictionMode mode) {
  return grouped(data.X, data.group_sizes, mode);
}

PredictionDesign PredictionDesign::replicated(const Eigen::MatrixXd& subject_rows,
                                              const std::vector<int>& m_tilde, PredictionMode mode,
                                              std::vector<int> existing_index) {
  if (static_cast<int>(m_tilde.size()) != subject_rows.rows())
    throw ValidationError("shape error: m_tilde must have one entry per prediction subject");
  int total = 0;
  for (int m : m_tilde) {
    if (m < 1) throw ValidationError("shape error: replications must be >= 1");
    total += m;
  }
  Eigen::MatrixXd X(total, subject_rows.cols());
  int r = 0;
  for (int i = 0; i < subject_rows.rows(); ++i)
    for (int j = 0; j < m_tilde[i]; ++j) X.row(r++) = subject_rows.row(i);
  return grouped(std::move(X), m_tilde, mode, std::move(existing_index));
}

void PredictionDesign::validate(int p, int n_fitted) const {
  if (X.cols() != p) throw ValidationError("shape error: design has " + std::to_string(X.cols()) +
                                           " columns, expected " + std::to_string(p));
  if (offsets.size() != group_sizes.size() + 1 || offsets.back() != X.rows())
    throw ValidationError("shape error: design grouping is inconsistent");
  for (int m : group_sizes)
    if (m < 1) throw ValidationError("shape error: empty prediction group");
  if (mode == PredictionMode::ExistingSubject) {
    if (existing_index.size() != group_sizes.size())
      throw ValidationError("shape error: existing-subject design needs one index per subject");
    for (int idx : existing_index)
      if (idx < 0 || idx >= n_fitted)
        throw ValidationError("shape error: existing subject index out of range");
  }
}

PosteriorDraws predictive_draws(const PosteriorDraws& draws, const PredictionDesign& design,
                                std::uint64_t seed, int threads) {
  draws.validate(/*allow_zero_variance=*/true);
  design.validate(draws.p(), draws.n());
  PosteriorDraws out = draws;
  const int T = draws.draws();
  out.y_tilde.resize(T, design.rows());
  const bool fresh = design.mode == PredictionMode::NewSubject;
  parallel_for(T, threads, [&](int t) {
    CounterRng rng(seed, static_cast<std::uint64_t>(t));
    const double sd_eps = std::sqrt(draws.sigma2_eps(t));
    const double sd_u = std::sqrt(draws.sigma2_u(t));
    const Eigen::VectorXd mean = design.X * draws.beta.row(t).transpose();
    for (int i = 0; i < design.subjects(); ++i) {
      const double ui = fresh ? sd_u * rng.normal() : draws.u(t, design.existing_index[i]);
      for (int r = design.offsets[i]; r < design.offsets[i + 1]; ++r)
        out.y_tilde(t, r) = mean(r) + ui + sd_eps * rng.normal();
    }
  });
  return out;
}

}  // namespace lmmsubset
