#include "lmmsubset/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/gibbs.hpp"
#include "lmmsubset/parallel.hpp"
#include "lmmsubset/rng.hpp"
#include "lmmsubset/stats.hpp"

namespace lmmsubset {

nlohmann::json PipelineConfig::to_json() const {
  return {{"model", model.to_json()}, {"s_max", s_max},     {"s_k", s_k},
          {"K", K},                   {"eta", eta},         {"epsilon", epsilon},
          {"interval_level", interval_level},               {"seed", seed},
          {"draw_budget", draw_budget}};
}

// ---------------------------------------------------------------------------
// Fit and search
// ---------------------------------------------------------------------------

FitResult fit(const LongitudinalDataset& data, const ModelConfig& model, std::uint64_t seed,
              int threads) {
  ModelConfig cfg = model;
  cfg.seed = seed;
  FitResult out;
  out.draws = run_chain(data, cfg);
  out.predictive_seed = derive_seed(seed, "predictive");
  attach_in_sample_predictive(out.draws, data, out.predictive_seed, threads);
  return out;
}

void attach_in_sample_predictive(PosteriorDraws& draws, const LongitudinalDataset& data,
                                 std::uint64_t predictive_seed, int threads) {
  const auto design = PredictionDesign::in_sample(data, PredictionMode::ExistingSubject);
  draws = predictive_draws(draws, design, predictive_seed, threads);
}

CandidateList search_candidates(const PosteriorDraws& draws, const DecisionProblem& problem,
                                const SearchConfig& config) {
  const std::vector<int> screened = prescreen(draws, config.s_max, config.forced_in);
  const PseudoData& pd = problem.pseudo();
  const Eigen::MatrixXd Xs = select_columns(pd.X_star, screened);

  SearchConfig local = config;
  local.s_max = std::min(config.s_max, static_cast<int>(screened.size()));
  local.forced_in.clear();
  for (int j : config.forced_in)
    local.forced_in.push_back(static_cast<int>(
        std::lower_bound(screened.begin(), screened.end(), j) - screened.begin()));
  CandidateList found = branch_and_bound(pd.y_star, Xs, local);

  CandidateList out;
  out.stats = found.stats;
  out.by_size.assign(found.by_size.size(), {});
  for (std::size_t k = 0; k < found.by_size.size(); ++k) {
    for (const auto& c : found.by_size[k]) {
      std::vector<int> subset;
      for (int j : c.subset) subset.push_back(screened[j]);
      out.by_size[k].push_back(problem.optimal(subset));
    }
    std::stable_sort(out.by_size[k].begin(), out.by_size[k].end(), [](const auto& a, const auto& b) {
      return a.expected_loss < b.expected_loss ||
             (a.expected_loss == b.expected_loss && a.subset < b.subset);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Method summaries
// ---------------------------------------------------------------------------

MethodSummary posterior_summary(const PosteriorDraws& draws, double level) {
  const int p = draws.p();
  MethodSummary m;
  m.method = "M";
  m.estimate = draws.beta.colwise().mean().transpose();
  m.lower.resize(p);
  m.upper.resize(p);
  for (int j = 0; j < p; ++j) {
    const Eigen::VectorXd col = draws.beta.col(j);
    const std::span<const double> v(col.data(), static_cast<std::size_t>(col.size()));
    std::tie(m.lower(j), m.upper(j)) = stats::hpd_interval(v, level);
    const auto [lo95, hi95] = stats::hpd_interval(v, 0.95);
    if (lo95 > 0.0 || hi95 < 0.0) m.selected.push_back(j);
  }
  return m;
}

MethodSummary subset_summary(const std::string& name, const std::vector<int>& subset,
                             const DecisionProblem& problem, const PosteriorDraws& draws,
                             double level) {
  const SubsetCoefficients coef = problem.optimal(subset);
  const CoefficientIntervals ci =
      projected_intervals(coef, problem.project(subset, draws.y_tilde), level);
  return {name, subset, coef.delta_hat, ci.lower, ci.upper};
}

// ---------------------------------------------------------------------------
// End to end
// ---------------------------------------------------------------------------

PipelineResult run_pipeline(const LongitudinalDataset& data, const PipelineConfig& config) {
  data.validate();
  PipelineResult r;
  r.fit = fit(data, config.model, config.seed, config.threads);

  const auto design = PredictionDesign::in_sample(data, PredictionMode::ExistingSubject);
  const DecisionProblem problem(summarize_weights(r.fit.draws, design), data.X);

  SearchConfig sc = SearchConfig::defaults(data.cols(), data.has_intercept);
  if (config.s_max > 0) sc.s_max = std::min(config.s_max, data.cols());
  sc.s_k = config.s_k;
  r.screened = prescreen(r.fit.draws, sc.s_max, sc.forced_in);
  r.candidates = search_candidates(r.fit.draws, problem, sc);

  CrossValidationConfig cvc;
  cvc.K = config.K;
  cvc.model = config.model;
  cvc.seed = config.seed;
  cvc.draw_budget = config.draw_budget;
  cvc.threads = config.threads;
  cvc.cache_dir = config.cache_dir;
  r.cv = cross_validate(data, cvc);

  std::vector<std::vector<int>> subsets;
  for (const auto& c : r.candidates.flatten()) subsets.push_back(c.subset);
  r.evaluations = evaluate_subsets(subsets, r.cv, config.threads);
  r.family = build_family(r.evaluations, data.cols(), config.eta, config.epsilon);

  r.methods.push_back(posterior_summary(r.fit.draws, config.interval_level));
  r.methods.push_back(subset_summary("S_min", r.family.s_min, problem, r.fit.draws, config.interval_level));
  r.methods.push_back(subset_summary("S_small", r.family.s_small, problem, r.fit.draws, config.interval_level));
  for (const auto& m : r.family.members) r.member_coefficients.push_back(problem.optimal(m.subset).delta_hat);
  return r;
}

// ---------------------------------------------------------------------------
// Simulation study
// ---------------------------------------------------------------------------

std::vector<SimRow> simulate_replication(const SimDesign& design, int rep, const PipelineConfig& config) {
  SimDesign d = design;
  d.seed = derive_seed(design.seed, "rep", static_cast<std::uint64_t>(rep));
  const SimInstance inst = generate(d);
  PipelineConfig pc = config;
  pc.seed = d.seed;
  const PipelineResult r = run_pipeline(inst.data, pc);

  std::vector<SimRow> rows;
  for (const auto& m : r.methods) {
    SimRow row;
    row.rep = rep;
    row.method = m.method;
    row.size = static_cast<int>(m.selected.size());
    row.loss = true_mahalanobis_loss(m.estimate, inst.truth);
    const auto rates = selection_metrics(m.selected, inst.truth);
    row.tpr = rates.tpr;
    row.tnr = rates.tnr;
    const auto iv = interval_metrics(m.lower, m.upper, inst.truth);
    row.width = iv.mean_width;
    row.coverage = iv.coverage;
    rows.push_back(row);
  }
  return rows;
}

std::vector<SimRow> simulate(const SimDesign& design, const PipelineConfig& config) {
  design.validate();
  std::vector<std::vector<SimRow>> per_rep(design.n_reps);
  PipelineConfig inner = config;
  inner.threads = 1;
  parallel_for(design.n_reps, config.threads,
               [&](int rep) { per_rep[rep] = simulate_replication(design, rep, inner); });
  std::vector<SimRow> rows;
  for (auto& v : per_rep) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

std::string sim_rows_to_csv(const std::vector<SimRow>& rows) {
  std::ostringstream os;
  os << "rep,method,size,loss,tpr,tnr,width,coverage\n";
  for (const auto& r : rows)
    os << r.rep << ',' << r.method << ',' << r.size << ',' << format_double(r.loss) << ','
       << format_double(r.tpr) << ',' << format_double(r.tnr) << ',' << format_double(r.width)
       << ',' << format_double(r.coverage) << '\n';
  return os.str();
}

}  // namespace lmmsubset
