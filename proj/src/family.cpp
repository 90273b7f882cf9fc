#include "lmmsubset/family.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "lmmsubset/digest.hpp"
#include "lmmsubset/draws_io.hpp"
#include "lmmsubset/errors.hpp"
#include "lmmsubset/gibbs.hpp"
#include "lmmsubset/parallel.hpp"
#include "lmmsubset/rng.hpp"
#include "lmmsubset/weights.hpp"

namespace lmmsubset {

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

std::vector<int> FoldPlan::validation(int k) const {
  std::vector<int> out;
  for (int i = 0; i < subjects(); ++i)
    if (assignment[i] == k) out.push_back(i);
  return out;
}

std::vector<int> FoldPlan::training(int k) const {
  std::vector<int> out;
  for (int i = 0; i < subjects(); ++i)
    if (assignment[i] != k) out.push_back(i);
  return out;
}

std::vector<int> FoldPlan::sizes() const {
  std::vector<int> out(K, 0);
  for (int f : assignment) ++out[f];
  return out;
}

FoldPlan make_folds(int n, int K, std::uint64_t seed) {
  if (K < 2) throw ValidationError("configuration error: K must be >= 2 (K = 1 leaves no holdout)");
  if (K > n) throw ValidationError("configuration error: K = " + std::to_string(K) +
                                   " exceeds the number of subjects " + std::to_string(n));
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng rng(derive_seed(seed, "folds"), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1))]);
  FoldPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.assignment.assign(n, 0);
  for (int pos = 0; pos < n; ++pos) plan.assignment[perm[pos]] = pos % K;
  return plan;
}

nlohmann::json CrossValidationConfig::to_json() const {
  return {{"K", K},
          {"model", model.to_json()},
          {"seed", seed},
          {"draw_budget", draw_budget},
          {"thinned_draws", thinned_draws}};
}

// ---------------------------------------------------------------------------
// Fold fits
// ---------------------------------------------------------------------------

namespace {

std::optional<std::filesystem::path> resolve_cache_dir(const CrossValidationConfig& config) {
  if (config.cache_dir) return config.cache_dir;
  if (const char* env = std::getenv("LMMSUBSET_CACHE_DIR"); env && *env)
    return std::filesystem::path(env);
  return std::nullopt;
}

PosteriorDraws fit_training(const LongitudinalDataset& train, const FoldPlan& plan, int fold,
                            const CrossValidationConfig& config, const ModelConfig& model,
                            bool& from_cache) {
  from_cache = false;
  const auto cache = resolve_cache_dir(config);
  if (!cache) return run_chain(train, model);

  nlohmann::json key_doc = {{"data", sha256_hex(dataset_to_csv(train))},
                            {"model", model.to_json()},
                            {"assignment", plan.assignment},
                            {"fold", fold}};
  const std::string key = sha256_hex(key_doc.dump());
  const auto dir = *cache / ("fold-" + key.substr(0, 32));
  if (std::filesystem::exists(dir / "manifest.json")) {
    try {
      nlohmann::json manifest;
      PosteriorDraws cached = load_draws(dir, &manifest);
      if (manifest.value("cache_key", std::string()) == key) {
        from_cache = true;
        return cached;
      }
    } catch (const std::exception&) {
      // Unreadable or corrupt entry: refit and overwrite.
    }
  }
  PosteriorDraws draws = run_chain(train, model);
  const auto tmp = dir.string() + ".tmp-" + std::to_string(fold);
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);
  save_draws(tmp, draws, {{"cache_key", key}, {"fold", fold}});
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  std::filesystem::rename(tmp, dir, ec);
  if (ec) std::filesystem::remove_all(tmp, ec);
  return draws;
}

}  // namespace

FoldFit refit_fold(const LongitudinalDataset& data, const FoldPlan& plan, int fold,
                   const CrossValidationConfig& config) {
  if (plan.subjects() != data.subjects())
    throw ValidationError("fold plan does not match the dataset's subject count");
  if (fold < 0 || fold >= plan.K) throw ValidationError("fold index out of range");

  FoldFit f;
  f.fold = fold;
  f.training_subjects = plan.training(fold);
  f.validation_subjects = plan.validation(fold);
  if (f.training_subjects.empty() || f.validation_subjects.empty())
    throw ValidationError("configuration error: fold " + std::to_string(fold) + " is empty");
  const LongitudinalDataset train = data.subset_subjects(f.training_subjects);
  const LongitudinalDataset valid = data.subset_subjects(f.validation_subjects);

  const std::uint64_t fold_seed = derive_seed(config.seed, "fold", fold);
  ModelConfig model = config.model;
  model.seed = fold_seed;
  PosteriorDraws draws = fit_training(train, plan, fold, config, model, f.from_cache);

  const auto T0 = static_cast<std::size_t>(draws.draws());
  const auto widest = static_cast<std::size_t>(std::max(train.rows(), valid.rows()));
  if (widest * T0 > config.draw_budget && static_cast<int>(T0) > config.thinned_draws) {
    f.thin_stride = static_cast<int>((T0 + config.thinned_draws - 1) / config.thinned_draws);
    draws = draws.thinned(f.thin_stride);
  }

  // Training decision problem.
  {
    const auto design = PredictionDesign::in_sample(train, PredictionMode::ExistingSubject);
    const PosteriorDraws pd = predictive_draws(draws, design, derive_seed(fold_seed, "predictive"));
    const WeightSummary ws = summarize_weights(pd, design);
    const Eigen::MatrixXd wx = ws.omega_hat.multiply(train.X);
    f.train_gram = train.X.transpose() * wx;
    f.train_gram = 0.5 * (f.train_gram + f.train_gram.transpose());
    f.train_cross = train.X.transpose() * ws.y_omega_hat;
  }

  // Validation pieces.
  f.X_valid = valid.X;
  f.y_valid = valid.y;
  f.valid_sizes = valid.group_sizes;
  f.distinct_m = valid.group_sizes;
  std::sort(f.distinct_m.begin(), f.distinct_m.end());
  f.distinct_m.erase(std::unique(f.distinct_m.begin(), f.distinct_m.end()), f.distinct_m.end());
  const int M = static_cast<int>(f.distinct_m.size());
  const int p = data.cols();
  const int nv = valid.subjects();
  std::vector<int> m_index(nv);
  for (int i = 0; i < nv; ++i)
    m_index[i] = static_cast<int>(std::lower_bound(f.distinct_m.begin(), f.distinct_m.end(),
                                                   valid.group_sizes[i]) - f.distinct_m.begin());

  Eigen::MatrixXd sums(nv, p);
  for (int i = 0; i < nv; ++i)
    sums.row(i) = valid.X.middleRows(valid.offsets[i], valid.group_sizes[i]).colwise().sum();
  f.G0 = valid.X.transpose() * valid.X;
  f.Gm.assign(M, Eigen::MatrixXd::Zero(p, p));
  for (int i = 0; i < nv; ++i) f.Gm[m_index[i]] += sums.row(i).transpose() * sums.row(i);

  const auto design = PredictionDesign::grouped(valid.X, valid.group_sizes, PredictionMode::NewSubject);
  const PosteriorDraws pv =
      predictive_draws(draws, design, derive_seed(config.seed, "fold-predictive", fold));
  const int T = draws.draws();
  f.q.resize(T);
  f.g.resize(T, p);
  f.a.resize(T);
  f.c.resize(T, M);
  f.b_hat = Eigen::VectorXd::Zero(M);
  f.a_hat = 0;
  Eigen::VectorXd ysum(nv);
  for (int t = 0; t < T; ++t) {
    const double s2e = draws.sigma2_eps(t);
    const double s2u = draws.sigma2_u(t);
    const double at = 1.0 / s2e;
    for (int mi = 0; mi < M; ++mi) f.c(t, mi) = shared_weight_coefficient(s2e, s2u, f.distinct_m[mi]);
    const auto yt = pv.y_tilde.row(t).transpose();
    double qt = at * yt.squaredNorm();
    Eigen::VectorXd lin = Eigen::VectorXd::Zero(nv);
    for (int i = 0; i < nv; ++i) {
      ysum(i) = yt.segment(valid.offsets[i], valid.group_sizes[i]).sum();
      const double ci = f.c(t, m_index[i]);
      qt -= ci * ysum(i) * ysum(i);
      lin(i) = ci * ysum(i);
    }
    f.q(t) = qt;
    f.g.row(t) = (at * (valid.X.transpose() * yt) - sums.transpose() * lin).transpose();
    f.a(t) = at;
    f.a_hat += at;
    f.b_hat += f.c.row(t).transpose();
  }
  f.a_hat /= T;
  f.b_hat /= T;
  return f;
}

CrossValidation cross_validate(const LongitudinalDataset& data, const CrossValidationConfig& config) {
  CrossValidation cv;
  cv.plan = make_folds(data.subjects(), config.K, config.seed);
  cv.folds.resize(config.K);
  parallel_for(config.K, config.threads,
               [&](int k) { cv.folds[k] = refit_fold(data, cv.plan, k, config); });
  for (const auto& f : cv.folds)
    if (f.draws() != cv.folds.front().draws())
      throw NumericalError("acceptable_family/cross_validate", "folds disagree on draw count");
  return cv;
}

// ---------------------------------------------------------------------------
// Subset evaluation
// ---------------------------------------------------------------------------

SubsetEvaluation evaluate_subset(const std::vector<int>& subset, const CrossValidation& cv) {
  if (cv.folds.empty()) throw ValidationError("pipeline error: no fold fits available");
  const int p = static_cast<int>(cv.folds.front().train_gram.rows());
  check_subset(subset, p);
  SubsetEvaluation ev;
  ev.subset = subset;
  const int T = cv.draws();
  ev.predictive_loss_draws = Eigen::VectorXd::Zero(T);
  const double K = static_cast<double>(cv.folds.size());

  for (const FoldFit& f : cv.folds) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(p);
    if (!subset.empty()) {
      const int s = static_cast<int>(subset.size());
      Eigen::MatrixXd A(s, s);
      Eigen::VectorXd b(s);
      for (int r = 0; r < s; ++r) {
        b(r) = f.train_cross(subset[r]);
        for (int c = 0; c < s; ++c) A(r, c) = f.train_gram(subset[r], subset[c]);
      }
      const Eigen::VectorXd ds = solve_normal_equations(A, b);
      for (int r = 0; r < s; ++r) delta(subset[r]) = ds(r);
    }
    const double nv = static_cast<double>(f.valid_sizes.size());

    // Empirical loss under Omega_hat.
    const Eigen::VectorXd e = f.y_valid - f.X_valid * delta;
    double loss = f.a_hat * e.squaredNorm();
    int off = 0;
    for (int m : f.valid_sizes) {
      const auto mi = std::lower_bound(f.distinct_m.begin(), f.distinct_m.end(), m) - f.distinct_m.begin();
      const double se = e.segment(off, m).sum();
      loss -= f.b_hat(mi) * se * se;
      off += m;
    }
    ev.empirical_loss += std::max(loss, 0.0) / nv / K;

    // Predictive loss per draw.
    const double quad0 = delta.dot(f.G0 * delta);
    Eigen::VectorXd quadm(f.Gm.size());
    for (std::size_t mi = 0; mi < f.Gm.size(); ++mi) quadm(mi) = delta.dot(f.Gm[mi] * delta);
    const Eigen::VectorXd lt = f.q - 2.0 * (f.g * delta) + quad0 * f.a - f.c * quadm;
    ev.predictive_loss_draws += (lt.array().max(0.0) / nv / K).matrix();
    ev.delta_hat_per_fold.push_back(std::move(delta));
  }
  return ev;
}

std::vector<SubsetEvaluation> evaluate_subsets(const std::vector<std::vector<int>>& subsets,
                                               const CrossValidation& cv, int threads) {
  std::vector<SubsetEvaluation> out(subsets.size());
  parallel_for(static_cast<int>(subsets.size()), threads,
               [&](int i) { out[i] = evaluate_subset(subsets[i], cv); });
  return out;
}

// ---------------------------------------------------------------------------
// Acceptable family
// ---------------------------------------------------------------------------

Acceptance acceptance_probability(const SubsetEvaluation& s, const SubsetEvaluation& s_min,
                                  double eta) {
  const auto T = s.predictive_loss_draws.size();
  if (T == 0 || s_min.predictive_loss_draws.size() != T)
    throw ValidationError("acceptance: predictive-loss draws are missing or unpaired");
  Acceptance acc;
  long accepted = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const double ref = s_min.predictive_loss_draws(t);
    if (ref < kLossFloor) ++acc.floored_draws;
    const double d = 100.0 * (s.predictive_loss_draws(t) - ref) / std::max(ref, kLossFloor);
    if (d <= eta) ++accepted;
  }
  acc.probability = static_cast<double>(accepted) / static_cast<double>(T);
  return acc;
}

bool AcceptableFamily::contains(const std::vector<int>& subset) const {
  return std::any_of(members.begin(), members.end(),
                     [&](const FamilyMember& m) { return m.subset == subset; });
}

AcceptableFamily build_family(const std::vector<SubsetEvaluation>& evaluations, int p, double eta,
                              double epsilon) {
  if (evaluations.empty()) throw ValidationError("build_family: empty candidate list");
  if (eta < 0) throw ValidationError("build_family: eta must be >= 0");
  if (epsilon < 0 || epsilon > 1) throw ValidationError("build_family: epsilon must be in [0, 1]");

  auto better = [](const SubsetEvaluation& a, const SubsetEvaluation& b) {
    if (a.empirical_loss != b.empirical_loss) return a.empirical_loss < b.empirical_loss;
    if (a.subset.size() != b.subset.size()) return a.subset.size() < b.subset.size();
    return a.subset < b.subset;
  };
  const SubsetEvaluation& best = *std::min_element(evaluations.begin(), evaluations.end(), better);

  AcceptableFamily fam;
  fam.eta = eta;
  fam.epsilon = epsilon;
  fam.s_min = best.subset;
  for (const auto& ev : evaluations) {
    const Acceptance acc = acceptance_probability(ev, best, eta);
    fam.floored_draws = std::max(fam.floored_draws, acc.floored_draws);
    if (acc.probability >= epsilon || ev.subset == best.subset) {
      fam.members.push_back({ev.subset, acc.probability, ev.empirical_loss,
                             ev.predictive_loss_draws.mean()});
    }
  }
  std::sort(fam.members.begin(), fam.members.end(), [](const auto& a, const auto& b) {
    if (a.subset.size() != b.subset.size()) return a.subset.size() < b.subset.size();
    if (a.empirical_loss != b.empirical_loss) return a.empirical_loss < b.empirical_loss;
    return a.subset < b.subset;
  });
  fam.members.erase(std::unique(fam.members.begin(), fam.members.end(),
                                [](const auto& a, const auto& b) { return a.subset == b.subset; }),
                    fam.members.end());
  fam.s_small = fam.members.front().subset;

  fam.vi = Eigen::VectorXd::Zero(p);
  for (const auto& m : fam.members)
    for (int j : m.subset) fam.vi(j) += 1.0;
  fam.vi /= static_cast<double>(fam.members.size());
  return fam;
}

}  // namespace lmmsubset
