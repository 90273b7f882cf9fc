#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include "lmmsubset/dataset.hpp"
#include "lmmsubset/decision.hpp"
#include "lmmsubset/posterior.hpp"

namespace lmmsubset {

/// Random balanced partition of subjects 0..n-1 into K validation sets.
struct FoldPlan {
  int K = 10;
  std::vector<int> assignment;  // subject -> fold in 0..K-1
  std::uint64_t seed = 0;

  int subjects() const { return static_cast<int>(assignment.size()); }
  std::vector<int> validation(int k) const;
  std::vector<int> training(int k) const;
  std::vector<int> sizes() const;
};

// K must be in [2, n].
FoldPlan make_folds(int n, int K, std::uint64_t seed);

struct CrossValidationConfig {
  int K = 10;
  ModelConfig model;          // per-fold sampler settings; seeds are derived
  std::uint64_t seed = 0;     // master seed for folds, chains and predictive draws
  // Predictive draws per fold are thinned to `thinned_draws` when
  // (validation rows) x T exceeds this budget.
  std::size_t draw_budget = 50'000'000;
  int thinned_draws = 2000;
  int threads = 1;
  // Fold fits are cached here when set; otherwise $LMMSUBSET_CACHE_DIR if set.
  std::optional<std::filesystem::path> cache_dir;

  nlohmann::json to_json() const;
};

/// Posterior fit on the training subjects of one fold, reduced to what the
/// subset evaluations need.
struct FoldFit {
  int fold = 0;
  std::vector<int> training_subjects;
  std::vector<int> validation_subjects;
  int thin_stride = 1;
  bool from_cache = false;

  // Training-data decision problem: in-sample, existing-subject weights.
  Eigen::MatrixXd train_gram;   // X' Omega_hat X
  Eigen::VectorXd train_cross;  // X' y_omega_hat

  // Validation design and responses.
  Eigen::MatrixXd X_valid;
  Eigen::VectorXd y_valid;
  std::vector<int> valid_sizes;

  // Omega_hat at the validation group sizes: a_hat I - b_hat[m] 1 1'.
  double a_hat = 0;
  std::vector<int> distinct_m;
  Eigen::VectorXd b_hat;  // indexed like distinct_m

  // Per-draw expansion of the predictive loss at new-subject draws:
  //   loss_t(d) = q_t - 2 d'g_t + a_t d'G0 d - sum_m c_t(m) d'G_m d.
  Eigen::VectorXd q;              // T
  Eigen::MatrixXd g;              // T x p
  Eigen::VectorXd a;              // T
  Eigen::MatrixXd c;              // T x |distinct_m|
  Eigen::MatrixXd G0;             // X_valid' X_valid
  std::vector<Eigen::MatrixXd> Gm;

  int draws() const { return static_cast<int>(q.size()); }
};

// Fits the sampler to the training subjects of `fold` and precomputes the
// fold's loss pieces. Seeds: fold seed = derive(seed, "fold", k); chain and
// training predictive draws derive from it; validation predictive draws use
// derive(seed, "fold-predictive", k).
FoldFit refit_fold(const LongitudinalDataset& data, const FoldPlan& plan, int fold,
                   const CrossValidationConfig& config);

struct CrossValidation {
  FoldPlan plan;
  std::vector<FoldFit> folds;
  int draws() const { return folds.empty() ? 0 : folds.front().draws(); }
};

CrossValidation cross_validate(const LongitudinalDataset& data, const CrossValidationConfig& config);

struct SubsetEvaluation {
  std::vector<int> subset;
  double empirical_loss = 0;             // L_S
  Eigen::VectorXd predictive_loss_draws; // L~_S per draw (paired across subsets)
  std::vector<Eigen::VectorXd> delta_hat_per_fold;
};

SubsetEvaluation evaluate_subset(const std::vector<int>& subset, const CrossValidation& cv);
std::vector<SubsetEvaluation> evaluate_subsets(const std::vector<std::vector<int>>& subsets,
                                               const CrossValidation& cv, int threads = 1);

struct Acceptance {
  double probability = 0;  // P(D~ <= eta)
  int floored_draws = 0;   // draws whose S_min loss fell below 1e-12
};

inline constexpr double kLossFloor = 1e-12;

// D~ = 100 (L~_S - L~_min) / max(L~_min, 1e-12), paired by draw.
Acceptance acceptance_probability(const SubsetEvaluation& s, const SubsetEvaluation& s_min,
                                  double eta);

struct FamilyMember {
  std::vector<int> subset;
  double acceptance_probability = 0;
  double empirical_loss = 0;
  double predictive_loss_mean = 0;
};

struct AcceptableFamily {
  double eta = 0;
  double epsilon = 0.10;
  std::vector<FamilyMember> members;  // sorted by size, then empirical loss
  std::vector<int> s_min;
  std::vector<int> s_small;
  Eigen::VectorXd vi;                 // fraction of members containing j
  int floored_draws = 0;

  bool contains(const std::vector<int>& subset) const;
};

// S_min is the candidate with the smallest empirical loss (ties: smaller,
// then lexicographically first subset). Members have P(D~ <= eta) >= epsilon.
AcceptableFamily build_family(const std::vector<SubsetEvaluation>& evaluations, int p, double eta,
                              double epsilon);

}  // namespace lmmsubset
