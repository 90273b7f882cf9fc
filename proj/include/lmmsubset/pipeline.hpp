#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmmsubset/decision.hpp"
#include "lmmsubset/family.hpp"
#include "lmmsubset/posterior.hpp"
#include "lmmsubset/search.hpp"
#include "lmmsubset/sim.hpp"

namespace lmmsubset {

struct PipelineConfig {
  ModelConfig model;
  int s_max = 0;  // 0: min(p, 35)
  int s_k = 15;
  int K = 10;
  double eta = 0.0;
  double epsilon = 0.10;
  double interval_level = 0.90;
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t draw_budget = 50'000'000;
  std::optional<std::filesystem::path> cache_dir;

  nlohmann::json to_json() const;
};

/// Full-data posterior with in-sample existing-subject predictive draws.
struct FitResult {
  PosteriorDraws draws;  // y_tilde at X~ = X, Z~ = Z
  std::uint64_t predictive_seed = 0;
};

FitResult fit(const LongitudinalDataset& data, const ModelConfig& model, std::uint64_t seed,
              int threads = 1);
// Regenerates y_tilde for stored draws (seed from the fit manifest).
void attach_in_sample_predictive(PosteriorDraws& draws, const LongitudinalDataset& data,
                                 std::uint64_t predictive_seed, int threads = 1);

// Pre-screen on the draws, then branch-and-bound on the pseudo-data columns
// kept. Returned subsets use original column indices.
CandidateList search_candidates(const PosteriorDraws& draws, const DecisionProblem& problem,
                                const SearchConfig& config);

struct MethodSummary {
  std::string method;             // "M", "S_min", "S_small"
  std::vector<int> selected;
  Eigen::VectorXd estimate;       // p
  Eigen::VectorXd lower;          // p
  Eigen::VectorXd upper;          // p
};

struct PipelineResult {
  FitResult fit;
  std::vector<int> screened;
  CandidateList candidates;
  CrossValidation cv;
  std::vector<SubsetEvaluation> evaluations;
  AcceptableFamily family;
  std::vector<MethodSummary> methods;
  std::vector<Eigen::VectorXd> member_coefficients;  // full-data delta_hat per family member
};

// Posterior mean, HPD intervals at `level`, and selection by 95% HPD
// intervals excluding zero.
MethodSummary posterior_summary(const PosteriorDraws& draws, double level);
MethodSummary subset_summary(const std::string& name, const std::vector<int>& subset,
                             const DecisionProblem& problem, const PosteriorDraws& draws,
                             double level);

PipelineResult run_pipeline(const LongitudinalDataset& data, const PipelineConfig& config);

// One row per (rep, method).
struct SimRow {
  int rep = 0;
  std::string method;
  int size = 0;
  double loss = 0;
  double tpr = 0;
  double tnr = 0;
  double width = 0;
  double coverage = 0;
};

std::vector<SimRow> simulate_replication(const SimDesign& design, int rep, const PipelineConfig& config);
std::vector<SimRow> simulate(const SimDesign& design, const PipelineConfig& config);
std::string sim_rows_to_csv(const std::vector<SimRow>& rows);

}  // namespace lmmsubset
