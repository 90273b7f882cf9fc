#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "lmmsubset/decision.hpp"
#include "lmmsubset/family.hpp"
#include "lmmsubset/pipeline.hpp"
#include "lmmsubset/search.hpp"

namespace lmmsubset {

// candidates.json body: per-size subsets with RSS and delta_hat.
nlohmann::json candidates_to_json(const CandidateList& candidates, const std::vector<int>& screened,
                                  const std::vector<std::string>& column_names);
// Subsets listed in a candidates document, in file order.
std::vector<std::vector<int>> candidate_subsets(const nlohmann::json& doc);

struct FamilyReportInput {
  const AcceptableFamily& family;
  const std::vector<SubsetEvaluation>& evaluations;
  const DecisionProblem& problem;   // full-data in-sample problem
  const PosteriorDraws& draws;      // full-data draws carrying y_tilde
  const std::vector<std::string>& column_names;
  double level = 0.90;
  int K = 10;
  std::uint64_t seed = 0;
};

// family.json body. Contains no timestamps or thread counts, so equal
// inputs give byte-identical dumps.
nlohmann::json family_to_json(const FamilyReportInput& in);

nlohmann::json intervals_to_json(const MethodSummary& m, const std::vector<std::string>& names,
                                 double level);

// Plot-ready tables from a family document.
std::string loss_table_csv(const nlohmann::json& family);
std::string vi_table_csv(const nlohmann::json& family);
std::string coefficient_table_csv(const nlohmann::json& family);

// Dump with a trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace lmmsubset
