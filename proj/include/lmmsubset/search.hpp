#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "lmmsubset/decision.hpp"
#include "lmmsubset/posterior.hpp"

namespace lmmsubset {

struct SearchConfig {
  int s_max = 35;                 // largest subset size, counting forced_in
  int s_k = 15;                   // subsets kept per size
  std::vector<int> forced_in{0};  // columns in every subset

  // s_max = min(p, 35), s_k = 15.
  static SearchConfig defaults(int p, bool intercept = true);
};

struct SearchStats {
  std::uint64_t nodes_visited = 0;     // subsets whose RSS was evaluated
  std::uint64_t subtrees_pruned = 0;
  std::uint64_t monotonicity_violations = 0;
  double subsets_total = 0.0;          // subsets of admissible size
  double pruned_fraction() const {
    return subsets_total > 0 ? 1.0 - static_cast<double>(nodes_visited) / subsets_total : 0.0;
  }
};

/// Best subsets per size. by_size[k] holds up to s_k subsets of size k
/// (forced columns included), sorted by RSS with lexicographic tie-breaks.
struct CandidateList {
  std::vector<std::vector<SubsetCoefficients>> by_size;
  SearchStats stats;

  std::vector<SubsetCoefficients> flatten() const;
  std::size_t total() const;
};

// RSS of least squares of y on the columns in `subset` (minimum-norm on rank
// deficiency); ||y||^2 for the empty subset.
double rss(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<int>& subset);
Eigen::VectorXd least_squares(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              const std::vector<int>& subset);

// Keeps forced_in plus the columns with the largest |posterior mean| / sd of
// beta, up to s_max columns in total. Returns sorted original indices.
std::vector<int> prescreen(const PosteriorDraws& draws, int s_max, const std::vector<int>& forced_in);

/// Exact best-s_k subsets of every size up to s_max containing forced_in,
/// by least squares on (y*, X*). Forced columns are projected out first; the
/// tree then enumerates subsets of the free columns, bounding each subtree by
/// the RSS of its largest member.
CandidateList branch_and_bound(const Eigen::VectorXd& y_star, const Eigen::MatrixXd& X_star,
                               const SearchConfig& config);

}  // namespace lmmsubset
