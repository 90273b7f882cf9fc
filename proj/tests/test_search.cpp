#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/rng.hpp"
#include "lmmsubset/search.hpp"

using namespace lmmsubset;

namespace {

struct Problem {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
};

Problem random_problem(int n, int p, std::uint64_t seed, double corr = 0.5) {
  CounterRng rng(seed, 0);
  Problem pr;
  pr.X.resize(n, p);
  pr.X.col(0).setOnes();
  for (int r = 0; r < n; ++r) {
    double prev = rng.normal();
    for (int c = 1; c < p; ++c) {
      prev = corr * prev + std::sqrt(1 - corr * corr) * rng.normal();
      pr.X(r, c) = prev;
    }
  }
  pr.y.resize(n);
  for (int r = 0; r < n; ++r) {
    pr.y(r) = 1.0 + rng.normal();
    for (int c = 1; c < std::min(p, 5); ++c) pr.y(r) += (c % 2 ? 1.0 : -1.0) * pr.X(r, c);
  }
  return pr;
}

// Dense oracle: RSS by normal equations through QR of the selected block.
double oracle_rss(const Problem& pr, const std::vector<int>& s) {
  Eigen::MatrixXd A(pr.X.rows(), static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) A.col(static_cast<Eigen::Index>(k)) = pr.X.col(s[k]);
  if (s.empty()) return pr.y.squaredNorm();
  const Eigen::VectorXd b = A.colPivHouseholderQr().solve(pr.y);
  return (pr.y - A * b).squaredNorm();
}

// Exhaustive best-k per size containing column 0.
std::map<int, std::vector<std::pair<double, std::vector<int>>>> exhaustive(const Problem& pr, int s_max,
                                                                            int s_k) {
  const int p = static_cast<int>(pr.X.cols());
  std::map<int, std::vector<std::pair<double, std::vector<int>>>> out;
  for (int mask = 0; mask < (1 << (p - 1)); ++mask) {
    std::vector<int> s{0};
    for (int j = 1; j < p; ++j)
      if (mask & (1 << (j - 1))) s.push_back(j);
    if (static_cast<int>(s.size()) > s_max) continue;
    out[static_cast<int>(s.size())].push_back({oracle_rss(pr, s), s});
  }
  for (auto& [k, v] : out) {
    std::sort(v.begin(), v.end());
    if (static_cast<int>(v.size()) > s_k) v.resize(s_k);
  }
  return out;
}

}  // namespace

TEST_CASE("branch and bound matches exhaustive enumeration (p = 10)") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto pr = random_problem(60, 10, seed);
    SearchConfig cfg;
    cfg.s_max = 10;
    cfg.s_k = 3;
    const auto got = branch_and_bound(pr.y, pr.X, cfg);
    const auto want = exhaustive(pr, 10, 3);
    for (const auto& [k, v] : want) {
      REQUIRE(static_cast<int>(got.by_size.size()) > k);
      const auto& g = got.by_size[k];
      REQUIRE(g.size() == v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(g[i].subset == v[i].second);
        CHECK(g[i].expected_loss == doctest::Approx(v[i].first).epsilon(1e-9));
      }
    }
    CHECK(got.stats.monotonicity_violations == 0);
  }
}

TEST_CASE("orthonormal columns: best subsets are the largest projections") {
  const int n = 40, p = 7;
  CounterRng rng(4, 0);
  Eigen::MatrixXd G(n, p);
  for (auto& v : G.reshaped()) v = rng.normal();
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() * Eigen::MatrixXd::Identity(n, p);
  Eigen::VectorXd coef(p);
  coef << 3, 0.1, 2.5, 0.2, 1.5, 0.3, 0.05;
  const Eigen::VectorXd y = Q * coef;
  SearchConfig cfg;
  cfg.s_max = p;
  cfg.s_k = 1;
  const auto got = branch_and_bound(y, Q, cfg);
  CHECK(got.by_size[2][0].subset == std::vector<int>{0, 2});
  CHECK(got.by_size[3][0].subset == std::vector<int>{0, 2, 4});
  CHECK(got.by_size[4][0].subset == std::vector<int>{0, 2, 4, 5});
  CHECK(got.by_size[3][0].delta_hat(4) == doctest::Approx(1.5));
}

TEST_CASE("saturated design keeps every subset size up to n") {
  const auto pr = random_problem(6, 6, 5);
  SearchConfig cfg;
  cfg.s_max = 6;
  cfg.s_k = 2;
  const auto got = branch_and_bound(pr.y, pr.X, cfg);
  CHECK(got.by_size[6].size() == 1);
  CHECK(got.by_size[6][0].expected_loss < 1e-18 * pr.y.squaredNorm() + 1e-20);
}

TEST_CASE("rss helper and least squares") {
  const auto pr = random_problem(30, 5, 6);
  for (const std::vector<int>& s : {std::vector<int>{}, {0}, {0, 3}, {1, 2, 4}})
    CHECK(rss(pr.y, pr.X, s) == doctest::Approx(oracle_rss(pr, s)).epsilon(1e-10));
  Eigen::MatrixXd dup(4, 2);
  dup << 1, 1, 1, 1, 2, 2, 3, 3;
  Eigen::VectorXd y(4);
  y << 1, 1, 2, 3;
  const Eigen::VectorXd b = least_squares(y, dup, {0, 1});
  CHECK(b(0) == doctest::Approx(0.5));
  CHECK(b(1) == doctest::Approx(0.5));
}

TEST_CASE("pruning skips a positive fraction of the tree at p = 15") {
  const auto pr = random_problem(200, 15, 7, 0.3);
  SearchConfig cfg;
  cfg.s_max = 15;
  cfg.s_k = 15;
  const auto got = branch_and_bound(pr.y, pr.X, cfg);
  CHECK(got.stats.subsets_total == doctest::Approx(std::pow(2.0, 14)));
  CHECK(got.stats.pruned_fraction() > 0.0);
  CHECK(got.stats.subtrees_pruned > 0);
  CHECK(got.stats.monotonicity_violations == 0);
  for (std::size_t k = 1; k < got.by_size.size(); ++k)
    for (std::size_t i = 1; i < got.by_size[k].size(); ++i)
      CHECK(got.by_size[k][i - 1].expected_loss <= got.by_size[k][i].expected_loss);
}

TEST_CASE("forced columns appear in every subset") {
  const auto pr = random_problem(50, 8, 8);
  SearchConfig cfg;
  cfg.s_max = 5;
  cfg.s_k = 4;
  cfg.forced_in = {0, 6};
  const auto got = branch_and_bound(pr.y, pr.X, cfg);
  for (const auto& c : got.flatten()) {
    CHECK(std::find(c.subset.begin(), c.subset.end(), 0) != c.subset.end());
    CHECK(std::find(c.subset.begin(), c.subset.end(), 6) != c.subset.end());
    CHECK(c.subset.size() <= 5);
  }
}

TEST_CASE("search config validation") {
  const auto pr = random_problem(20, 4, 9);
  SearchConfig cfg;
  cfg.s_max = 5;
  CHECK_THROWS_AS(branch_and_bound(pr.y, pr.X, cfg), ValidationError);
  cfg.s_max = 3;
  cfg.s_k = 0;
  CHECK_THROWS_AS(branch_and_bound(pr.y, pr.X, cfg), ValidationError);
  CHECK(SearchConfig::defaults(50).s_max == 35);
  CHECK(SearchConfig::defaults(10).s_max == 10);
}

TEST_CASE("prescreen keeps forced columns and the strongest signals") {
  PosteriorDraws d;
  CounterRng rng(10, 0);
  const int T = 500;
  d.beta.resize(T, 5);
  for (int t = 0; t < T; ++t) {
    d.beta(t, 0) = rng.normal();
    d.beta(t, 1) = 0.1 * rng.normal();
    d.beta(t, 2) = 5 + rng.normal();
    d.beta(t, 3) = -3 + rng.normal();
    d.beta(t, 4) = 0.5 + rng.normal();
  }
  d.u = Eigen::MatrixXd::Zero(T, 1);
  d.sigma2_eps = Eigen::VectorXd::Ones(T);
  d.sigma2_u = Eigen::VectorXd::Ones(T);
  CHECK(prescreen(d, 3, {0}) == std::vector<int>{0, 2, 3});
}
