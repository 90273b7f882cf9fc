#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lmmsubset/decision.hpp"
#include "lmmsubset/errors.hpp"
#include "lmmsubset/rng.hpp"
#include "lmmsubset/weights.hpp"

using namespace lmmsubset;

namespace {

struct Fixture {
  PosteriorDraws draws;
  PredictionDesign design;
};

// Random design and draws with per-draw variances and arbitrary y~.
Fixture make_fixture(const std::vector<int>& sizes, int p, int T, std::uint64_t seed,
                     bool constant_variances = false) {
  CounterRng rng(seed, 0);
  int N = 0;
  for (int m : sizes) N += m;
  Eigen::MatrixXd X(N, p);
  X.col(0).setOnes();
  for (int r = 0; r < N; ++r)
    for (int c = 1; c < p; ++c) X(r, c) = rng.normal();
  Fixture f;
  f.design = PredictionDesign::grouped(X, sizes, PredictionMode::NewSubject);
  f.draws.beta = Eigen::MatrixXd::Zero(T, p);
  f.draws.u = Eigen::MatrixXd::Zero(T, static_cast<int>(sizes.size()));
  f.draws.sigma2_eps.resize(T);
  f.draws.sigma2_u.resize(T);
  f.draws.y_tilde.resize(T, N);
  Eigen::VectorXd beta(p);
  for (int c = 0; c < p; ++c) beta(c) = rng.normal();
  for (int t = 0; t < T; ++t) {
    f.draws.sigma2_eps(t) = constant_variances ? 1.0 : 0.5 + rng.uniform();
    f.draws.sigma2_u(t) = constant_variances ? 0.7 : 0.2 + rng.uniform();
    for (int r = 0; r < N; ++r) f.draws.y_tilde(t, r) = X.row(r).dot(beta) + rng.normal();
  }
  return f;
}

Eigen::MatrixXd dense_omega(const PredictionDesign& d, double s2e, double s2u) {
  const int N = d.rows();
  Eigen::MatrixXd V = s2e * Eigen::MatrixXd::Identity(N, N);
  for (int i = 0; i < d.subjects(); ++i)
    V.block(d.offsets[i], d.offsets[i], d.group_sizes[i], d.group_sizes[i]).array() += s2u;
  return V.inverse();
}

// (1/T) sum_t ||y~_t - X delta||^2 under the dense Omega_t.
double expected_loss(const Fixture& f, const Eigen::VectorXd& delta) {
  double acc = 0;
  const int T = f.draws.draws();
  for (int t = 0; t < T; ++t) {
    const Eigen::MatrixXd W = dense_omega(f.design, f.draws.sigma2_eps(t), f.draws.sigma2_u(t));
    const Eigen::VectorXd e = f.draws.y_tilde.row(t).transpose() - f.design.X * delta;
    acc += e.dot(W * e);
  }
  return acc / T;
}

Eigen::VectorXd embed(const std::vector<int>& subset, const Eigen::VectorXd& v, int p) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  for (std::size_t k = 0; k < subset.size(); ++k) out(subset[k]) = v(static_cast<Eigen::Index>(k));
  return out;
}

// Plain Nelder-Mead.
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                            int iters) {
  const auto n = x0.size();
  std::vector<Eigen::VectorXd> s(n + 1, x0);
  for (Eigen::Index i = 0; i < n; ++i) s[i + 1](i) += 0.5;
  std::vector<double> fv(n + 1);
  for (Eigen::Index i = 0; i <= n; ++i) fv[i] = f(s[i]);
  for (int it = 0; it < iters; ++it) {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> s2;
    std::vector<double> f2;
    for (int i : idx) {
      s2.push_back(s[i]);
      f2.push_back(fv[i]);
    }
    s = s2;
    fv = f2;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) c += s[i];
    c /= static_cast<double>(n);
    const Eigen::VectorXd xr = c + (c - s[n]);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const Eigen::VectorXd xe = c + 2 * (c - s[n]);
      const double fe = f(xe);
      if (fe < fr) { s[n] = xe; fv[n] = fe; } else { s[n] = xr; fv[n] = fr; }
    } else if (fr < fv[n - 1]) {
      s[n] = xr;
      fv[n] = fr;
    } else {
      const Eigen::VectorXd xc = c + 0.5 * (s[n] - c);
      const double fc = f(xc);
      if (fc < fv[n]) {
        s[n] = xc;
        fv[n] = fc;
      } else {
        for (Eigen::Index i = 1; i <= n; ++i) {
          s[i] = s[0] + 0.5 * (s[i] - s[0]);
          fv[i] = f(s[i]);
        }
      }
    }
  }
  return s[std::min_element(fv.begin(), fv.end()) - fv.begin()];
}

std::vector<int> bits_to_subset(int mask, int p) {
  std::vector<int> s;
  for (int j = 0; j < p; ++j)
    if (mask & (1 << j)) s.push_back(j);
  return s;
}

}  // namespace

// ----------------------------------------------------------------------------
// Weights
// ----------------------------------------------------------------------------

TEST_CASE("random intercept weight block: worked example and dense inverse") {
  const Eigen::MatrixXd W = weight_block_random_intercept(1.0, 1.0, 2);
  CHECK(W(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(W(0, 1) == doctest::Approx(-1.0 / 3.0));
  for (int m : {1, 3, 7})
    for (double s2u : {0.01, 1.0, 50.0}) {
      const double s2e = 0.8;
      Eigen::MatrixXd V = s2e * Eigen::MatrixXd::Identity(m, m);
      V.array() += s2u;
      CHECK((weight_block_random_intercept(s2e, s2u, m) - V.inverse()).norm() < 1e-10 * V.inverse().norm());
    }
  CHECK(shared_weight_coefficient(2.0, 0.0, 3) == 0.0);
  CHECK(std::isfinite(shared_weight_coefficient(2.0, 1e-300, 3)));
}

TEST_CASE("random slope weight") {
  Eigen::VectorXd x(2);
  x << 1, 1;
  CHECK(weight_random_slope(1.0, Eigen::MatrixXd::Identity(2, 2), x) == doctest::Approx(1.0 / 3.0));
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(weight_random_slope(1.0, bad, x), ValidationError);
}

TEST_CASE("grouped Mahalanobis loss equals dense quadratic form") {
  const std::vector<int> sizes{1, 3, 2};
  CounterRng rng(3, 0);
  Eigen::VectorXd e(6);
  for (int r = 0; r < 6; ++r) e(r) = rng.normal();
  const auto design = PredictionDesign::grouped(Eigen::MatrixXd::Ones(6, 1), sizes, PredictionMode::NewSubject);
  const Eigen::MatrixXd W = dense_omega(design, 0.6, 1.4);
  CHECK(mahalanobis_loss_random_intercept(e, sizes, 0.6, 1.4) == doctest::Approx(e.dot(W * e)).epsilon(1e-12));
}

TEST_CASE("summarized weights equal dense averages over draws") {
  const auto f = make_fixture({2, 1, 3}, 3, 25, 4);
  const auto ws = summarize_weights(f.draws, f.design);
  const int N = f.design.rows();
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd yw = Eigen::VectorXd::Zero(N);
  for (int t = 0; t < 25; ++t) {
    const Eigen::MatrixXd W = dense_omega(f.design, f.draws.sigma2_eps(t), f.draws.sigma2_u(t));
    omega += W / 25;
    yw += W * f.draws.y_tilde.row(t).transpose() / 25;
  }
  CHECK((ws.omega_hat.dense() - omega).norm() < 1e-12 * omega.norm());
  CHECK((ws.y_omega_hat - yw).norm() < 1e-12 * yw.norm());
  const Eigen::MatrixXd L = ws.omega_chol.dense();
  CHECK((L * L.transpose() - omega).norm() < 1e-12 * omega.norm());
  CHECK((L.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()).norm() == 0.0);
}

TEST_CASE("random slope summary with one draw reduces to that draw") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 2;
  Eigen::MatrixXd yt(1, 3);
  yt << 1, 2, 3;
  const auto ws = summarize_random_slope_weights(Eigen::VectorXd::Constant(1, 1.0),
                                                 {Eigen::MatrixXd::Identity(2, 2)}, X, yt);
  for (int i = 0; i < 3; ++i) {
    const double w = 1.0 / (1.0 + X.row(i).squaredNorm());
    CHECK(ws.omega_hat.dense()(i, i) == doctest::Approx(w));
    CHECK(ws.y_omega_hat(i) == doctest::Approx(w * yt(0, i)));
  }
}

// ----------------------------------------------------------------------------
// Optimal coefficients
// ----------------------------------------------------------------------------

TEST_CASE("optimal coefficients minimize the dense expected loss for every subset") {
  const int p = 8;
  const auto f = make_fixture({3, 2, 4, 1, 3, 2, 3, 2}, p, 30, 5);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const double base = expected_loss(f, Eigen::VectorXd::Zero(p)) - problem.optimal({}).expected_loss;
  CounterRng rng(6, 0);
  for (int mask = 1; mask < (1 << p); ++mask) {
    const auto subset = bits_to_subset(mask, p);
    const auto opt = problem.optimal(subset);
    const double l0 = expected_loss(f, opt.delta_hat);
    REQUIRE(opt.expected_loss + base == doctest::Approx(l0).epsilon(1e-9));
    // Any perturbation within the subset increases the loss.
    Eigen::VectorXd dir(subset.size());
    for (auto& v : dir) v = rng.normal();
    const Eigen::VectorXd pert = opt.delta_hat + 1e-3 * embed(subset, dir, p);
    REQUIRE(expected_loss(f, pert) > l0);
  }
}

TEST_CASE("Nelder-Mead on the dense loss agrees with the closed form") {
  const int p = 3;
  const auto f = make_fixture({2, 2, 3, 1, 2}, p, 20, 7);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const std::vector<int> subset{0, 2};
  const auto opt = problem.optimal(subset);
  auto obj = [&](const Eigen::VectorXd& v) { return expected_loss(f, embed(subset, v, p)); };
  const Eigen::VectorXd nm = nelder_mead(obj, Eigen::VectorXd::Zero(2), 400);
  CHECK(std::abs(nm(0) - opt.delta_hat(0)) < 1e-4);
  CHECK(std::abs(nm(1) - opt.delta_hat(2)) < 1e-4);
  CHECK(opt.delta_hat(1) == 0.0);
}

TEST_CASE("pseudo-data reproduce the weighted normal equations") {
  const auto f = make_fixture({2, 3, 1, 2}, 4, 10, 8);
  const auto ws = summarize_weights(f.draws, f.design);
  const auto pd = pseudo_data(ws, f.design.X);
  const Eigen::MatrixXd omega = ws.omega_hat.dense();
  CHECK((pd.X_star.transpose() * pd.X_star - f.design.X.transpose() * omega * f.design.X).norm() < 1e-10);
  CHECK((pd.X_star.transpose() * pd.y_star - f.design.X.transpose() * ws.y_omega_hat).norm() < 1e-10);
}

TEST_CASE("a single draw gives ordinary GLS on that draw") {
  const auto f = make_fixture({2, 3, 2, 2}, 3, 1, 9);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const Eigen::MatrixXd W = dense_omega(f.design, f.draws.sigma2_eps(0), f.draws.sigma2_u(0));
  const Eigen::MatrixXd& X = f.design.X;
  const Eigen::VectorXd gls = (X.transpose() * W * X).ldlt().solve(X.transpose() * W * f.draws.y_tilde.row(0).transpose());
  CHECK((problem.optimal({0, 1, 2}).delta_hat - gls).norm() < 1e-10 * gls.norm());
}

TEST_CASE("noise-free predictive draws are interpolated exactly") {
  auto f = make_fixture({2, 2, 2, 3}, 3, 12, 10);
  Eigen::VectorXd beta(3);
  beta << 0.5, -1.0, 2.0;
  for (int t = 0; t < 12; ++t) f.draws.y_tilde.row(t) = (f.design.X * beta).transpose();
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const auto opt = problem.optimal({0, 1, 2});
  CHECK((opt.delta_hat - beta).norm() < 1e-10);
  CHECK(opt.expected_loss < 1e-18 * problem.pseudo().y_star.squaredNorm() + 1e-20);
}

TEST_CASE("empty subset gives zero coefficients; bad subsets throw") {
  const auto f = make_fixture({2, 2}, 3, 5, 11);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const auto e = problem.optimal({});
  CHECK(e.delta_hat.isZero());
  CHECK(e.expected_loss == doctest::Approx(problem.pseudo().y_star.squaredNorm()));
  CHECK_THROWS_AS(problem.optimal({3}), ValidationError);
  CHECK_THROWS_AS(problem.optimal({1, 0}), ValidationError);
}

TEST_CASE("expected loss is non-increasing along nested subsets") {
  const auto f = make_fixture({3, 3, 2, 2, 3}, 6, 15, 12);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  std::vector<int> s;
  double prev = problem.optimal(s).expected_loss;
  for (int j = 0; j < 6; ++j) {
    s.push_back(j);
    const double cur = problem.optimal(s).expected_loss;
    CHECK(cur <= prev * (1 + 1e-12));
    prev = cur;
  }
}

// ----------------------------------------------------------------------------
// Projected draws
// ----------------------------------------------------------------------------

TEST_CASE("projection is linear and averages to delta_hat when weights are constant") {
  const auto f = make_fixture({2, 3, 2, 3}, 4, 40, 13, true);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const std::vector<int> s{0, 1, 3};
  const Eigen::MatrixXd proj = problem.project(s, f.draws.y_tilde);
  const Eigen::VectorXd mean = proj.colwise().mean().transpose();
  CHECK((mean - problem.optimal(s).delta_hat).norm() < 1e-10);
  CHECK(proj.col(2).isZero());

  const Eigen::MatrixXd a = f.draws.y_tilde.topRows(5), b = f.draws.y_tilde.bottomRows(5);
  const Eigen::MatrixXd lhs = problem.project(s, 2.0 * a + b);
  const Eigen::MatrixXd rhs = 2.0 * problem.project(s, a) + problem.project(s, b);
  CHECK((lhs - rhs).norm() < 1e-10 * rhs.norm());
}

TEST_CASE("projected intervals are central quantiles") {
  const auto f = make_fixture({3, 3, 3, 3, 3}, 2, 1001, 14);
  const DecisionProblem problem(summarize_weights(f.draws, f.design), f.design.X);
  const auto coef = problem.optimal({0, 1});
  const auto iv = projected_intervals(coef, problem.project({0, 1}, f.draws.y_tilde), 0.9);
  const Eigen::MatrixXd proj = problem.project({0, 1}, f.draws.y_tilde);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> v(proj.rows());
    for (Eigen::Index t = 0; t < proj.rows(); ++t) v[t] = proj(t, j);
    std::sort(v.begin(), v.end());
    CHECK(iv.lower(j) == doctest::Approx(v[50]));
    CHECK(iv.upper(j) == doctest::Approx(v[950]));
    CHECK(iv.lower(j) <= iv.estimate(j));
    CHECK(iv.estimate(j) <= iv.upper(j));
  }
}

TEST_CASE("normal equations fall back to the minimum-norm solution") {
  Eigen::MatrixXd A(2, 2);
  A << 1, 1, 1, 1;
  Eigen::VectorXd b(2);
  b << 2, 2;
  const Eigen::VectorXd x = solve_normal_equations(A, b);
  CHECK(x(0) == doctest::Approx(1.0));
  CHECK(x(1) == doctest::Approx(1.0));
}
