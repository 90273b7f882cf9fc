#include "doctest.h"

#include <cmath>

#include "lmmsubset/errors.hpp"
#include "lmmsubset/posterior.hpp"

using namespace lmmsubset;

namespace {

PosteriorDraws constant_draws(int T, const Eigen::VectorXd& beta, int n, double s2e, double s2u) {
  PosteriorDraws d;
  d.beta = beta.transpose().replicate(T, 1);
  d.u = Eigen::MatrixXd::Zero(T, n);
  for (int i = 0; i < n; ++i) d.u.col(i).setConstant(0.1 * (i + 1));
  d.sigma2_eps = Eigen::VectorXd::Constant(T, s2e);
  d.sigma2_u = Eigen::VectorXd::Constant(T, s2u);
  return d;
}

}  // namespace

TEST_CASE("zero variances give y~ = X beta exactly (new subjects)") {
  Eigen::VectorXd beta(2);
  beta << 1.0, -2.0;
  auto d = constant_draws(5, beta, 3, 0.0, 0.0);
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 0.5, 1, -1, 1, 2;
  const auto design = PredictionDesign::replicated(rows, {2, 1, 3}, PredictionMode::NewSubject);
  const auto out = predictive_draws(d, design, 1);
  const Eigen::VectorXd mean = design.X * beta;
  for (int t = 0; t < 5; ++t) CHECK((out.y_tilde.row(t).transpose() - mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Monte Carlo mean of y~ is X beta") {
  Eigen::VectorXd beta(2);
  beta << 0.5, 1.5;
  const int T = 50000;
  auto d = constant_draws(T, beta, 2, 1.0, 0.5);
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 1, 1, -2;
  const auto design = PredictionDesign::replicated(rows, {1, 1}, PredictionMode::NewSubject);
  const auto out = predictive_draws(d, design, 3);
  const Eigen::VectorXd mean = out.y_tilde.colwise().mean().transpose();
  const Eigen::VectorXd target = design.X * beta;
  const double se = std::sqrt(1.5 / T);
  for (int r = 0; r < 2; ++r) CHECK(std::abs(mean(r) - target(r)) < 3 * se);
}

TEST_CASE("existing-subject replicates share u within a draw") {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(1);
  auto d = constant_draws(4, beta, 2, 0.0, 1.0);
  d.u << 1, 2, 3, 4, 5, 6, 7, 8;
  Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(2, 1);
  const auto design = PredictionDesign::replicated(rows, {2, 2}, PredictionMode::ExistingSubject, {1, 0});
  const auto out = predictive_draws(d, design, 5);
  for (int t = 0; t < 4; ++t) {
    CHECK(out.y_tilde(t, 0) == d.u(t, 1));
    CHECK(out.y_tilde(t, 1) == d.u(t, 1));
    CHECK(out.y_tilde(t, 2) == d.u(t, 0));
    CHECK(out.y_tilde(t, 3) == d.u(t, 0));
  }
}

TEST_CASE("new-subject replicate correlation approaches the intraclass correlation") {
  const int T = 100000;
  auto d = constant_draws(T, Eigen::VectorXd::Zero(1), 1, 3.0, 1.0);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(1, 1);
  const auto design = PredictionDesign::replicated(rows, {2}, PredictionMode::NewSubject);
  const auto out = predictive_draws(d, design, 9);
  const Eigen::VectorXd a = out.y_tilde.col(0), b = out.y_tilde.col(1);
  const double ma = a.mean(), mb = b.mean();
  const double cov = ((a.array() - ma) * (b.array() - mb)).mean();
  const double corr = cov / std::sqrt((a.array() - ma).square().mean() * (b.array() - mb).square().mean());
  CHECK(std::abs(corr - 0.25) < 0.02);
}

TEST_CASE("predictive draws are identical across thread counts and reruns") {
  auto d = constant_draws(300, Eigen::VectorXd::Ones(2), 3, 1.0, 1.0);
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 0, 1, 1, 1, 2;
  const auto design = PredictionDesign::replicated(rows, {2, 2, 2}, PredictionMode::NewSubject);
  const auto a = predictive_draws(d, design, 17, 1);
  const auto b = predictive_draws(d, design, 17, 3);
  const auto c = predictive_draws(d, design, 17, 1);
  CHECK((a.y_tilde.array() == b.y_tilde.array()).all());
  CHECK((a.y_tilde.array() == c.y_tilde.array()).all());
}

TEST_CASE("design shape errors") {
  auto d = constant_draws(3, Eigen::VectorXd::Ones(2), 2, 1.0, 1.0);
  Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(2, 3);
  const auto design = PredictionDesign::replicated(rows, {1, 1}, PredictionMode::NewSubject);
  CHECK_THROWS_AS(predictive_draws(d, design, 1), ValidationError);
  CHECK_THROWS_AS(PredictionDesign::replicated(rows, {1}, PredictionMode::NewSubject), ValidationError);
}

TEST_CASE("thinning keeps every stride-th draw") {
  auto d = constant_draws(10, Eigen::VectorXd::Ones(1), 1, 1.0, 1.0);
  for (int t = 0; t < 10; ++t) d.sigma2_eps(t) = t + 1;
  const auto th = d.thinned(3);
  CHECK(th.draws() == 4);
  CHECK(th.sigma2_eps(1) == 4.0);
  CHECK(th.sigma2_eps(3) == 10.0);
}

TEST_CASE("model config validation") {
  ModelConfig c;
  c.sigma_u_upper = 0;
  CHECK_THROWS_AS(c.validate(3), ValidationError);
  ModelConfig small;
  small.n_save = 500;
  CHECK_FALSE(small.validate(3).empty());
  ModelConfig g;
  g.prior = PriorKind::Gaussian;
  g.prior_cov = Eigen::MatrixXd::Identity(2, 2);
  const auto back = ModelConfig::from_json(g.to_json());
  CHECK(back.prior == PriorKind::Gaussian);
  CHECK(back.prior_cov.isApprox(g.prior_cov));
}
