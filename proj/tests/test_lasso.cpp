#include "odb/lasso.hpp"
#include "odb/simgen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace odb;

namespace {

RegressionProblem random_problem(Index n, Index p, std::uint64_t seed, double sigma = 0.5) {
  Rng rng(seed);
  RegressionProblem prob;
  prob.X = rng.normal_matrix(n, p);
  Vector theta = Vector::Zero(p);
  for (Index j = 0; j < std::min<Index>(3, p); ++j) theta(j) = 1.0 - 0.4 * static_cast<double>(j);
  prob.y = prob.X * theta + sigma * rng.normal_vector(n);
  prob.theta0 = theta;
  return prob;
}

}  // namespace

TEST(Lasso, OrthonormalDesignIsSoftThreshold) {
  // X'X/n = I and X'y/n = (1, -0.2): solution is soft-thresholding at 0.3.
  Matrix X = Matrix::Zero(4, 2);
  X(0, 0) = 2;
  X(1, 1) = 2;
  Vector y(4);
  y << 2, -0.4, 0.0, 0.0;
  LassoConfig cfg;
  cfg.lambda = 0.3;
  const auto fit = fit_lasso(X, y, cfg);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.theta(0), 0.7, 1e-12);
  EXPECT_EQ(fit.theta(1), 0.0);
}

TEST(Lasso, LargePenaltyGivesZero) {
  auto prob = random_problem(30, 10, 1);
  const double lmax = (prob.X.transpose() * prob.y / 30.0).cwiseAbs().maxCoeff();
  LassoConfig cfg;
  cfg.lambda = lmax;
  EXPECT_TRUE(fit_lasso(prob, cfg).theta.isZero(0.0));
}

TEST(Lasso, SmallPenaltyApproachesLeastSquares) {
  auto prob = random_problem(80, 5, 2, 0.0);
  LassoConfig cfg;
  cfg.lambda = 1e-10;
  cfg.tol = 1e-12;
  const Vector ols = prob.X.colPivHouseholderQr().solve(prob.y);
  const auto fit = fit_lasso(prob, cfg);
  EXPECT_LT((fit.theta - ols).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT((fit.theta - *prob.theta0).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Lasso, KktCertificateBothModes) {
  for (auto [n, p] : {std::pair<Index, Index>{60, 20}, std::pair<Index, Index>{25, 60}}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto prob = random_problem(n, p, 100 + seed);
      LassoConfig cfg;
      cfg.lambda = default_lambda(static_cast<double>(n), static_cast<double>(p), 0.5, 1.0);
      const auto fit = fit_lasso(prob, cfg);
      ASSERT_TRUE(fit.converged);
      EXPECT_LE(lasso_kkt_violation(prob.X, prob.y, fit.theta, cfg.lambda), 10 * cfg.tol * prob.X.colwise().squaredNorm().maxCoeff() / n + 1e-9);
    }
  }
}

TEST(Lasso, GramAndResidualModesAgree) {
  // Same problem solved with n > p (Gram) and with duplicated zero columns
  // pushing p above n (residual updates) must agree on shared coordinates.
  auto prob = random_problem(20, 8, 7);
  Matrix wide = Matrix::Zero(20, 30);
  wide.leftCols(8) = prob.X;
  LassoConfig cfg;
  cfg.lambda = 0.1;
  cfg.tol = 1e-12;
  const auto a = fit_lasso(prob.X, prob.y, cfg);
  const auto b = fit_lasso(wide, prob.y, cfg);
  EXPECT_LT((a.theta - b.theta.head(8)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(b.theta.tail(22).isZero(0.0));
}

TEST(Lasso, ObjectiveNonIncreasing) {
  for (auto [n, p] : {std::pair<Index, Index>{50, 15}, std::pair<Index, Index>{15, 50}}) {
    auto prob = random_problem(n, p, 9);
    LassoConfig cfg;
    cfg.lambda = 0.05;
    cfg.trace = true;
    const auto fit = fit_lasso(prob, cfg);
    ASSERT_GE(fit.objective_trace.size(), 2u);
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k)
      EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] + 1e-14);
  }
}

TEST(Lasso, NonConvergenceIsFlagged) {
  auto prob = random_problem(40, 30, 4);
  LassoConfig cfg;
  cfg.lambda = 1e-4;
  cfg.max_iter = 1;
  const auto fit = fit_lasso(prob, cfg);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.sweeps, 1);
}

TEST(Lasso, DefaultLambda) {
  EXPECT_NEAR(default_lambda(400, std::exp(4.0), 2.0, 1.0), 0.2, 1e-12);
  EXPECT_NEAR(default_lambda(std::log(1000.0), 1000.0, 1.0, 1.0), 1.0, 1e-12);
  EXPECT_THROW(default_lambda(1, 10, 1, 1), DomainError);
}

TEST(Lasso, EstimateSigma) {
  RegressionProblem prob;
  prob.X = Matrix::Identity(2, 2);
  prob.y = Vector(2);
  prob.y << 3, 4;
  EXPECT_NEAR(estimate_sigma(prob, Vector::Zero(2)), std::sqrt(12.5), 1e-14);

  RegressionProblem exact;
  exact.X = Matrix::Ones(3, 1);
  exact.y = Vector::Constant(3, 2.0);
  EXPECT_EQ(estimate_sigma(exact, Vector::Constant(1, 2.0)), 0.0);
}

TEST(Lasso, EstimateSigmaDegreesOfFreedom) {
  RegressionProblem prob;
  prob.X = Matrix::Identity(2, 2);
  prob.y = Vector::Ones(2);
  EXPECT_THROW(estimate_sigma(prob, Vector::Ones(2)), DegreesOfFreedomError);
}

TEST(Lasso, EstimateSigmaMonteCarlo) {
  int close = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto prob = random_problem(500, 20, 300 + seed, 1.0);
    if (std::abs(estimate_sigma(prob, *prob.theta0) - 1.0) < 0.1) ++close;
  }
  EXPECT_GE(close, 19);
}
