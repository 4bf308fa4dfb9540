#include "odb/debias_offline.hpp"
#include "odb/simgen.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace odb;

namespace {

RegressionProblem gaussian_problem(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed);
  RegressionProblem prob;
  prob.X = rng.normal_matrix(n, p);
  Vector theta0 = Vector::Zero(p);
  theta0(0) = 1.0;
  theta0(p - 1) = -2.0;
  prob.y = prob.X * theta0 + 0.5 * rng.normal_vector(n);
  prob.theta0 = theta0;
  prob.sigma = 0.5;
  return prob;
}

}  // namespace

TEST(DebiasOffline, InverseCovarianceGivesLeastSquares) {
  const auto prob = gaussian_problem(50, 5, 1);
  const Matrix S = prob.X.transpose() * prob.X / 50.0;
  const Vector ols = (prob.X.transpose() * prob.X).ldlt().solve(prob.X.transpose() * prob.y);
  const auto est = offline_debias(Vector::Constant(5, 0.3), prob, S.inverse(), 0.5);
  EXPECT_LT((est.theta - ols).cwiseAbs().maxCoeff(), 1e-10);
  // sigma^2/n * ||X m_a||^2 = sigma^2 (S^{-1})_aa
  EXPECT_LT((est.variance - 0.25 * S.inverse().diagonal()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DebiasOffline, DecompositionAndBias) {
  const auto prob = gaussian_problem(30, 6, 2);
  const Matrix M = Matrix::Identity(6, 6) * 0.8;
  const Vector theta_l = Vector::Constant(6, 0.1);
  const auto est = offline_debias(theta_l, prob, M, 0.5, Method::offline, true);
  const Matrix B = std::sqrt(30.0) * (Matrix::Identity(6, 6) - M * prob.X.transpose() * prob.X / 30.0);
  const Vector lhs = std::sqrt(30.0) * (est.theta - *prob.theta0);
  EXPECT_LT((lhs - (B * (theta_l - *prob.theta0) + *est.noise)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(*est.bias_matrix_norm, B.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DebiasOffline, ZeroResidualReturnsLasso) {
  auto prob = gaussian_problem(20, 4, 3);
  const Vector theta = Vector::LinSpaced(4, 0.0, 1.0);
  prob.y = prob.X * theta;
  EXPECT_EQ(offline_debias(theta, prob, Matrix::Identity(4, 4), 1.0).theta, theta);
}

TEST(DebiasOffline, MuScaling) {
  EXPECT_NEAR(offline_mu(100, 50, 1.0), 2.0 * std::sqrt(std::log(50.0) / 100.0), 1e-15);
  EXPECT_NEAR(offline_mu(400, 50, 0.5), std::sqrt(std::log(50.0) / 400.0), 1e-15);
  EXPECT_THROW(offline_mu(10, 5, 0.0), DomainError);
}

TEST(DebiasOffline, SmallMuRecoversInverse) {
  const auto prob = gaussian_problem(60, 4, 4);
  const Matrix S = prob.X.transpose() * prob.X / 60.0;
  DecorrelatorConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iter = 200'000;
  const auto M = build_offline_M(S, 1e-10, cfg);
  EXPECT_LT((M.M - S.inverse()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DebiasOffline, RidgeWeightsMatchRecursion) {
  const auto prob = gaussian_problem(12, 3, 5);
  const Matrix W = ridge_online_weights(prob.X, 0.7);
  // R_i = I - sum_{j <= i} w_j x_j' so w_i = (I - sum_{j<i} w_j x_j') x_i / (|x_i|^2 + lambda).
  for (Index i = 0; i < 12; ++i) {
    Matrix R = Matrix::Identity(3, 3);
    for (Index j = 0; j < i; ++j) R -= W.col(j) * prob.X.row(j);
    const Vector x = prob.X.row(i).transpose();
    EXPECT_LT((W.col(i) - R * x / (x.squaredNorm() + 0.7)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DebiasOffline, RidgeOrthogonalDesign) {
  RegressionProblem prob;
  prob.X = 2.0 * Matrix::Identity(3, 3);
  prob.y = Vector::Ones(3);
  const Matrix W = ridge_online_weights(prob.X, 1.0);
  EXPECT_LT((W - 0.4 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
  const auto est = ridge_online_baseline(Vector::Zero(3), prob, 1.0, 1.0);
  EXPECT_LT((est.theta - Vector::Constant(3, 0.4)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((est.variance - Vector::Constant(3, 3.0 * 0.16)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(est.method, Method::ridge_online);
}

TEST(DebiasOffline, RidgeDecomposition) {
  const auto prob = gaussian_problem(25, 4, 6);
  const Vector theta_l = Vector::Constant(4, -0.2);
  const auto est = ridge_online_baseline(theta_l, prob, 0.5, 0.5);
  const Matrix W = ridge_online_weights(prob.X, 0.5);
  const double rn = std::sqrt(25.0);
  const Vector lhs = rn * (est.theta - *prob.theta0);
  const Vector rhs = rn * (Matrix::Identity(4, 4) - W * prob.X) * (theta_l - *prob.theta0) + *est.noise;
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DebiasOffline, Errors) {
  const auto prob = gaussian_problem(10, 3, 7);
  EXPECT_THROW(offline_debias(Vector::Zero(2), prob, Matrix::Identity(3, 3), 1.0), DimensionError);
  EXPECT_THROW(offline_debias(Vector::Zero(3), prob, Matrix::Identity(2, 2), 1.0), DimensionError);
  EXPECT_THROW(ridge_online_weights(prob.X, 0.0), DomainError);
}
