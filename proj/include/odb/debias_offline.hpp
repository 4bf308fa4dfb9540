#pragma once

// Offline baselines: classical debiasing with a fixed M, sparse-precision
// decorrelators, and the ridge-type online recursion.

#include "odb/core.hpp"
#include "odb/decorrelator.hpp"
#include "odb/estimate.hpp"
#include "odb/model.hpp"

#include <cmath>

namespace odb {

/// theta_L + (1/n) M X'(y - X theta_L) with V_a = sigma^2 (M S M')_aa.
inline DebiasedEstimate offline_debias(const Vector& theta_lasso, const RegressionProblem& problem, const Matrix& M,
                                       double sigma, Method method = Method::offline, bool with_bias = false) {
  problem.validate();
  const Index p0 = problem.p0();
  require_dims(M.rows() == p0 && M.cols() == p0, "offline_debias: M must be p0 x p0");
  require_dims(theta_lasso.size() == p0, "offline_debias: theta has wrong length");
  require(sigma > 0.0, "offline_debias: sigma must be positive");
  const auto nd = static_cast<double>(problem.n());
  const Vector resid = problem.y - problem.X * theta_lasso;

  DebiasedEstimate est;
  est.method = method;
  est.n = problem.n();
  est.sigma = sigma;
  est.theta = resid.isZero(0.0) ? theta_lasso : Vector(theta_lasso + M * (problem.X.transpose() * resid) / nd);
  est.variance = (problem.X * M.transpose()).colwise().squaredNorm().transpose() * (sigma * sigma / nd);
  if (problem.theta0) est.noise = M * (problem.X.transpose() * problem.noise()) / std::sqrt(nd);
  if (with_bias) {
    const Matrix applied = M * (problem.X.transpose() * problem.X);
    est.bias_matrix_norm = max_abs(std::sqrt(nd) * (Matrix::Identity(p0, p0) - applied / nd));
  }
  return est;
}

/// 2 tau sqrt(log(p0) / n)
inline double offline_mu(Index n, Index p0, double tau) {
  require(n >= 1 && tau > 0.0, "offline_mu: need n >= 1 and tau > 0");
  return 2.0 * tau * std::sqrt(std::log(std::max<double>(static_cast<double>(p0), 2.0)) / static_cast<double>(n));
}

/// Rows of the Lagrangian program with no l1 budget.
inline DecorrelatorMatrix build_offline_M(const Matrix& S, double mu, DecorrelatorConfig config = {}, int threads = 1,
                                          const std::vector<Index>& only = {}) {
  require(mu > 0.0, "build_offline_M: mu must be positive");
  config.mu = mu;
  config.L = unbounded;
  return solve_decorrelator(S, config, nullptr, threads, only);
}

/// Ridge-type online recursion: w_i = R_{i-1} x_i / (||x_i||^2 + lambda),
/// R_i = R_{i-1} - w_i x_i', R_0 = I. Returns the p0 x n matrix W whose
/// column i is w_i. Row a of W only involves row a of R, so a nonempty
/// `only` computes those rows and leaves the rest 0.
inline Matrix ridge_online_weights(const Matrix& X, double lambda, const std::vector<Index>& only = {}) {
  require(lambda > 0.0, "ridge_online_weights: lambda must be positive");
  const Index n = X.rows();
  const Index p0 = X.cols();
  Matrix W = Matrix::Zero(p0, n);
  if (only.empty()) {
    Matrix R = Matrix::Identity(p0, p0);
    for (Index i = 0; i < n; ++i) {
      const Vector x = X.row(i).transpose();
      const Vector w = R * x / (x.squaredNorm() + lambda);
      R.noalias() -= w * x.transpose();
      W.col(i) = w;
    }
    return W;
  }
  for (Index a : only) require_dims(a >= 0 && a < p0, "ridge_online_weights: row index out of range");
  Matrix R = Matrix::Zero(static_cast<Index>(only.size()), p0);
  for (std::size_t k = 0; k < only.size(); ++k) R(static_cast<Index>(k), only[k]) = 1.0;
  for (Index i = 0; i < n; ++i) {
    const Vector x = X.row(i).transpose();
    const Vector w = R * x / (x.squaredNorm() + lambda);
    R.noalias() -= w * x.transpose();
    for (std::size_t k = 0; k < only.size(); ++k) W(only[k], i) = w(static_cast<Index>(k));
  }
  return W;
}

/// theta_L + W (y - X theta_L); V_a = n sigma^2 sum_i w_{i,a}^2.
inline DebiasedEstimate ridge_online_baseline(const Vector& theta_lasso, const RegressionProblem& problem,
                                              double lambda, double sigma, const std::vector<Index>& only = {}) {
  problem.validate();
  require_dims(theta_lasso.size() == problem.p0(), "ridge_online_baseline: theta has wrong length");
  require(sigma > 0.0, "ridge_online_baseline: sigma must be positive");
  const Matrix W = ridge_online_weights(problem.X, lambda, only);
  const auto nd = static_cast<double>(problem.n());
  const Vector resid = problem.y - problem.X * theta_lasso;

  DebiasedEstimate est;
  est.method = Method::ridge_online;
  est.n = problem.n();
  est.sigma = sigma;
  est.theta = resid.isZero(0.0) ? theta_lasso : Vector(theta_lasso + W * resid);
  est.variance = W.rowwise().squaredNorm() * (nd * sigma * sigma);
  if (problem.theta0) est.noise = W * problem.noise() * std::sqrt(nd);
  return est;
}

}  // namespace odb
