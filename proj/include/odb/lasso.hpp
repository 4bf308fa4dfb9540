#pragma once

// Cyclic coordinate-descent LASSO:
//   minimize (1/2n) ||y - X theta||^2 + lambda ||theta||_1

#include "odb/core.hpp"
#include "odb/model.hpp"

#include <cmath>
#include <vector>

namespace odb {

struct LassoConfig {
  double lambda = 0.1;
  double tol = 1e-8;
  int max_iter = 10'000;
  /// Multiplier used when lambda is chosen by default_lambda().
  double lambda0 = 1.0;
  /// Record the objective after every sweep.
  bool trace = false;
};

struct LassoFit {
  Vector theta;
  bool converged = false;
  int sweeps = 0;
  std::vector<double> objective_trace;
};

inline double lasso_objective(const Matrix& X, const Vector& y, const Vector& theta, double lambda) {
  const auto n = static_cast<double>(X.rows());
  return (y - X * theta).squaredNorm() / (2.0 * n) + lambda * theta.lpNorm<1>();
}

/// Largest violation of the LASSO subgradient conditions.
inline double lasso_kkt_violation(const Matrix& X, const Vector& y, const Vector& theta, double lambda) {
  const auto n = static_cast<double>(X.rows());
  const Vector corr = X.transpose() * (y - X * theta) / n;
  double worst = 0.0;
  for (Index j = 0; j < theta.size(); ++j) {
    const double v = theta(j) != 0.0 ? std::abs(corr(j) - lambda * (theta(j) > 0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(corr(j)) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

/// lambda0 * sigma * sqrt(log(p0) / n).
inline double default_lambda(double n, double p0, double sigma, double lambda0) {
  require(n >= 2 && p0 >= 2, "default_lambda: need n >= 2 and p0 >= 2");
  require(sigma > 0 && lambda0 > 0, "default_lambda: sigma and lambda0 must be positive");
  return lambda0 * sigma * std::sqrt(std::log(p0) / n);
}

/// Coordinate descent. Uses the p0 x p0 Gram matrix when n > p0 and
/// residual updates otherwise. `init`, when given, warm-starts the sweep.
inline LassoFit fit_lasso(const Matrix& X, const Vector& y, const LassoConfig& config,
                          const Vector* init = nullptr) {
  require_dims(X.rows() == y.size(), "fit_lasso: X rows must equal length of y");
  require(config.lambda > 0.0, "fit_lasso: lambda must be positive");
  require(config.tol > 0.0 && config.max_iter >= 1, "fit_lasso: invalid tolerance or iteration cap");
  const Index n = X.rows();
  const Index p = X.cols();
  const auto nd = static_cast<double>(n);
  const double lambda = config.lambda;

  LassoFit fit;
  fit.theta = init ? *init : Vector::Zero(p);
  require_dims(fit.theta.size() == p, "fit_lasso: warm start has wrong length");

  const Vector col_sq = X.colwise().squaredNorm().transpose() / nd;
  const bool gram_mode = n > p;

  auto record = [&] {
    if (config.trace) fit.objective_trace.push_back(lasso_objective(X, y, fit.theta, lambda));
  };
  record();

  if (gram_mode) {
    const Matrix gram = X.transpose() * X / nd;
    const Vector xty = X.transpose() * y / nd;
    Vector g = gram * fit.theta;  // gram * theta, kept in sync
    for (fit.sweeps = 1; fit.sweeps <= config.max_iter; ++fit.sweeps) {
      double max_change = 0.0;
      for (Index j = 0; j < p; ++j) {
        if (col_sq(j) <= 0.0) {
          if (fit.theta(j) != 0.0) {
            g -= gram.col(j) * fit.theta(j);
            fit.theta(j) = 0.0;
          }
          continue;
        }
        const double old = fit.theta(j);
        const double z = xty(j) - g(j) + col_sq(j) * old;
        const double updated = soft_threshold(z, lambda) / col_sq(j);
        if (updated != old) {
          g += gram.col(j) * (updated - old);
          fit.theta(j) = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      record();
      if (max_change < config.tol) {
        fit.converged = true;
        break;
      }
    }
  } else {
    Vector resid = y - X * fit.theta;
    for (fit.sweeps = 1; fit.sweeps <= config.max_iter; ++fit.sweeps) {
      double max_change = 0.0;
      for (Index j = 0; j < p; ++j) {
        if (col_sq(j) <= 0.0) {
          if (fit.theta(j) != 0.0) {
            resid += X.col(j) * fit.theta(j);
            fit.theta(j) = 0.0;
          }
          continue;
        }
        const double old = fit.theta(j);
        const double z = X.col(j).dot(resid) / nd + col_sq(j) * old;
        const double updated = soft_threshold(z, lambda) / col_sq(j);
        if (updated != old) {
          resid -= X.col(j) * (updated - old);
          fit.theta(j) = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      record();
      if (max_change < config.tol) {
        fit.converged = true;
        break;
      }
    }
  }
  fit.sweeps = std::min(fit.sweeps, config.max_iter);
  return fit;
}

inline LassoFit fit_lasso(const RegressionProblem& problem, const LassoConfig& config) {
  problem.validate();
  return fit_lasso(problem.X, problem.y, config);
}

/// Plug-in noise level sqrt(||y - X theta||^2 / (n - ||theta||_0)).
inline double estimate_sigma(const RegressionProblem& problem, const Vector& theta) {
  problem.validate();
  require_dims(theta.size() == problem.p0(), "estimate_sigma: theta has wrong length");
  const Index support = (theta.array() != 0.0).count();
  if (problem.n() <= support)
    throw DegreesOfFreedomError("estimate_sigma: need more samples than nonzero coefficients");
  const double rss = (problem.y - problem.X * theta).squaredNorm();
  return std::sqrt(rss / static_cast<double>(problem.n() - support));
}

}  // namespace odb
