#pragma once

// Two-batch online debiasing: batch 1 is i.i.d., batch 2 is collected
// using an intermediate estimate computed from batch 1.

#include "odb/core.hpp"
#include "odb/debias_ts.hpp"
#include "odb/decorrelator.hpp"
#include "odb/estimate.hpp"
#include "odb/model.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace odb {

struct BatchDesign {
  Matrix X1, X2;
  Vector y1, y2;
  /// Intermediate estimate used to collect batch 2.
  Vector theta_int;
  /// Batch-2 selection threshold in standard-deviation units; -inf means no selection.
  double varsigma_bar = -std::numeric_limits<double>::infinity();
  std::optional<Vector> theta0;
  std::optional<double> sigma;

  [[nodiscard]] Index n1() const { return X1.rows(); }
  [[nodiscard]] Index n2() const { return X2.rows(); }
  [[nodiscard]] Index n() const { return n1() + n2(); }
  [[nodiscard]] Index p() const { return X1.cols(); }

  void validate() const {
    require_dims(X1.rows() == y1.size() && X2.rows() == y2.size(), "BatchDesign: X rows must equal length of y");
    require_dims(X2.rows() == 0 || X2.cols() == X1.cols(), "BatchDesign: batches must share the column count");
    require_dims(n1() >= 1, "BatchDesign: batch 1 must be nonempty");
    if (theta0) require_dims(theta0->size() == p(), "BatchDesign: theta0 has wrong length");
  }

  /// Both batches stacked, batch 1 first.
  [[nodiscard]] RegressionProblem stacked() const {
    validate();
    RegressionProblem prob;
    prob.X.resize(n(), p());
    prob.X.topRows(n1()) = X1;
    if (n2() > 0) prob.X.bottomRows(n2()) = X2;
    prob.y.resize(n());
    prob.y.head(n1()) = y1;
    if (n2() > 0) prob.y.tail(n2()) = y2;
    prob.theta0 = theta0;
    prob.sigma = sigma;
    prob.origin = BatchOrigin{n1(), n2()};
    return prob;
  }
};

/// M1 from batch 1 alone and M2 from batch 2 alone. An empty batch 2 gives M2 = 0.
inline std::pair<DecorrelatorMatrix, DecorrelatorMatrix> build_batch_decorrelators(
    const BatchDesign& design, const EpisodeDecorrelatorConfig& config) {
  design.validate();
  const Matrix S1 = prefix_covariance(design.X1, design.n1());
  DecorrelatorMatrix M1 = solve_decorrelator(S1, resolve_episode_config(S1, design.n1(), config), nullptr, config.threads, config.rows);
  DecorrelatorMatrix M2;
  if (design.n2() > 0) {
    const Matrix S2 = prefix_covariance(design.X2, design.n2());
    M2 = solve_decorrelator(S2, resolve_episode_config(S2, design.n2(), config), nullptr, config.threads, config.rows);
  } else {
    M2.M = Matrix::Zero(design.p(), design.p());
  }
  return {std::move(M1), std::move(M2)};
}

/// V_a = sigma^2 ((n1/n) m1' S1 m1 + (n2/n) m2' S2 m2)
inline Vector conditional_variance_batch(const Matrix& M1, const Matrix& M2, const BatchDesign& design, double sigma) {
  design.validate();
  require_dims(M1.rows() == design.p() && M1.cols() == design.p() && M2.rows() == design.p() &&
                   M2.cols() == design.p(),
               "conditional_variance_batch: decorrelators must be p x p");
  Vector v = (design.X1 * M1.transpose()).colwise().squaredNorm().transpose();
  if (design.n2() > 0) v += (design.X2 * M2.transpose()).colwise().squaredNorm().transpose();
  return v * (sigma * sigma / static_cast<double>(design.n()));
}

/// theta_L + (1/n) M1 X1'(y1 - X1 theta_L) + (1/n) M2 X2'(y2 - X2 theta_L).
/// The bias matrix is only formed when `with_bias` is set (it costs p^3).
inline DebiasedEstimate online_debias_batch(const Vector& theta_lasso, const BatchDesign& design, const Matrix& M1,
                                            const Matrix& M2, double sigma, bool with_bias = false) {
  design.validate();
  require_dims(theta_lasso.size() == design.p(), "online_debias_batch: theta has wrong length");
  require(sigma > 0.0, "online_debias_batch: sigma must be positive");
  const auto nd = static_cast<double>(design.n());
  const Vector r1 = design.y1 - design.X1 * theta_lasso;
  const Vector r2 = design.y2 - design.X2 * theta_lasso;

  DebiasedEstimate est;
  est.method = Method::online_batch;
  est.n = design.n();
  est.sigma = sigma;
  est.variance = conditional_variance_batch(M1, M2, design, sigma);
  if (r1.isZero(0.0) && r2.isZero(0.0)) {
    est.theta = theta_lasso;
  } else {
    Vector corr = M1 * (design.X1.transpose() * r1);
    if (design.n2() > 0) corr.noalias() += M2 * (design.X2.transpose() * r2);
    est.theta = theta_lasso + corr / nd;
  }
  if (design.theta0) {
    const Vector e1 = design.y1 - design.X1 * *design.theta0;
    Vector w = M1 * (design.X1.transpose() * e1);
    if (design.n2() > 0) w.noalias() += M2 * (design.X2.transpose() * (design.y2 - design.X2 * *design.theta0));
    est.noise = w / std::sqrt(nd);
  }
  if (with_bias) {
    Matrix applied = M1 * (design.X1.transpose() * design.X1);
    if (design.n2() > 0) applied.noalias() += M2 * (design.X2.transpose() * design.X2);
    est.bias_matrix_norm = max_abs(std::sqrt(nd) * (Matrix::Identity(design.p(), design.p()) - applied / nd));
  }
  return est;
}

inline DebiasedEstimate online_debias_batch(const Vector& theta_lasso, const BatchDesign& design,
                                            const DecorrelatorMatrix& M1, const DecorrelatorMatrix& M2, double sigma,
                                            bool with_bias = false) {
  return online_debias_batch(theta_lasso, design, M1.M, M2.M, sigma, with_bias);
}

}  // namespace odb
