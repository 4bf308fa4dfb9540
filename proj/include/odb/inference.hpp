#pragma once

// Confidence intervals, p-values, group regions and BY selection for any
// DebiasedEstimate.

#include "odb/core.hpp"
#include "odb/estimate.hpp"
#include "odb/normal.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

namespace odb {

struct Interval {
  double low = 0.0;
  double high = 0.0;
  [[nodiscard]] bool contains(double x) const { return low <= x && x <= high; }
  [[nodiscard]] double length() const { return high - low; }
};

/// Phi^{-1}(1 - alpha/2) sqrt(V_a / n)
inline double ci_half_width(double variance, Index n, double alpha) {
  require(alpha > 0.0 && alpha <= 1.0, "confidence interval: alpha must lie in (0, 1]");
  require(variance >= 0.0 && n >= 1, "confidence interval: need V >= 0 and n >= 1");
  return normal::upper_quantile(alpha / 2.0) * std::sqrt(variance / static_cast<double>(n));
}

inline Interval confidence_interval(const DebiasedEstimate& est, Index a, double alpha) {
  require_dims(a >= 0 && a < est.theta.size(), "confidence_interval: coordinate out of range");
  const double delta = ci_half_width(est.variance(a), est.n, alpha);
  return {est.theta(a) - delta, est.theta(a) + delta};
}

/// Two-sided p-value for theta_a = 0: 2 (1 - Phi(sqrt(n) |theta_a| / sqrt(V_a))).
inline double p_value(double theta, double variance, Index n) {
  require(variance >= 0.0 && n >= 1, "p_value: need V >= 0 and n >= 1");
  if (variance == 0.0) return theta == 0.0 ? 1.0 : 0.0;
  const double z = std::sqrt(static_cast<double>(n)) * std::abs(theta) / std::sqrt(variance);
  return std::min(1.0, 2.0 * normal::sf(z));
}

inline double p_value(const DebiasedEstimate& est, Index a) {
  require_dims(a >= 0 && a < est.theta.size(), "p_value: coordinate out of range");
  return p_value(est.theta(a), est.variance(a), est.n);
}

/// Benjamini-Yekutieli step-up at level alpha. Returns the indices (into
/// p_values) of the rejected hypotheses in increasing p-value order.
inline std::vector<std::size_t> benjamini_yekutieli(const std::vector<double>& p_values, double alpha) {
  for (double p : p_values) require(p >= 0.0 && p <= 1.0, "benjamini_yekutieli: p-values must lie in [0, 1]");
  const std::size_t m = p_values.size();
  if (m == 0) return {};
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  double harmonic = 0.0;
  for (std::size_t j = 1; j <= m; ++j) harmonic += 1.0 / static_cast<double>(j);
  std::size_t cut = 0;
  for (std::size_t i = 1; i <= m; ++i)
    if (p_values[order[i - 1]] <= static_cast<double>(i) * alpha / (static_cast<double>(m) * harmonic)) cut = i;
  order.resize(cut);
  return order;
}

struct CoordinateReport {
  Index index = 0;
  double estimate = 0.0;
  double variance = 0.0;
  Interval ci;
  double p_value = 1.0;
  bool reject = false;
};

struct InferenceReport {
  double alpha = 0.05;
  std::vector<CoordinateReport> coords;
  /// Indices selected by Benjamini-Yekutieli at the same alpha.
  std::vector<std::size_t> by_rejections;
};

inline InferenceReport make_report(const DebiasedEstimate& est, double alpha) {
  require(alpha > 0.0 && alpha <= 1.0, "make_report: alpha must lie in (0, 1]");
  InferenceReport rep;
  rep.alpha = alpha;
  std::vector<double> pv;
  for (Index a = 0; a < est.theta.size(); ++a) {
    CoordinateReport c;
    c.index = a;
    c.estimate = est.theta(a);
    c.variance = est.variance(a);
    c.ci = confidence_interval(est, a, alpha);
    c.p_value = p_value(est, a);
    c.reject = c.p_value <= alpha;
    pv.push_back(c.p_value);
    rep.coords.push_back(c);
  }
  rep.by_rejections = benjamini_yekutieli(pv, alpha);
  return rep;
}

/// Joint region for a small coordinate group G built from the G x G block of
/// the conditional covariance V_n. Residuals are whitened by
/// sqrt(n) V_G^{-1/2}; the region is the product box in whitened
/// coordinates whose standard Gaussian mass is 1 - alpha.
class GroupRegion {
 public:
  GroupRegion(const DebiasedEstimate& est, std::vector<Index> group, const Matrix& covariance)
      : group_(std::move(group)), n_(est.n) {
    require(!group_.empty(), "GroupRegion: empty group");
    const auto k = static_cast<Index>(group_.size());
    require_dims(covariance.rows() == est.theta.size() && covariance.cols() == est.theta.size(),
                 "GroupRegion: covariance must be p0 x p0");
    center_.resize(k);
    Matrix block(k, k);
    for (Index r = 0; r < k; ++r) {
      const Index gr = group_[static_cast<std::size_t>(r)];
      require_dims(gr >= 0 && gr < est.theta.size(), "GroupRegion: coordinate out of range");
      center_(r) = est.theta(gr);
      for (Index s = 0; s < k; ++s) block(r, s) = covariance(gr, group_[static_cast<std::size_t>(s)]);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (block + block.transpose()));
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
      throw SingularityError("GroupRegion: group covariance is not positive definite");
    inv_sqrt_ = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                eig.eigenvectors().transpose();
    sqrt_ = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  }

  /// sqrt(n) V_G^{-1/2} (theta_G - estimate_G)
  [[nodiscard]] Vector whiten(const Vector& theta_group) const {
    require_dims(theta_group.size() == center_.size(), "GroupRegion: point has wrong length");
    return std::sqrt(static_cast<double>(n_)) * (inv_sqrt_ * (theta_group - center_));
  }

  /// Half-width of each whitened coordinate so the box has mass 1 - alpha.
  [[nodiscard]] double box_half_width(double alpha) const {
    require(alpha > 0.0 && alpha <= 1.0, "GroupRegion: alpha must lie in (0, 1]");
    const double per_coord = std::pow(1.0 - alpha, 1.0 / static_cast<double>(center_.size()));
    return normal::upper_quantile((1.0 - per_coord) / 2.0);
  }

  [[nodiscard]] bool contains(const Vector& theta_group, double alpha) const {
    return whiten(theta_group).cwiseAbs().maxCoeff() <= box_half_width(alpha);
  }

  [[nodiscard]] const std::vector<Index>& group() const { return group_; }
  [[nodiscard]] const Vector& center() const { return center_; }
  [[nodiscard]] const Matrix& covariance_sqrt() const { return sqrt_; }

 private:
  std::vector<Index> group_;
  Index n_;
  Vector center_;
  Matrix inv_sqrt_;
  Matrix sqrt_;
};

}  // namespace odb
