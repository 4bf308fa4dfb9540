#pragma once

// Model and data types shared by every estimator, the time-series
// regression view, and episode schedules.

#include "odb/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace odb {

/// Gaussian VAR(d): z_t = sum_l A^(l) z_{t-l} + zeta_t, zeta_t ~ N(0, noise_cov).
class VarModel {
 public:
  VarModel(std::vector<Matrix> coeffs, Matrix noise_cov)
      : coeffs_(std::move(coeffs)), noise_cov_(std::move(noise_cov)) {
    require_dims(!coeffs_.empty(), "VarModel: need at least one lag");
    const Index p = noise_cov_.rows();
    require_dims(p > 0 && noise_cov_.cols() == p, "VarModel: noise covariance must be square");
    for (const auto& a : coeffs_)
      require_dims(a.rows() == p && a.cols() == p, "VarModel: every lag matrix must be p x p");
    require(noise_cov_.isApprox(noise_cov_.transpose(), 1e-12),
            "VarModel: noise covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(noise_cov_, Eigen::EigenvaluesOnly);
    require(eig.eigenvalues().minCoeff() > 0.0,
            "VarModel: noise covariance must be positive definite");
  }

  [[nodiscard]] Index p() const { return noise_cov_.rows(); }
  [[nodiscard]] Index d() const { return static_cast<Index>(coeffs_.size()); }
  [[nodiscard]] const std::vector<Matrix>& coeffs() const { return coeffs_; }
  [[nodiscard]] const Matrix& coeff(Index lag) const { return coeffs_.at(static_cast<std::size_t>(lag)); }
  [[nodiscard]] const Matrix& noise_cov() const { return noise_cov_; }

  /// Regression target for coordinate i: rows i of A^(1), ..., A^(d) stacked.
  [[nodiscard]] Vector row_target(Index i) const {
    require_dims(i >= 0 && i < p(), "row_target: coordinate out of range");
    Vector theta(d() * p());
    for (Index l = 0; l < d(); ++l) theta.segment(l * p(), p()) = coeffs_[static_cast<std::size_t>(l)].row(i).transpose();
    return theta;
  }

  /// Companion (dp x dp) transition matrix of the stacked VAR(1) form.
  [[nodiscard]] Matrix companion() const {
    const Index n = d() * p();
    Matrix c = Matrix::Zero(n, n);
    for (Index l = 0; l < d(); ++l) c.block(0, l * p(), p(), p()) = coeffs_[static_cast<std::size_t>(l)];
    if (d() > 1) c.block(p(), 0, (d() - 1) * p(), (d() - 1) * p()).setIdentity();
    return c;
  }

  /// Spectral radius of the companion matrix; < 1 means stationary.
  [[nodiscard]] double spectral_radius() const {
    Eigen::EigenSolver<Matrix> es(companion(), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

 private:
  std::vector<Matrix> coeffs_;
  Matrix noise_cov_;
};

struct TimeSeriesOrigin {
  Index coordinate = 0;
  Index d = 1;
  Index p = 1;
};

struct BatchOrigin {
  Index n1 = 0;
  Index n2 = 0;
};

struct GenericOrigin {};

using ProblemOrigin = std::variant<TimeSeriesOrigin, BatchOrigin, GenericOrigin>;

/// y = X theta0 + eps, with optional ground truth for diagnostics.
struct RegressionProblem {
  Matrix X;
  Vector y;
  std::optional<Vector> theta0;
  std::optional<double> sigma;
  ProblemOrigin origin = GenericOrigin{};

  [[nodiscard]] Index n() const { return X.rows(); }
  [[nodiscard]] Index p0() const { return X.cols(); }

  void validate() const {
    require_dims(X.rows() == y.size(), "RegressionProblem: X rows must equal length of y");
    if (theta0) require_dims(theta0->size() == X.cols(), "RegressionProblem: theta0 length must equal X columns");
    if (sigma) require(*sigma > 0.0, "RegressionProblem: sigma must be positive");
    if (const auto* ts = std::get_if<TimeSeriesOrigin>(&origin))
      require_dims(X.cols() == ts->d * ts->p, "RegressionProblem: time-series design must have d*p columns");
  }

  /// Noise realization y - X theta0; requires theta0.
  [[nodiscard]] Vector noise() const {
    require(theta0.has_value(), "RegressionProblem: noise needs theta0");
    return y - X * *theta0;
  }
};

/// Regression view of a series for coordinate i. `series` holds one
/// observation z_t per row (T x p). Row t of X is (z_{t+d-1}, ..., z_t) and
/// y_t = z_{t+d, i}, all 0-based.
inline RegressionProblem build_regression_view(const Matrix& series, Index d, Index i) {
  const Index T = series.rows();
  const Index p = series.cols();
  require_dims(d >= 1, "build_regression_view: d must be positive");
  require_dims(T > d, "build_regression_view: need more observations than lags (T > d)");
  require_dims(i >= 0 && i < p, "build_regression_view: coordinate out of range");
  const Index n = T - d;
  RegressionProblem prob;
  prob.X.resize(n, d * p);
  prob.y.resize(n);
  for (Index t = 0; t < n; ++t) {
    for (Index l = 0; l < d; ++l) prob.X.row(t).segment(l * p, p) = series.row(t + d - 1 - l);
    prob.y(t) = series(t + d, i);
  }
  prob.origin = TimeSeriesOrigin{i, d, p};
  return prob;
}

/// Same as above for a series given as a ragged-checked list of vectors.
inline RegressionProblem build_regression_view(const std::vector<Vector>& series, Index d, Index i) {
  require_dims(!series.empty(), "build_regression_view: empty series");
  const Index p = series.front().size();
  Matrix z(static_cast<Index>(series.size()), p);
  for (std::size_t t = 0; t < series.size(); ++t) {
    require_dims(series[t].size() == p, "build_regression_view: ragged series");
    z.row(static_cast<Index>(t)) = series[t].transpose();
  }
  return build_regression_view(z, d, i);
}

/// Partition of [0, n) into consecutive episodes E_0, ..., E_{K-1}.
class EpisodeSchedule {
 public:
  EpisodeSchedule(std::vector<Index> lengths, double beta) : lengths_(std::move(lengths)), beta_(beta) {
    if (lengths_.empty()) throw ScheduleError("EpisodeSchedule: no episodes");
    Index total = 0;
    cumulative_.reserve(lengths_.size());
    for (Index r : lengths_) {
      if (r < 1) throw ScheduleError("EpisodeSchedule: every episode must be nonempty");
      total += r;
      cumulative_.push_back(total);
    }
  }

  [[nodiscard]] const std::vector<Index>& lengths() const { return lengths_; }
  /// cumulative()[l-1] = n_l = r_0 + ... + r_{l-1}, for l = 1..K.
  [[nodiscard]] const std::vector<Index>& cumulative() const { return cumulative_; }
  [[nodiscard]] double beta() const { return beta_; }
  [[nodiscard]] Index episodes() const { return static_cast<Index>(lengths_.size()); }
  [[nodiscard]] Index n() const { return cumulative_.back(); }
  /// First sample index of episode l.
  [[nodiscard]] Index start(Index l) const { return l == 0 ? 0 : cumulative_[static_cast<std::size_t>(l - 1)]; }
  [[nodiscard]] Index length(Index l) const { return lengths_[static_cast<std::size_t>(l)]; }
  /// n_l: number of samples before episode l.
  [[nodiscard]] Index prefix(Index l) const { return start(l); }

 private:
  std::vector<Index> lengths_;
  std::vector<Index> cumulative_;
  double beta_;
};

/// r_0 followed by ceil(beta^l) for l >= 1; the last episode is cut to the
/// remainder so the lengths sum to n.
inline EpisodeSchedule make_schedule(Index n, Index r0, double beta) {
  if (n < 1) throw ScheduleError("make_schedule: n must be positive");
  if (r0 < 1 || r0 >= n) throw ScheduleError("make_schedule: need 1 <= r0 < n");
  if (!(beta > 1.0)) throw ScheduleError("make_schedule: beta must exceed 1");
  std::vector<Index> lengths{r0};
  Index total = r0;
  for (int l = 1; total < n; ++l) {
    // Guard against pow returning k + 1e-15 for exact integer powers.
    auto r = static_cast<Index>(std::ceil(std::pow(beta, l) - 1e-9));
    r = std::max<Index>(r, 1);
    if (total + r >= n) r = n - total;
    lengths.push_back(r);
    total += r;
  }
  return EpisodeSchedule(std::move(lengths), beta);
}

/// Default first-episode length ceil(sqrt(n)), kept strictly below n.
inline Index default_first_episode(Index n) {
  auto r0 = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n))));
  return std::clamp<Index>(r0, 1, std::max<Index>(1, n - 1));
}

struct SpectralSummary {
  double mu_min = 0.0;
  double mu_max = 0.0;
  double lam_min_noise = 0.0;
  double lam_max_noise = 0.0;
  double omega = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  bool unstable = false;
};

/// Reverse characteristic polynomial I - sum_l A^(l) g^l at complex g.
inline Eigen::MatrixXcd characteristic_polynomial(const VarModel& model, std::complex<double> g) {
  const Index p = model.p();
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(p, p);
  std::complex<double> power = 1.0;
  for (Index l = 0; l < model.d(); ++l) {
    power *= g;
    a -= power * model.coeff(l).cast<std::complex<double>>();
  }
  return a;
}

/// Grid extremes of the eigenvalues of A*(g) A(g) over g on the unit circle,
/// plus the derived estimation constants. Grid points are exp(2 pi i k / N).
inline SpectralSummary spectral_params(const VarModel& model, int grid_size = 512) {
  require(grid_size >= 64, "spectral_params: grid_size must be at least 64");
  SpectralSummary s;
  s.mu_min = std::numeric_limits<double>::infinity();
  s.mu_max = 0.0;
  for (int k = 0; k < grid_size; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / grid_size;
    const auto a = characteristic_polynomial(model, std::polar(1.0, angle));
    const Eigen::MatrixXcd h = a.adjoint() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h, Eigen::EigenvaluesOnly);
    s.mu_min = std::min(s.mu_min, eig.eigenvalues().minCoeff());
    s.mu_max = std::max(s.mu_max, eig.eigenvalues().maxCoeff());
  }
  s.mu_min = std::max(s.mu_min, 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> noise(model.noise_cov(), Eigen::EigenvaluesOnly);
  s.lam_min_noise = noise.eigenvalues().minCoeff();
  s.lam_max_noise = noise.eigenvalues().maxCoeff();
  s.unstable = s.mu_min <= 1e-12;
  const auto d = static_cast<double>(model.d());
  s.alpha = s.lam_min_noise / (2.0 * s.mu_max);
  if (!s.unstable) {
    s.omega = d * s.lam_max_noise * s.mu_max / (s.lam_min_noise * s.mu_min);
    s.gamma = d * s.lam_max_noise / s.mu_min;
  } else {
    s.omega = std::numeric_limits<double>::infinity();
    s.gamma = std::numeric_limits<double>::infinity();
  }
  return s;
}

}  // namespace odb
