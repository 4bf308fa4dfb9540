#pragma once

// Episodic online debiasing for VAR(d) regressions.

#include "odb/core.hpp"
#include "odb/decorrelator.hpp"
#include "odb/estimate.hpp"
#include "odb/model.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace odb {

/// How mu and L are chosen for each prefix covariance.
struct EpisodeDecorrelatorConfig {
  /// Solver settings; `solver.mu` and `solver.L` are used as-is when the
  /// corresponding automatic rule below is disabled.
  DecorrelatorConfig solver;
  /// mu_l = c_mu * sqrt(log(p0) / n_l); nullopt keeps solver.mu.
  std::optional<double> c_mu = 1.0;
  /// L = L0 * ||(S + delta I)^{-1}||_1 with delta = ridge * mu_l; nullopt keeps solver.L.
  std::optional<double> L0 = 2.0;
  double ridge = 1.0;
  int threads = 1;
  /// Coordinates whose rows are solved; empty means all. Other rows stay 0,
  /// so those coordinates keep their LASSO value.
  std::vector<Index> rows;
};

/// mu and L for a covariance computed from `n_used` samples.
inline DecorrelatorConfig resolve_episode_config(const Matrix& S, Index n_used, const EpisodeDecorrelatorConfig& cfg) {
  DecorrelatorConfig out = cfg.solver;
  const auto p0 = static_cast<double>(S.rows());
  if (cfg.c_mu) {
    require(*cfg.c_mu > 0.0, "episode config: c_mu must be positive");
    out.mu = *cfg.c_mu * std::sqrt(std::log(std::max(p0, 2.0)) / static_cast<double>(n_used));
  }
  if (cfg.L0) {
    require(*cfg.L0 > 0.0 && cfg.ridge > 0.0, "episode config: L0 and ridge must be positive");
    out.L = *cfg.L0 * ridge_inverse_l1_norm(S, cfg.ridge * out.mu);
  }
  return out;
}

/// Sample covariance of the first `rows` rows of X.
inline Matrix prefix_covariance(const Matrix& X, Index rows) {
  require_dims(rows >= 1 && rows <= X.rows(), "prefix_covariance: row count out of range");
  const auto top = X.topRows(rows);
  Matrix S = Matrix::Zero(X.cols(), X.cols());
  S.selfadjointView<Eigen::Lower>().rankUpdate(top.transpose(), 1.0 / static_cast<double>(rows));
  return S.selfadjointView<Eigen::Lower>();
}

/// M^(1), ..., M^(K-1): M^(l) is solved against the covariance of the
/// first n_l rows and warm-started from M^(l-1).
inline std::vector<DecorrelatorMatrix> build_M_sequence(const RegressionProblem& problem,
                                                        const EpisodeSchedule& schedule,
                                                        const EpisodeDecorrelatorConfig& config) {
  problem.validate();
  require_dims(schedule.n() == problem.n(), "build_M_sequence: schedule does not cover the sample");
  std::vector<DecorrelatorMatrix> seq;
  seq.reserve(static_cast<std::size_t>(schedule.episodes() - 1));
  for (Index l = 1; l < schedule.episodes(); ++l) {
    const Index n_l = schedule.prefix(l);
    const Matrix S = prefix_covariance(problem.X, n_l);
    const DecorrelatorConfig cfg = resolve_episode_config(S, n_l, config);
    const Matrix* warm = seq.empty() ? nullptr : &seq.back().M;
    seq.push_back(solve_decorrelator(S, cfg, warm, config.threads, config.rows));
  }
  return seq;
}

namespace detail {

inline void check_sequence(const RegressionProblem& problem, const EpisodeSchedule& schedule,
                           const std::vector<DecorrelatorMatrix>& M_seq) {
  problem.validate();
  require_dims(schedule.n() == problem.n(), "online_debias_ts: schedule does not cover the sample");
  require_dims(static_cast<Index>(M_seq.size()) == schedule.episodes() - 1,
               "online_debias_ts: need one decorrelator per episode after the first");
  for (const auto& M : M_seq)
    require_dims(M.M.rows() == problem.p0() && M.M.cols() == problem.p0(),
                 "online_debias_ts: decorrelator has wrong shape");
}

}  // namespace detail

/// V_{n,a} = (sigma^2 / n) sum_{l>=1} sum_{t in E_l} <m^l_a, x_t>^2
inline Vector conditional_variance_ts(const std::vector<DecorrelatorMatrix>& M_seq, const RegressionProblem& problem,
                                      const EpisodeSchedule& schedule, double sigma) {
  detail::check_sequence(problem, schedule, M_seq);
  Vector v = Vector::Zero(problem.p0());
  for (Index l = 1; l < schedule.episodes(); ++l) {
    const Matrix Z = problem.X.middleRows(schedule.start(l), schedule.length(l)) *
                     M_seq[static_cast<std::size_t>(l - 1)].M.transpose();
    v += Z.colwise().squaredNorm().transpose();
  }
  return v * (sigma * sigma / static_cast<double>(problem.n()));
}

/// V_n = (sigma^2 / n) sum_{l>=1} sum_{t in E_l} (M^(l) x_t)(M^(l) x_t)'
inline Matrix conditional_covariance_ts(const std::vector<DecorrelatorMatrix>& M_seq, const RegressionProblem& problem,
                                        const EpisodeSchedule& schedule, double sigma) {
  detail::check_sequence(problem, schedule, M_seq);
  Matrix V = Matrix::Zero(problem.p0(), problem.p0());
  for (Index l = 1; l < schedule.episodes(); ++l) {
    const Matrix Z = problem.X.middleRows(schedule.start(l), schedule.length(l)) *
                     M_seq[static_cast<std::size_t>(l - 1)].M.transpose();
    V.noalias() += Z.transpose() * Z;
  }
  return V * (sigma * sigma / static_cast<double>(problem.n()));
}

/// theta_L + (1/n) sum_{l>=1} sum_{t in E_l} M^(l) x_t (y_t - <x_t, theta_L>).
/// Episode 0 only seeds M^(1) and adds no correction.
inline DebiasedEstimate online_debias_ts(const Vector& theta_lasso, const RegressionProblem& problem,
                                         const EpisodeSchedule& schedule,
                                         const std::vector<DecorrelatorMatrix>& M_seq, double sigma,
                                         bool with_covariance = false) {
  detail::check_sequence(problem, schedule, M_seq);
  require_dims(theta_lasso.size() == problem.p0(), "online_debias_ts: theta has wrong length");
  require(sigma > 0.0, "online_debias_ts: sigma must be positive");
  const Index n = problem.n();
  const Index p0 = problem.p0();
  const auto nd = static_cast<double>(n);

  const Vector resid = problem.y - problem.X * theta_lasso;
  std::optional<Vector> eps;
  if (problem.theta0) eps = problem.noise();

  Vector correction = Vector::Zero(p0);
  Vector noise = Vector::Zero(p0);
  Matrix applied = Matrix::Zero(p0, p0);  // sum_l M^(l) X_l' X_l
  for (Index l = 1; l < schedule.episodes(); ++l) {
    const auto Xl = problem.X.middleRows(schedule.start(l), schedule.length(l));
    const Matrix& M = M_seq[static_cast<std::size_t>(l - 1)].M;
    correction.noalias() += M * (Xl.transpose() * resid.segment(schedule.start(l), schedule.length(l)));
    if (eps) noise.noalias() += M * (Xl.transpose() * eps->segment(schedule.start(l), schedule.length(l)));
    applied.noalias() += M * (Xl.transpose() * Xl);
  }

  DebiasedEstimate est;
  est.method = Method::online_ts;
  est.n = n;
  est.sigma = sigma;
  if (resid.isZero(0.0)) {
    est.theta = theta_lasso;
  } else {
    est.theta = theta_lasso + correction / nd;
  }
  if (eps) est.noise = noise / std::sqrt(nd);
  const Matrix B = std::sqrt(nd) * (Matrix::Identity(p0, p0) - applied / nd);
  est.bias_matrix_norm = max_abs(B);
  est.variance = conditional_variance_ts(M_seq, problem, schedule, sigma);
  if (with_covariance) est.covariance = conditional_covariance_ts(M_seq, problem, schedule, sigma);
  return est;
}

}  // namespace odb
