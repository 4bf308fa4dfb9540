#pragma once

// Decorrelating rows m_a from the l1-constrained program
//   minimize (1/2) m' S m - m_a + mu ||m||_1   subject to ||m||_1 <= L
// solved by coordinate descent or projected gradient descent.

#include "odb/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace odb {

enum class DecorrelatorSolver { cd, pgd };

inline constexpr double unbounded = std::numeric_limits<double>::infinity();

struct DecorrelatorConfig {
  double mu = 0.1;
  double L = unbounded;
  double tol = 1e-9;
  int max_iter = 20'000;
  DecorrelatorSolver solver = DecorrelatorSolver::cd;
  /// PGD step 1/eta; defaults to 1/lambda_max(S).
  std::optional<double> step;
  /// Doublings of mu allowed when a solved row misses the feasibility bound.
  int max_doublings = 6;
};

struct DecorrelatorRow {
  Vector m;
  /// ||S m - e_a||_inf
  double feasibility_gap = 0.0;
  /// m' S m
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  double mu = 0.0;
  /// The l1 budget was binding at the solution.
  bool budget_active = false;
  /// With no budget, the Lagrangian fell below `divergence_floor`: the
  /// program is unbounded below at this mu (rank-deficient S).
  bool unbounded_below = false;
};

struct DecorrelatorMatrix {
  Matrix M;  // row a is m_a
  std::vector<DecorrelatorRow> rows;
  double mu = 0.0;  // requested mu, before any doubling
  double L = unbounded;

  [[nodiscard]] double max_feasibility_gap() const {
    double g = 0.0;
    for (const auto& r : rows) g = std::max(g, r.feasibility_gap);
    return g;
  }
  [[nodiscard]] bool all_converged() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.converged; });
  }
};

/// Euclidean projection onto {u : ||u||_1 <= L} by sorting magnitudes.
inline Vector project_l1(const Vector& v, double L) {
  require(L > 0.0, "project_l1: radius must be positive");
  if (!std::isfinite(L) || v.lpNorm<1>() <= L) return v;
  std::vector<double> u(v.size());
  for (Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v(i));
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumsum += u[k];
    const double t = (cumsum - L) / static_cast<double>(k + 1);
    if (u[k] > t) theta = t;
  }
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double mag = std::max(std::abs(v(i)) - theta, 0.0);
    out(i) = v(i) >= 0.0 ? mag : -mag;
  }
  return out;
}

/// (1/2) m' S m - m_a + mu ||m||_1
inline double decorrelator_lagrangian(const Matrix& S, Index a, double mu, const Vector& m) {
  return 0.5 * m.dot(S * m) - m(a) + mu * m.lpNorm<1>();
}

/// Largest eigenvalue of a PSD matrix by power iteration.
inline double power_iteration_max_eig(const Matrix& S, int max_iter = 1000, double tol = 1e-10) {
  const Index p = S.rows();
  if (p == 0) return 0.0;
  Vector v = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
  // A fixed non-symmetric perturbation avoids starting orthogonal to the top eigenvector.
  for (Index i = 0; i < p; ++i) v(i) += 1e-3 * static_cast<double>(i % 7);
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = S * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / norm;
    if (std::abs(next - lam) <= tol * std::max(1.0, std::abs(next))) return std::max(next, norm);
    lam = next;
  }
  return std::max(lam, (S * v).norm());
}

namespace detail {

inline void check_row_inputs(const Matrix& S, Index a, const DecorrelatorConfig& config) {
  require_dims(S.rows() == S.cols(), "decorrelator: covariance must be square");
  require_dims(a >= 0 && a < S.rows(), "decorrelator: coordinate out of range");
  require(config.mu >= 0.0, "decorrelator: mu must be nonnegative");
  require(config.L > 0.0, "decorrelator: L must be positive");
  require(config.tol > 0.0 && config.max_iter >= 1, "decorrelator: invalid tolerance or iteration cap");
}

inline void finish_row(const Matrix& S, Index a, DecorrelatorRow& row) {
  Vector g = S * row.m;
  row.objective = row.m.dot(g);
  g(a) -= 1.0;
  row.feasibility_gap = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace detail

/// Projected gradient descent with step 1/eta.
inline DecorrelatorRow solve_row_pgd(const Matrix& S, Index a, const DecorrelatorConfig& config,
                                     const Vector* init = nullptr) {
  detail::check_row_inputs(S, a, config);
  const Index p = S.rows();
  DecorrelatorRow row;
  row.mu = config.mu;
  row.m = init ? *init : Vector::Zero(p);
  require_dims(row.m.size() == p, "solve_row_pgd: warm start has wrong length");
  row.m = project_l1(row.m, config.L);

  double eta = config.step ? 1.0 / *config.step : power_iteration_max_eig(S);
  require(eta >= 0.0 && std::isfinite(eta), "solve_row_pgd: invalid step");
  if (eta == 0.0) {
    // S = 0: the objective is linear, minimized at the soft-thresholded corner.
    row.m = Vector::Zero(p);
    if (config.mu < 1.0 && std::isfinite(config.L)) row.m(a) = config.L;
    row.converged = std::isfinite(config.L) || config.mu >= 1.0;
    detail::finish_row(S, a, row);
    return row;
  }

  Vector grad(p);
  for (row.iterations = 1; row.iterations <= config.max_iter; ++row.iterations) {
    grad.noalias() = S * row.m;
    grad(a) -= 1.0;
    Vector next = project_l1(soft_threshold(row.m - grad / eta, config.mu / eta), config.L);
    const double change = (next - row.m).cwiseAbs().maxCoeff();
    row.m = std::move(next);
    if (change < config.tol) {
      row.converged = true;
      break;
    }
  }
  row.iterations = std::min(row.iterations, config.max_iter);
  detail::finish_row(S, a, row);
  return row;
}

namespace detail {

/// Lagrangian values below this are treated as divergence when no l1 budget
/// is set. At a finite minimizer the value is -(m_a - mu ||m||_1) / 2.
inline constexpr double divergence_floor = -1e6;

/// Cyclic CD sweeps on the Lagrangian at level `mu` (no l1 budget), updating
/// m and g = S m in place. Returns the number of sweeps; sets `converged`.
/// When `floor` is given, stops early once the objective falls below it.
inline int cd_sweeps(const Matrix& S, Index a, double mu, double tol, int max_iter, Vector& m, Vector& g,
                     bool& converged, double floor = -std::numeric_limits<double>::infinity()) {
  converged = false;
  const Index p = S.rows();
  int sweep = 1;
  for (; sweep <= max_iter; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      const double old = m(j);
      const double z = -(g(j) - S(j, j) * old) + (j == a ? 1.0 : 0.0);
      const double updated = soft_threshold(z, mu) / S(j, j);
      if (updated != old) {
        g.noalias() += S.col(j) * (updated - old);
        m(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (max_change < tol) {
      converged = true;
      break;
    }
    if (0.5 * m.dot(g) - m(a) + mu * m.lpNorm<1>() < floor) break;
  }
  return std::min(sweep, max_iter);
}

}  // namespace detail

/// Cyclic coordinate descent on the Lagrangian. If the minimizer lies
/// outside the l1 ball, the constrained minimizer is the Lagrangian
/// solution at level mu + nu for the budget multiplier nu >= 0 with
/// ||m||_1 = L; nu is located by bisection. With `exact_budget` false the
/// bisection is skipped and the projected iterate is returned with
/// `budget_active` set, which callers use to move straight to a larger mu.
inline DecorrelatorRow solve_row_cd(const Matrix& S, Index a, const DecorrelatorConfig& config,
                                    const Vector* init = nullptr, bool exact_budget = true) {
  detail::check_row_inputs(S, a, config);
  const Index p = S.rows();
  for (Index j = 0; j < p; ++j)
    if (!(S(j, j) > 0.0)) throw SingularityError("solve_row_cd: covariance has a nonpositive diagonal entry");

  DecorrelatorRow row;
  row.mu = config.mu;
  row.m = init ? *init : Vector::Zero(p);
  require_dims(row.m.size() == p, "solve_row_cd: warm start has wrong length");
  const bool bounded = std::isfinite(config.L);
  row.m = project_l1(row.m, config.L);
  Vector g = S * row.m;  // S m, kept in sync

  // Over the ball the Lagrangian at level t < 1 is at least -(1 - t) L, so a
  // CD iterate below that value proves the minimizer lies outside the ball.
  auto floor_at = [&](double level) { return bounded ? -(1.0 - level) * config.L : detail::divergence_floor; };
  auto lagrangian = [&](const Vector& m, const Vector& sm, double level) {
    return 0.5 * m.dot(sm) - m(a) + level * m.lpNorm<1>();
  };

  bool conv = false;
  row.iterations = detail::cd_sweeps(S, a, config.mu, config.tol, config.max_iter, row.m, g, conv,
                                     floor_at(config.mu));
  const bool outside = bounded && (row.m.lpNorm<1>() > config.L || lagrangian(row.m, g, config.mu) < floor_at(config.mu));
  row.converged = conv;
  if (!bounded && lagrangian(row.m, g, config.mu) < detail::divergence_floor) {
    row.unbounded_below = true;
    row.converged = false;
  }
  if (outside) {
    row.budget_active = true;
    if (!exact_budget) {
      row.m = project_l1(row.m, config.L);
      row.converged = false;
      detail::finish_row(S, a, row);
      return row;
    }
    double lo = 0.0;
    double hi = std::max(1.0 - config.mu, 0.0) + 1e-12;
    Vector m_hi = Vector::Zero(p);
    Vector g_hi = Vector::Zero(p);
    Vector m_cur = row.m;
    Vector g_cur = g;
    bool ok = true;
    for (int step = 0; step < 100 && hi - lo > 1e-13 * std::max(1.0, hi); ++step) {
      const double mid = 0.5 * (lo + hi);
      const double level = config.mu + mid;
      bool step_conv = false;
      row.iterations += detail::cd_sweeps(S, a, level, config.tol, config.max_iter, m_cur, g_cur, step_conv,
                                          floor_at(level));
      const double norm = m_cur.lpNorm<1>();
      if (norm > config.L || lagrangian(m_cur, g_cur, level) < floor_at(level)) {
        lo = mid;
        if (!step_conv) {
          m_cur = m_hi;
          g_cur = g_hi;
        }
        continue;
      }
      ok = ok && step_conv;
      hi = mid;
      m_hi = m_cur;
      g_hi = g_cur;
      if (norm >= config.L * (1.0 - 1e-12)) break;
    }
    row.m = m_hi;
    row.converged = ok;
    // A singular S can make ||m||_1 jump across the budget as the level
    // moves, leaving the bisection short of the ball. Finish with projected
    // gradient from the best point found.
    if (!ok || m_hi.lpNorm<1>() < config.L * (1.0 - 1e-9)) {
      const DecorrelatorRow polished = solve_row_pgd(S, a, config, &m_hi);
      row.iterations += polished.iterations;
      if (lagrangian(polished.m, S * polished.m, config.mu) <= lagrangian(row.m, S * row.m, config.mu)) {
        row.m = polished.m;
        row.converged = polished.converged;
      }
    }
  }
  detail::finish_row(S, a, row);
  return row;
}

/// Stationarity violation of m for the Lagrangian program: the largest
/// |(S m - e_a)_j + nu_j| with nu in mu * subdifferential of |m_j|. When the
/// l1 ball is active, the multiplier of the ball constraint is estimated
/// from the support and added to mu.
inline double kkt_residual(const Matrix& S, const Vector& m, Index a, double mu,
                           double L = unbounded) {
  require_dims(S.rows() == S.cols() && S.rows() == m.size(), "kkt_residual: size mismatch");
  require_dims(a >= 0 && a < m.size(), "kkt_residual: coordinate out of range");
  Vector g = S * m;
  g(a) -= 1.0;
  double level = mu;
  if (std::isfinite(L) && m.lpNorm<1>() >= L * (1.0 - 1e-9)) {
    double sum = 0.0;
    int count = 0;
    for (Index j = 0; j < m.size(); ++j)
      if (m(j) != 0.0) {
        sum += -g(j) * (m(j) > 0 ? 1.0 : -1.0);
        ++count;
      }
    if (count > 0) level = std::max(mu, sum / count);
  }
  double worst = 0.0;
  for (Index j = 0; j < m.size(); ++j) {
    const double v = m(j) != 0.0 ? std::abs(g(j) + level * (m(j) > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g(j)) - level);
    worst = std::max(worst, v);
  }
  return worst;
}

inline double kkt_residual(const Matrix& S, const DecorrelatorRow& row, Index a, double mu,
                           double L = unbounded) {
  return kkt_residual(S, row.m, a, mu, L);
}

inline DecorrelatorRow solve_row(const Matrix& S, Index a, const DecorrelatorConfig& config,
                                 const Vector* init = nullptr) {
  return config.solver == DecorrelatorSolver::cd ? solve_row_cd(S, a, config, init)
                                                 : solve_row_pgd(S, a, config, init);
}

/// Solves row a, doubling mu while the feasibility gap exceeds mu. With a
/// binding l1 budget the gap on the support equals mu plus the budget
/// multiplier, so the CD solver skips the exact budgeted solve on every
/// attempt except the last.
inline DecorrelatorRow solve_row_with_fallback(const Matrix& S, Index a, const DecorrelatorConfig& config,
                                               const Vector* init = nullptr) {
  DecorrelatorConfig cfg = config;
  auto attempt = [&](bool last) {
    return cfg.solver == DecorrelatorSolver::cd ? solve_row_cd(S, a, cfg, init, last) : solve_row_pgd(S, a, cfg, init);
  };
  DecorrelatorRow row = attempt(config.max_doublings == 0);
  for (int k = 0; k < config.max_doublings; ++k) {
    if (row.unbounded_below) {
      cfg.mu *= 2.0;
      row = attempt(k + 1 == config.max_doublings);
      continue;
    }
    if (!row.budget_active && row.feasibility_gap <= cfg.mu * (1.0 + 1e-6) + 10.0 * cfg.tol) break;
    if (row.budget_active && row.converged && row.feasibility_gap <= cfg.mu * (1.0 + 1e-6) + 10.0 * cfg.tol) break;
    cfg.mu *= 2.0;
    row = attempt(k + 1 == config.max_doublings);
  }
  return row;
}

/// Rows of M against a shared covariance. `init`, when given, supplies a
/// warm start per row (row a of init for coordinate a). A nonempty `only`
/// restricts the solve to those coordinates; the other rows are left at 0.
inline DecorrelatorMatrix solve_decorrelator(const Matrix& S, const DecorrelatorConfig& config,
                                             const Matrix* init = nullptr, int threads = 1,
                                             const std::vector<Index>& only = {}) {
  const Index p = S.rows();
  require_dims(S.cols() == p, "solve_decorrelator: covariance must be square");
  if (init) require_dims(init->rows() == p && init->cols() == p, "solve_decorrelator: warm start has wrong shape");
  std::vector<Index> targets = only;
  if (targets.empty()) {
    targets.resize(static_cast<std::size_t>(p));
    for (Index a = 0; a < p; ++a) targets[static_cast<std::size_t>(a)] = a;
  }
  for (Index a : targets) require_dims(a >= 0 && a < p, "solve_decorrelator: row index out of range");
  DecorrelatorMatrix out;
  out.M = Matrix::Zero(p, p);
  out.rows.resize(static_cast<std::size_t>(p));
  for (auto& r : out.rows) {
    r.m = Vector::Zero(p);
    r.converged = true;
  }
  out.mu = config.mu;
  out.L = config.L;
  parallel_for(targets.size(), threads, [&](std::size_t i) {
    const Index a = targets[i];
    Vector start;
    if (init) start = init->row(a).transpose();
    out.rows[static_cast<std::size_t>(a)] = solve_row_with_fallback(S, a, config, init ? &start : nullptr);
  });
  for (Index a : targets) out.M.row(a) = out.rows[static_cast<std::size_t>(a)].m.transpose();
  return out;
}

/// ||(S + delta I)^{-1}||_1, the largest column l1 norm of a ridge inverse.
inline double ridge_inverse_l1_norm(const Matrix& S, double delta) {
  require(delta > 0.0, "ridge_inverse_l1_norm: delta must be positive");
  const Index p = S.rows();
  Matrix reg = S;
  reg.diagonal().array() += delta;
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success) throw SingularityError("ridge_inverse_l1_norm: regularized matrix not positive definite");
  return l1_operator_norm(llt.solve(Matrix::Identity(p, p)));
}

}  // namespace odb
