#pragma once

// Seeded generators for VAR(d) series and two-batch adaptive designs, and
// closed-form moments used to check them.

#include "odb/core.hpp"
#include "odb/debias_batch.hpp"
#include "odb/debias_offline.hpp"
#include "odb/lasso.hpp"
#include "odb/model.hpp"
#include "odb/normal.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace odb {

/// 64-bit Mersenne Twister seeded from (seed, stream). Each Monte Carlo
/// replicate gets its own stream so results do not depend on execution order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      const double u = std::generate_canonical<double, 53>(engine_);
      if (u > 0.0) return u;
    }
  }
  bool bernoulli(double q) { return uniform() < q; }
  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }
  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

enum class CovKind { power, equi };

inline CovKind parse_cov_kind(const std::string& s) {
  if (s == "power") return CovKind::power;
  if (s == "equi") return CovKind::equi;
  throw DomainError("unknown covariance kind '" + s + "' (expected power or equi)");
}

inline std::string to_string(CovKind k) { return k == CovKind::power ? "power" : "equi"; }

/// power: rho^|i-j|; equi: 1 on the diagonal and rho elsewhere.
inline Matrix build_sigma_zeta(Index p, double rho, CovKind kind) {
  require(p >= 1, "build_sigma_zeta: p must be positive");
  require(std::abs(rho) < 1.0, "build_sigma_zeta: need |rho| < 1");
  Matrix s(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      s(i, j) = i == j ? 1.0 : (kind == CovKind::power ? std::pow(rho, static_cast<double>(std::abs(i - j))) : rho);
  return s;
}

/// Lower Cholesky factor; throws SingularityError when not positive definite.
inline Matrix cholesky_factor(const Matrix& S) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw SingularityError("covariance is not positive definite");
  return llt.matrixL();
}

/// Entries b * Bern(q) * (+-1) + N(0, noise_sd^2), independently.
inline std::vector<Matrix> gen_coefficients(Index p, Index d, double q, double b, double noise_sd, Rng& rng) {
  require(p >= 1 && d >= 1, "gen_coefficients: p and d must be positive");
  require(q >= 0.0 && q <= 1.0, "gen_coefficients: q must lie in [0, 1]");
  require(noise_sd >= 0.0, "gen_coefficients: noise_sd must be nonnegative");
  std::vector<Matrix> out;
  for (Index l = 0; l < d; ++l) {
    Matrix a(p, p);
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) {
        double v = 0.0;
        if (rng.bernoulli(q)) v = rng.bernoulli(0.5) ? b : -b;
        if (noise_sd > 0.0) v += noise_sd * rng.normal();
        a(i, j) = v;
      }
    out.push_back(std::move(a));
  }
  return out;
}

/// Draws coefficients until the VAR is stationary (companion spectral
/// radius below `max_radius`). Also returns the spike mask used for
/// true-null bookkeeping: mask[l](i, j) is true when the +-b spike was drawn.
struct CoefficientDraw {
  std::vector<Matrix> coeffs;
  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> spikes;
  int attempts = 0;
};

inline CoefficientDraw gen_stable_coefficients(Index p, Index d, double q, double b, double noise_sd,
                                               const Matrix& noise_cov, Rng& rng, double max_radius = 0.999,
                                               int max_attempts = 1000) {
  require(q >= 0.0 && q <= 1.0 && noise_sd >= 0.0, "gen_stable_coefficients: invalid q or noise_sd");
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    CoefficientDraw draw;
    draw.attempts = attempt;
    for (Index l = 0; l < d; ++l) {
      Matrix a(p, p);
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(p, p);
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) {
          const bool spike = rng.bernoulli(q);
          double v = spike ? (rng.bernoulli(0.5) ? b : -b) : 0.0;
          if (noise_sd > 0.0) v += noise_sd * rng.normal();
          a(i, j) = v;
          mask(i, j) = spike;
        }
      draw.coeffs.push_back(std::move(a));
      draw.spikes.push_back(std::move(mask));
    }
    if (VarModel(draw.coeffs, noise_cov).spectral_radius() < max_radius) return draw;
  }
  throw InstabilityError("gen_stable_coefficients: no stationary draw within the attempt budget");
}

/// T x p series z_t = sum_l A^(l) z_{t-l} + zeta_t, started from zeros with
/// `burn_in` leading samples discarded.
inline Matrix gen_var_series(const VarModel& model, Index T, Index burn_in, Rng& rng, bool force = false) {
  require(T >= 1 && burn_in >= 0, "gen_var_series: need T >= 1 and burn_in >= 0");
  if (!force && model.spectral_radius() >= 1.0)
    throw InstabilityError("gen_var_series: model is not stationary");
  const Index p = model.p();
  const Index d = model.d();
  const Matrix chol = cholesky_factor(model.noise_cov());
  const Index total = T + burn_in;
  Matrix z = Matrix::Zero(total + d, p);  // first d rows are the zero initial state
  for (Index t = d; t < total + d; ++t) {
    Vector next = chol * rng.normal_vector(p);
    for (Index l = 0; l < d; ++l) next.noalias() += model.coeff(l) * z.row(t - 1 - l).transpose();
    z.row(t) = next.transpose();
  }
  return z.bottomRows(T);
}

/// Autocovariances Gamma(0), ..., Gamma(max_lag) with Gamma(l) = E[z_{t+l} z_t'],
/// from the spectral density by rectangle quadrature on `grid_size` nodes.
inline std::vector<Matrix> autocovariances(const VarModel& model, Index max_lag, int grid_size = 4096) {
  require(max_lag >= 0 && grid_size >= 64, "autocovariances: need max_lag >= 0 and grid_size >= 64");
  using Complex = std::complex<double>;
  const Index p = model.p();
  const Eigen::MatrixXcd noise = model.noise_cov().cast<Complex>();
  std::vector<Eigen::MatrixXcd> acc(static_cast<std::size_t>(max_lag + 1), Eigen::MatrixXcd::Zero(p, p));
  for (int k = 0; k < grid_size; ++k) {
    const double angle = -std::numbers::pi + 2.0 * std::numbers::pi * k / grid_size;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(characteristic_polynomial(model, std::polar(1.0, -angle)));
    if (!(lu.rcond() > 1e-13)) throw InstabilityError("autocovariances: characteristic polynomial singular on the unit circle");
    const Eigen::MatrixXcd inv = lu.inverse();
    const Eigen::MatrixXcd f = inv * noise * inv.adjoint();
    for (Index l = 0; l <= max_lag; ++l) acc[static_cast<std::size_t>(l)] += f * std::polar(1.0, static_cast<double>(l) * angle);
  }
  std::vector<Matrix> out;
  for (auto& m : acc) out.push_back(m.real() / static_cast<double>(grid_size));
  return out;
}

/// Gamma(ell) for any integer lag; Gamma(-ell) = Gamma(ell)'.
inline Matrix stationary_covariance(const VarModel& model, Index ell, int grid_size = 4096) {
  const Index lag = ell < 0 ? -ell : ell;
  Matrix g = autocovariances(model, lag, grid_size).back();
  return ell < 0 ? Matrix(g.transpose()) : g;
}

/// Population covariance of x_t = (z_{t+d-1}, ..., z_t): block (r, s) is
/// E[z_{t+d-1-r} z_{t+d-1-s}'] = Gamma(s - r).
inline Matrix block_covariance(const VarModel& model, int grid_size = 4096) {
  const Index p = model.p();
  const Index d = model.d();
  const auto gammas = autocovariances(model, d - 1, grid_size);
  Matrix S(d * p, d * p);
  for (Index r = 0; r < d; ++r)
    for (Index s = 0; s < d; ++s) {
      const Index lag = s - r;
      S.block(r * p, s * p, p, p) =
          lag >= 0 ? gammas[static_cast<std::size_t>(lag)] : Matrix(gammas[static_cast<std::size_t>(-lag)].transpose());
    }
  return S;
}

struct ConditionalMoments {
  double mean_xi1 = 0.0;
  double second_moment_xi1 = 1.0;
  /// E[x x' | <x, theta> >= varsigma_bar * sqrt(theta' Sigma theta)]
  Matrix Sigma2;
  /// Inverse of Sigma2.
  Matrix Omega2;
};

/// Moments of x ~ N(0, Sigma) conditioned on <x, theta> exceeding
/// varsigma_bar standard deviations. varsigma_bar = -inf means no conditioning.
inline ConditionalMoments conditional_moments(const Matrix& Sigma, const Vector& theta, double varsigma_bar) {
  require_dims(Sigma.rows() == Sigma.cols() && Sigma.rows() == theta.size(), "conditional_moments: size mismatch");
  require(!theta.isZero(0.0), "conditional_moments: theta must be nonzero");
  Eigen::LLT<Matrix> llt(Sigma);
  if (llt.info() != Eigen::Success) throw SingularityError("conditional_moments: Sigma is not positive definite");
  const Index p = Sigma.rows();
  ConditionalMoments out;
  const Matrix Omega = llt.solve(Matrix::Identity(p, p));
  if (std::isinf(varsigma_bar) && varsigma_bar < 0) {
    out.Sigma2 = Sigma;
    out.Omega2 = Omega;
    return out;
  }
  require(std::isfinite(varsigma_bar), "conditional_moments: threshold must be finite or -inf");
  const double tail = normal::sf(varsigma_bar);  // Phi(-varsigma_bar)
  const double dens = normal::pdf(varsigma_bar);
  out.mean_xi1 = dens / tail;
  out.second_moment_xi1 = 1.0 + varsigma_bar * dens / tail;
  const Vector st = Sigma * theta;
  const double q = theta.dot(st);
  out.Sigma2 = Sigma + (out.second_moment_xi1 - 1.0) * st * st.transpose() / q;
  const double shrink = varsigma_bar * dens / (tail + varsigma_bar * dens);
  out.Omega2 = Omega - shrink * theta * theta.transpose() / q;
  return out;
}

/// Draw from N(0, 1) truncated to [lower, inf) by inverse CDF.
inline double truncated_normal_upper(double lower, Rng& rng) {
  const double tail = normal::sf(lower);
  return -normal::quantile(rng.uniform() * tail);
}

/// n rows of x ~ N(0, Sigma) | <x, theta> >= varsigma_bar sqrt(theta' Sigma theta).
/// Uses x = w - Sigma theta <w, theta> / q + Sigma theta xi / sqrt(q) with
/// w ~ N(0, Sigma), q = theta' Sigma theta and xi a truncated normal.
inline Matrix sample_conditional(const Matrix& chol, const Matrix& Sigma, const Vector& theta, double varsigma_bar,
                                 Index n, Rng& rng) {
  const Index p = Sigma.rows();
  Matrix X = rng.normal_matrix(n, p) * chol.transpose();
  const bool unconditional = (std::isinf(varsigma_bar) && varsigma_bar < 0) || theta.isZero(0.0);
  if (unconditional) return X;
  const Vector st = Sigma * theta;
  const double q = theta.dot(st);
  const double root = std::sqrt(q);
  for (Index i = 0; i < n; ++i) {
    const double proj = X.row(i).dot(theta);
    const double xi = truncated_normal_upper(varsigma_bar, rng);
    X.row(i) += (st * (xi / root - proj / q)).transpose();
  }
  return X;
}

enum class IntermediateKind { debiased_lasso, ridge };

struct IntermediateSpec {
  IntermediateKind kind = IntermediateKind::debiased_lasso;
  /// Ridge penalty: theta = (X1'X1 + n1 lambda I)^{-1} X1'y1.
  double ridge_lambda = 0.1;
  /// LASSO penalty multiplier for the debiased-LASSO option:
  /// lambda = lasso_scale * lambda_max(Sigma) * sqrt(log p / n1).
  double lasso_scale = 2.5;
};

struct BatchData {
  BatchDesign design;
  /// True when batch 2 was drawn conditionally (false if theta_int = 0).
  bool selection_applied = true;
};

/// Batch 1 i.i.d. N(0, Sigma); intermediate estimate from batch 1; batch 2
/// drawn conditionally on <x, theta_int> exceeding varsigma_bar standard
/// deviations; y = <x, theta0> + sigma * N(0, 1).
inline BatchData gen_batch_data(const Vector& theta0, const Matrix& Sigma, Index n1, Index n2, double varsigma_bar,
                                const IntermediateSpec& intermediate, double sigma, Rng& rng) {
  const Index p = Sigma.rows();
  require_dims(Sigma.cols() == p && theta0.size() == p, "gen_batch_data: size mismatch");
  require(n1 >= 2 && n2 >= 0 && sigma > 0.0, "gen_batch_data: need n1 >= 2, n2 >= 0 and sigma > 0");
  const Matrix chol = cholesky_factor(Sigma);
  BatchData out;
  BatchDesign& D = out.design;
  D.X1 = rng.normal_matrix(n1, p) * chol.transpose();
  D.y1 = D.X1 * theta0 + sigma * rng.normal_vector(n1);

  if (intermediate.kind == IntermediateKind::ridge) {
    require(intermediate.ridge_lambda > 0.0, "gen_batch_data: ridge penalty must be positive");
    Matrix G = D.X1.transpose() * D.X1;
    G.diagonal().array() += static_cast<double>(n1) * intermediate.ridge_lambda;
    D.theta_int = G.llt().solve(D.X1.transpose() * D.y1);
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Sigma, Eigen::EigenvaluesOnly);
    LassoConfig lc;
    lc.lambda = intermediate.lasso_scale * eig.eigenvalues().maxCoeff() *
                std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n1));
    const Vector lasso1 = fit_lasso(D.X1, D.y1, lc).theta;
    RegressionProblem first{D.X1, D.y1, std::nullopt, std::nullopt, GenericOrigin{}};
    const Matrix Omega = Sigma.llt().solve(Matrix::Identity(p, p));
    D.theta_int = offline_debias(lasso1, first, Omega, sigma).theta;
  }

  out.selection_applied = !D.theta_int.isZero(0.0);
  D.varsigma_bar = varsigma_bar;
  D.X2 = sample_conditional(chol, Sigma, D.theta_int, varsigma_bar, n2, rng);
  D.y2 = D.X2 * theta0 + sigma * rng.normal_vector(n2);
  D.theta0 = theta0;
  D.sigma = sigma;
  return out;
}

/// Population precision of the pooled design, ((n1/n) Sigma + (n2/n) Sigma2)^{-1}.
inline Matrix pooled_precision(const Matrix& Sigma, const Vector& theta_int, double varsigma_bar, Index n1, Index n2) {
  const Index p = Sigma.rows();
  const double n = static_cast<double>(n1 + n2);
  Matrix mix = Sigma;
  if (n2 > 0 && !theta_int.isZero(0.0)) {
    const ConditionalMoments cm = conditional_moments(Sigma, theta_int, varsigma_bar);
    mix = (static_cast<double>(n1) / n) * Sigma + (static_cast<double>(n2) / n) * cm.Sigma2;
  }
  Eigen::LLT<Matrix> llt(mix);
  if (llt.info() != Eigen::Success) throw SingularityError("pooled_precision: mixture covariance not positive definite");
  return llt.solve(Matrix::Identity(p, p));
}

/// Tridiagonal covariance with `diag` on the diagonal and `off` next to it.
inline Matrix tridiagonal_covariance(Index p, double diag, double off) {
  Matrix S = Matrix::Zero(p, p);
  for (Index i = 0; i < p; ++i) {
    S(i, i) = diag;
    if (i + 1 < p) S(i, i + 1) = S(i + 1, i) = off;
  }
  return S;
}

}  // namespace odb
