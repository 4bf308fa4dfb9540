#include "odb/debias_ts.hpp"
#include "odb/lasso.hpp"
#include "odb/simgen.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace odb;

namespace {

RegressionProblem var_problem(const VarModel& model, Index T, Index coord, std::uint64_t seed, std::uint64_t stream = 0) {
  Rng rng(seed, stream);
  const Matrix z = gen_var_series(model, T, 200, rng);
  auto prob = build_regression_view(z, model.d(), coord);
  prob.theta0 = model.row_target(coord);
  prob.sigma = std::sqrt(model.noise_cov()(coord, coord));
  return prob;
}

VarModel small_model() {
  Matrix A(3, 3);
  A << 0.4, 0.1, 0.0,
       0.0, 0.3, 0.2,
       0.1, 0.0, 0.2;
  return VarModel({A}, build_sigma_zeta(3, 0.3, CovKind::power));
}

EpisodeDecorrelatorConfig fixed_mu(double mu) {
  EpisodeDecorrelatorConfig c;
  c.c_mu.reset();
  c.L0.reset();
  c.solver.mu = mu;
  c.solver.tol = 1e-12;
  c.solver.max_iter = 100'000;
  return c;
}

DecorrelatorMatrix plain(const Matrix& M) {
  DecorrelatorMatrix d;
  d.M = M;
  return d;
}

}  // namespace

TEST(DebiasTs, SingleEpisodeFallsBackToLasso) {
  const auto prob = var_problem(small_model(), 40, 0, 1);
  const EpisodeSchedule one({prob.n()}, 1.3);
  const auto seq = build_M_sequence(prob, one, EpisodeDecorrelatorConfig{});
  EXPECT_TRUE(seq.empty());
  Vector theta(3);
  theta << 0.1, -0.2, 0.3;
  const auto est = online_debias_ts(theta, prob, one, seq, 1.0);
  EXPECT_EQ(est.theta, theta);
  EXPECT_TRUE(est.variance.isZero(0.0));
}

TEST(DebiasTs, ZeroResidualReturnsLassoExactly) {
  auto prob = var_problem(small_model(), 60, 1, 2);
  Vector theta(3);
  theta << 0.25, -0.5, 1.0 / 3.0;
  prob.y = prob.X * theta;
  const auto sched = make_schedule(prob.n(), 8, 1.3);
  const auto seq = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
  const auto est = online_debias_ts(theta, prob, sched, seq, 1.0);
  for (Index a = 0; a < 3; ++a) EXPECT_EQ(est.theta(a), theta(a));
}

TEST(DebiasTs, ZeroNoiseExactness) {
  auto prob = var_problem(small_model(), 60, 2, 3);
  prob.y = prob.X * *prob.theta0;
  const auto sched = make_schedule(prob.n(), 8, 1.3);
  const auto seq = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
  const auto est = online_debias_ts(*prob.theta0, prob, sched, seq, 1.0);
  EXPECT_EQ(est.theta, *prob.theta0);
  EXPECT_TRUE(est.noise->isZero(0.0));
}

TEST(DebiasTs, TinyMuRecoversPrefixInverse) {
  const auto prob = var_problem(small_model(), 51, 0, 4);
  const EpisodeSchedule two({40, prob.n() - 40}, 1.3);
  const auto seq = build_M_sequence(prob, two, fixed_mu(1e-10));
  ASSERT_EQ(seq.size(), 1u);
  const Matrix inv = prefix_covariance(prob.X, 40).inverse();
  EXPECT_LT((seq[0].M - inv).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DebiasTs, OrthonormalPrefixGivesShrunkIdentity) {
  RegressionProblem prob;
  prob.X = Matrix::Zero(6, 4);
  for (Index j = 0; j < 4; ++j) prob.X(j, j) = 2.0;  // prefix covariance = I
  prob.X.row(4) << 1, 2, 3, 4;
  prob.X.row(5) << -1, 0, 1, 0;
  prob.y = Vector::LinSpaced(6, 0.0, 1.0);
  const EpisodeSchedule sched({4, 2}, 1.3);
  const auto seq = build_M_sequence(prob, sched, fixed_mu(0.3));
  EXPECT_LT((seq[0].M - 0.7 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DebiasTs, MatchesSampleBySampleOracle) {
  const auto prob = var_problem(small_model(), 80, 1, 5);
  const auto sched = make_schedule(prob.n(), default_first_episode(prob.n()), 1.3);
  const auto seq = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
  Vector theta_l(3);
  theta_l << 0.05, 0.2, 0.1;
  const auto est = online_debias_ts(theta_l, prob, sched, seq, 1.3);

  // Independent oracle: walk samples one at a time, picking the decorrelator
  // of the episode each sample belongs to.
  Vector theta = theta_l;
  Vector var = Vector::Zero(3);
  Vector w = Vector::Zero(3);
  Matrix applied = Matrix::Zero(3, 3);
  Index episode = 0;
  for (Index t = 0; t < prob.n(); ++t) {
    while (episode + 1 < sched.episodes() && t >= sched.start(episode + 1)) ++episode;
    if (episode == 0) continue;
    const Matrix& M = seq[static_cast<std::size_t>(episode - 1)].M;
    const Vector x = prob.X.row(t).transpose();
    const Vector mx = M * x;
    theta += mx * (prob.y(t) - x.dot(theta_l)) / static_cast<double>(prob.n());
    var += mx.cwiseProduct(mx);
    w += mx * (prob.y(t) - x.dot(*prob.theta0));
    applied += mx * x.transpose();
  }
  const double n = static_cast<double>(prob.n());
  EXPECT_LT((est.theta - theta).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((est.variance - var * 1.69 / n).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((*est.noise - w / std::sqrt(n)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(*est.bias_matrix_norm, (std::sqrt(n) * (Matrix::Identity(3, 3) - applied / n)).cwiseAbs().maxCoeff(), 1e-10);
  // Decomposition: sqrt(n)(theta - theta0) = B (theta_L - theta0) + W.
  const Matrix B = std::sqrt(n) * (Matrix::Identity(3, 3) - applied / n);
  const Vector lhs = std::sqrt(n) * (est.theta - *prob.theta0);
  const Vector rhs = B * (theta_l - *prob.theta0) + *est.noise;
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DebiasTs, ConditionalVarianceArithmetic) {
  RegressionProblem prob;
  prob.X = Matrix::Ones(16, 1);
  prob.y = Vector::Zero(16);
  const auto sched = make_schedule(16, 4, 1.3);
  std::vector<DecorrelatorMatrix> seq(static_cast<std::size_t>(sched.episodes() - 1), plain(Matrix::Ones(1, 1)));
  EXPECT_NEAR(conditional_variance_ts(seq, prob, sched, 1.0)(0), 12.0 / 16.0, 1e-15);
  std::vector<DecorrelatorMatrix> zeros(seq.size(), plain(Matrix::Zero(1, 1)));
  EXPECT_EQ(conditional_variance_ts(zeros, prob, sched, 1.0)(0), 0.0);
}

TEST(DebiasTs, PredictabilityAudit) {
  const auto prob = var_problem(small_model(), 70, 0, 6);
  const auto sched = make_schedule(prob.n(), 8, 1.3);
  const auto base = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
  for (Index l = 1; l < sched.episodes(); ++l) {
    auto perturbed = prob;
    Rng rng(99, static_cast<std::uint64_t>(l));
    const Index from = sched.start(l);
    perturbed.X.bottomRows(prob.n() - from) += rng.normal_matrix(prob.n() - from, 3);
    perturbed.y.tail(prob.n() - from) += rng.normal_vector(prob.n() - from);
    const auto seq = build_M_sequence(perturbed, sched, EpisodeDecorrelatorConfig{});
    for (Index k = 1; k <= l; ++k)
      ASSERT_TRUE(seq[static_cast<std::size_t>(k - 1)].M == base[static_cast<std::size_t>(k - 1)].M)
          << "episode " << k << " changed after perturbing from episode " << l;
  }
}

TEST(DebiasTs, ShapeErrors) {
  const auto prob = var_problem(small_model(), 40, 0, 7);
  const auto sched = make_schedule(prob.n(), 6, 1.3);
  const auto seq = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
  EXPECT_THROW(online_debias_ts(Vector::Zero(4), prob, sched, seq, 1.0), DimensionError);
  std::vector<DecorrelatorMatrix> short_seq(seq.begin(), seq.end() - 1);
  EXPECT_THROW(online_debias_ts(Vector::Zero(3), prob, sched, short_seq, 1.0), DimensionError);
  const auto other = make_schedule(prob.n() - 1, 6, 1.3);
  EXPECT_THROW(build_M_sequence(prob, other, EpisodeDecorrelatorConfig{}), DimensionError);
}

TEST(DebiasTs, NoiseTermIsCentered) {
  // Mean of the studentized noise W_a / sqrt(V_a) over 500 replicates stays
  // within 3 / sqrt(500) of zero.
  const VarModel model = small_model();
  const int reps = 500;
  Vector sum = Vector::Zero(3);
  for (int r = 0; r < reps; ++r) {
    const auto prob = var_problem(model, 61, 0, 2024, static_cast<std::uint64_t>(r));
    const auto sched = make_schedule(prob.n(), default_first_episode(prob.n()), 1.3);
    const auto seq = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
    const auto est = online_debias_ts(Vector::Zero(3), prob, sched, seq, *prob.sigma);
    sum += est.noise->cwiseQuotient(est.variance.cwiseSqrt());
  }
  const Vector mean = sum / reps;
  for (Index a = 0; a < 3; ++a) EXPECT_LT(std::abs(mean(a)), 3.0 / std::sqrt(static_cast<double>(reps)));
}

TEST(DebiasTs, VarianceApproachesPrecisionDiagonal) {
  // With mu -> 0, V_{n,a} -> sigma^2 Omega_aa where Omega inverts the
  // stationary covariance of x_t.
  const VarModel model = small_model();
  const Matrix Omega = block_covariance(model).inverse();
  Vector mean_v = Vector::Zero(3);
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    const auto prob = var_problem(model, 501, 1, 77, static_cast<std::uint64_t>(r));
    const auto sched = make_schedule(prob.n(), default_first_episode(prob.n()), 1.3);
    const auto seq = build_M_sequence(prob, sched, fixed_mu(1e-6));
    mean_v += conditional_variance_ts(seq, prob, sched, *prob.sigma) / reps;
  }
  const double s2 = model.noise_cov()(1, 1);
  for (Index a = 0; a < 3; ++a) EXPECT_NEAR(mean_v(a) / (s2 * Omega(a, a)), 1.0, 0.15);
}

TEST(DebiasTs, VarianceIsStableAcrossReplicates) {
  // Coefficient of variation of V_{n,a} across replicates at n = 500 for the
  // approximately sparse VAR(3) with p = 20, r0 = 6 and beta = 1.3.
  Rng coef_rng(5);
  const Matrix Sz = build_sigma_zeta(20, 0.3, CovKind::equi);
  const auto draw = gen_stable_coefficients(20, 3, 0.1, 0.1, 1.0 / 20, Sz, coef_rng);
  const VarModel model(draw.coeffs, Sz);
  const int reps = 100;
  std::vector<Vector> vs;
  for (int r = 0; r < reps; ++r) {
    const auto prob = var_problem(model, 503, 0, 31, static_cast<std::uint64_t>(r));
    const auto sched = make_schedule(prob.n(), 6, 1.3);
    const auto seq = build_M_sequence(prob, sched, EpisodeDecorrelatorConfig{});
    vs.push_back(conditional_variance_ts(seq, prob, sched, 1.0));
  }
  for (Index a = 0; a < 60; ++a) {
    double m = 0, s = 0;
    for (const auto& v : vs) m += v(a) / reps;
    for (const auto& v : vs) s += (v(a) - m) * (v(a) - m) / (reps - 1);
    EXPECT_LT(std::sqrt(s) / m, 0.2) << "coordinate " << a;
  }
}
