#include "odb/diagnostics.hpp"
#include "odb/inference.hpp"
#include "odb/simgen.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace odb;

namespace {

DebiasedEstimate make_est(const Vector& theta, const Vector& variance, Index n) {
  DebiasedEstimate e;
  e.theta = theta;
  e.variance = variance;
  e.n = n;
  return e;
}

// Brute force: largest k with p_(k) <= k alpha / (m H_m).
std::size_t by_count(std::vector<double> p, double alpha) {
  std::sort(p.begin(), p.end());
  double h = 0.0;
  for (std::size_t j = 1; j <= p.size(); ++j) h += 1.0 / static_cast<double>(j);
  std::size_t k = 0;
  for (std::size_t i = p.size(); i >= 1; --i)
    if (p[i - 1] <= static_cast<double>(i) * alpha / (static_cast<double>(p.size()) * h)) {
      k = i;
      break;
    }
  return k;
}

}  // namespace

TEST(Normal, QuantileRoundTrip) {
  for (double u : {1e-12, 1e-6, 0.01, 0.025, 0.3, 0.5, 0.77, 0.975, 0.999999}) EXPECT_NEAR(normal::cdf(normal::quantile(u)), u, 1e-14 + 1e-12 * u);
  EXPECT_NEAR(normal::upper_quantile(0.025), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal::sf(1.959963984540054), 0.025, 1e-14);
}

TEST(Inference, IntervalArithmetic) {
  Vector th(2), v(2);
  th << 0.5, -1.0;
  v << 4.0, 0.0;
  const auto e = make_est(th, v, 100);
  const auto ci = confidence_interval(e, 0, 0.05);
  EXPECT_NEAR(ci.high - 0.5, 1.959963984540054 * 0.2, 1e-12);
  EXPECT_NEAR(0.5 - ci.low, 1.959963984540054 * 0.2, 1e-12);
  EXPECT_TRUE(ci.contains(0.5));
  const auto degenerate = confidence_interval(e, 1, 0.05);
  EXPECT_EQ(degenerate.length(), 0.0);
  EXPECT_THROW(confidence_interval(e, 2, 0.05), DimensionError);
  EXPECT_THROW(confidence_interval(e, 0, 1.5), DomainError);
  EXPECT_EQ(confidence_interval(e, 0, 1.0).length(), 0.0);
}

TEST(Inference, PValues) {
  EXPECT_EQ(p_value(0.0, 1.0, 10), 1.0);
  EXPECT_EQ(p_value(0.0, 0.0, 10), 1.0);
  EXPECT_EQ(p_value(0.1, 0.0, 10), 0.0);
  EXPECT_NEAR(p_value(0.196, 1.0, 100), 0.05, 2e-4);
  EXPECT_NEAR(p_value(-0.196, 1.0, 100), p_value(0.196, 1.0, 100), 0.0);
  EXPECT_THROW(p_value(0.1, -1.0, 10), DomainError);
}

TEST(Inference, PValueMatchesIntervalExclusion) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Vector th(1), v(1);
    th << rng.normal() * 0.3;
    v << 0.5 + rng.uniform();
    const auto e = make_est(th, v, 50);
    EXPECT_EQ(!confidence_interval(e, 0, 0.1).contains(0.0), p_value(e, 0) < 0.1);
  }
}

TEST(Inference, BenjaminiYekutieliKnownCase) {
  const std::vector<double> p{0.001, 0.008, 0.039, 0.041, 0.042, 0.06, 0.074, 0.205, 0.212, 0.216};
  const auto r = benjamini_yekutieli(p, 0.05);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], 0u);
  EXPECT_TRUE(benjamini_yekutieli({}, 0.05).empty());
  EXPECT_EQ(benjamini_yekutieli({0.0, 0.0, 1.0}, 0.05), (std::vector<std::size_t>{0, 1}));
}

TEST(Inference, BenjaminiYekutieliMatchesBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform() * 30);
    std::vector<double> p;
    for (int i = 0; i < m; ++i) p.push_back(rng.bernoulli(0.3) ? rng.uniform() * 1e-3 : rng.uniform());
    const auto r = benjamini_yekutieli(p, 0.1);
    ASSERT_EQ(r.size(), by_count(p, 0.1));
    // Rejected set is exactly the r.size() smallest p-values.
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LE(p[r[i - 1]], p[r[i]]);
    for (std::size_t j = 0; j < p.size(); ++j)
      if (std::find(r.begin(), r.end(), j) == r.end() && !r.empty()) EXPECT_GE(p[j], p[r.back()]);
  }
}

TEST(Inference, BenjaminiYekutieliTiesKeepInputOrder) {
  const auto r = benjamini_yekutieli({0.001, 0.0001, 0.001, 0.9}, 0.2);
  EXPECT_EQ(r, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_THROW(benjamini_yekutieli({1.5}, 0.05), DomainError);
}

TEST(Inference, ReportIsConsistent) {
  Vector th(3), v(3);
  th << 0.0, 2.0, -0.05;
  v << 1.0, 1.0, 1.0;
  const auto rep = make_report(make_est(th, v, 100), 0.05);
  ASSERT_EQ(rep.coords.size(), 3u);
  EXPECT_FALSE(rep.coords[0].reject);
  EXPECT_TRUE(rep.coords[1].reject);
  EXPECT_EQ(rep.by_rejections, (std::vector<std::size_t>{1}));
}

TEST(GroupRegion, BoxMassAndWhitening) {
  Vector th(3), v(3);
  th << 1.0, 2.0, 3.0;
  v << 1.0, 1.0, 1.0;
  const auto e = make_est(th, v, 25);
  Matrix C = Matrix::Identity(3, 3);
  const GroupRegion g(e, {0, 2}, C);
  const double h = g.box_half_width(0.05);
  const double one = normal::cdf(h) - normal::cdf(-h);
  EXPECT_NEAR(one * one, 0.95, 1e-12);
  Vector pt(2);
  pt << 1.2, 3.0;
  EXPECT_LT((g.whiten(pt) - Vector::Unit(2, 0) ).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(g.contains(pt, 0.05));
  pt << 1.6, 3.0;
  EXPECT_FALSE(g.contains(pt, 0.05));
  EXPECT_THROW(GroupRegion(e, {0, 1}, Matrix::Zero(3, 3)), SingularityError);
  EXPECT_THROW(GroupRegion(e, {}, C), DomainError);
}

TEST(GroupRegion, MonteCarloCoverage) {
  // theta_hat ~ N(theta0, V/n) with correlated V: coverage of the box is 1 - alpha.
  Matrix V(2, 2);
  V << 2.0, 0.8, 0.8, 1.0;
  const Matrix L = V.llt().matrixL();
  Rng rng(21);
  const Index n = 40;
  int hit = 0;
  const int reps = 20000;
  Vector truth(2);
  truth << 0.3, -0.7;
  for (int r = 0; r < reps; ++r) {
    const Vector th = truth + L * rng.normal_vector(2) / std::sqrt(static_cast<double>(n));
    const auto e = make_est(th, V.diagonal(), n);
    hit += GroupRegion(e, {0, 1}, V).contains(truth, 0.1) ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(hit) / reps, 0.9, 0.01);
}

TEST(Diagnostics, KnownSampleStats) {
  std::vector<double> x;
  for (int i = 1; i <= 40; ++i) x.push_back(normal::quantile((i - 0.5) / 40.0));
  const auto s = normality_diagnostics(x);
  EXPECT_NEAR(s.ks_distance, 0.5 / 40.0, 1e-12);
  EXPECT_NEAR(s.mean, 0.0, 1e-12);
  EXPECT_EQ(s.qq.size(), 40u);
  EXPECT_NEAR(s.qq[3].first, s.qq[3].second, 1e-12);
  EXPECT_THROW(normality_diagnostics(std::vector<double>(19, 0.0)), DomainError);
}

TEST(Diagnostics, GaussianSampleIsClose) {
  Rng rng(1);
  std::vector<double> x;
  for (int i = 0; i < 5000; ++i) x.push_back(rng.normal());
  const auto s = normality_diagnostics(x, false);
  EXPECT_LT(s.ks_distance, 0.025);
  EXPECT_NEAR(s.sd, 1.0, 0.04);
  EXPECT_TRUE(s.qq.empty());
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 0.5;
  EXPECT_GT(ks_distance_normal(shifted), 0.15);
}

TEST(Inference, HandExamples) {
  const auto ci = confidence_interval(make_est(Vector::Zero(1), Vector::Ones(1), 100), 0, 0.05);
  EXPECT_NEAR(ci.high, 0.196, 5e-5);
  EXPECT_NEAR(ci.low, -0.196, 5e-5);
  const auto wide = confidence_interval(make_est(Vector::Zero(1), Vector::Constant(1, 50.0), 50), 0, 0.32);
  EXPECT_NEAR(wide.high, 0.9945, 5e-5);
  EXPECT_NEAR(p_value(1.95996, 1.0, 1), 0.05, 1e-5);
  EXPECT_LT(p_value(10.0, 1.0, 1), 1e-20);
  EXPECT_EQ(benjamini_yekutieli({0.001, 0.02, 0.03, 0.5}, 0.05).size(), 1u);
  EXPECT_TRUE(benjamini_yekutieli(std::vector<double>(5, 1.0), 0.05).empty());
  EXPECT_EQ(benjamini_yekutieli(std::vector<double>(5, 0.0), 0.05).size(), 5u);
}

TEST(Inference, DualityOnAlphaGrid) {
  Rng rng(17);
  for (int k = 1; k <= 20; ++k) {
    const double alpha = 0.0475 * k;
    for (int i = 0; i < 50; ++i) {
      Vector th(1), v(1);
      th << rng.normal() * 0.5;
      v << 0.2 + rng.uniform();
      const auto e = make_est(th, v, 30);
      EXPECT_EQ(p_value(e, 0) <= alpha, !confidence_interval(e, 0, alpha).contains(0.0));
    }
  }
}

TEST(GroupRegion, SpecExamples) {
  Vector th(2), v(2);
  th << 0.0, 0.0;
  v << 4.0, 9.0;
  Matrix C = Matrix::Zero(2, 2);
  C.diagonal() << 4.0, 9.0;
  const GroupRegion g(make_est(th, v, 1), {0, 1}, C);
  Vector pt(2);
  pt << 2.0, 3.0;
  EXPECT_LT((g.whiten(pt) - Vector::Ones(2)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(g.whiten(Vector::Zero(2)), Vector::Zero(2));

  // A single coordinate reduces to the scalar interval.
  const auto e = make_est(Vector::Constant(1, 0.4), Vector::Constant(1, 2.0), 20);
  const GroupRegion one(e, {0}, Matrix::Constant(1, 1, 2.0));
  const auto ci = confidence_interval(e, 0, 0.05);
  EXPECT_NEAR(one.box_half_width(0.05) * std::sqrt(2.0 / 20.0), ci.high - 0.4, 1e-12);
}
