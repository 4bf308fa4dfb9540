#pragma once

// Distance-to-normal summaries of a sample.

#include "odb/core.hpp"
#include "odb/normal.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace odb {

struct NormalityStats {
  double ks_distance = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
  /// (theoretical quantile at (i - 0.5)/m, i-th order statistic)
  std::vector<std::pair<double, double>> qq;
  /// (Phi(x_(i)), i/m)
  std::vector<std::pair<double, double>> pp;
};

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and Phi.
inline double ks_distance_normal(std::vector<double> samples) {
  require(!samples.empty(), "ks_distance_normal: empty sample");
  std::sort(samples.begin(), samples.end());
  const auto m = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = normal::cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

inline NormalityStats normality_diagnostics(const std::vector<double>& samples, bool with_pairs = true) {
  require(samples.size() >= 20, "normality_diagnostics: need at least 20 samples");
  for (double x : samples) require(std::isfinite(x), "normality_diagnostics: samples must be finite");
  NormalityStats out;
  out.count = samples.size();
  const auto m = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double x : samples) sum += x;
  out.mean = sum / m;
  double ss = 0.0;
  for (double x : samples) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / (m - 1.0));

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  out.ks_distance = ks_distance_normal(sorted);
  if (with_pairs) {
    out.qq.reserve(sorted.size());
    out.pp.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto k = static_cast<double>(i + 1);
      out.qq.emplace_back(normal::quantile((k - 0.5) / m), sorted[i]);
      out.pp.emplace_back(normal::cdf(sorted[i]), k / m);
    }
  }
  return out;
}

}  // namespace odb
