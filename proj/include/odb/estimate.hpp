#pragma once

// Result type shared by the online and offline debiasing estimators.

#include "odb/core.hpp"

#include <optional>
#include <string>

namespace odb {

enum class Method { online_ts, online_batch, offline, offline_sparse, ridge_online };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::online_ts: return "online-ts";
    case Method::online_batch: return "online-batch";
    case Method::offline: return "offline";
    case Method::offline_sparse: return "offline-sparse";
    case Method::ridge_online: return "ridge-online";
  }
  return "unknown";
}

struct DebiasedEstimate {
  Vector theta;
  /// Per-coordinate V_{n,a}; the standard error of theta_a is sqrt(V_{n,a} / n).
  Vector variance;
  /// Noise component W_n, present when the true coefficients are known.
  std::optional<Vector> noise;
  /// Largest entry of the bias matrix B_n, when available.
  std::optional<double> bias_matrix_norm;
  /// Full conditional covariance V_n, when requested.
  std::optional<Matrix> covariance;
  Method method = Method::online_ts;
  Index n = 0;
  double sigma = 1.0;
};

}  // namespace odb
