#pragma once

// Shared aliases, error types and a small thread-pool-free parallel loop.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace odb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not line up (ragged series, X/y row mismatch, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Episode schedule cannot be built for the requested sizes.
class ScheduleError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be invertible / have a positive diagonal is not.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Residual degrees of freedom exhausted.
class DegreesOfFreedomError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Model is not stable on the unit circle.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

/// Runs body(i) for i in [0, count) on up to `threads` worker threads.
/// Work is handed out dynamically; body must only write to slot i.
/// The first exception thrown by any task is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t spawn = std::min(workers, count);
  pool.reserve(spawn);
  for (std::size_t w = 0; w < spawn; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// eta(z; mu): z - mu above mu, z + mu below -mu, 0 on [-mu, mu].
inline double soft_threshold(double z, double mu) {
  if (z > mu) return z - mu;
  if (z < -mu) return z + mu;
  return 0.0;
}

inline Vector soft_threshold(const Vector& z, double mu) {
  return z.unaryExpr([mu](double v) { return soft_threshold(v, mu); });
}

/// Largest absolute entry.
inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Matrix l1 -> l1 operator norm (largest column l1 norm).
inline double l1_operator_norm(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().colwise().sum().maxCoeff();
}

}  // namespace odb
