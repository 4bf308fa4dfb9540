#pragma once

// Monte Carlo experiments: generate data, fit LASSO, debias with each
// requested method, run inference and aggregate FPR/TPR/coverage/CI length
// plus normality summaries of the rescaled residuals.

#include "odb/core.hpp"
#include "odb/debias_batch.hpp"
#include "odb/debias_offline.hpp"
#include "odb/debias_ts.hpp"
#include "odb/diagnostics.hpp"
#include "odb/inference.hpp"
#include "odb/io.hpp"
#include "odb/lasso.hpp"
#include "odb/model.hpp"
#include "odb/simgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace odb {

enum class Scenario { ts, batch };

inline std::string to_string(Scenario s) { return s == Scenario::ts ? "ts" : "batch"; }

/// Method names used in configs and outputs.
inline Method parse_method(const std::string& s) {
  if (s == "online") return Method::online_ts;
  if (s == "offline") return Method::offline;
  if (s == "offline-sparse") return Method::offline_sparse;
  if (s == "ridge-online") return Method::ridge_online;
  throw DomainError("unknown method '" + s + "' (expected online, offline, offline-sparse or ridge-online)");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::online_ts:
    case Method::online_batch:
      return "online";
    case Method::offline:
      return "offline";
    case Method::offline_sparse:
      return "offline-sparse";
    case Method::ridge_online:
      return "ridge-online";
  }
  return "?";
}

struct ExperimentConfig {
  std::string name = "experiment";
  Scenario scenario = Scenario::ts;

  // time series
  Index p = 40;
  Index d = 1;
  Index T = 30;
  double q = 0.01;
  double b = 2.0;
  double rho = 0.1;
  CovKind noise_kind = CovKind::power;
  /// Dense N(0, coef_noise_sd^2) perturbation added to every coefficient.
  double coef_noise_sd = 0.0;
  /// A^(l) = b I for every lag instead of random spikes.
  bool diagonal_coefficients = false;
  Index burn_in = 200;
  /// Response coordinates regressed; empty means all p.
  std::vector<Index> rows;

  // batch
  Index n1 = 500;
  Index n2 = 500;
  Index s0 = 10;
  double signal = 1.0;
  double varsigma_bar = 1.0;
  double design_off_diagonal = 0.1;
  IntermediateSpec intermediate;
  double noise_sigma = 1.0;
  /// Batch LASSO penalty: lasso_scale * lambda_max(Sigma) * sigma * sqrt(log p / n).
  double lasso_scale = 2.5;

  // estimator chain
  double lambda0 = 1.0;
  double c_mu = 0.6;
  double L0 = 2.0;
  double ridge = 1.0;
  /// First episode length; 0 means ceil(sqrt(n)).
  Index r0 = 6;
  double beta = 1.3;
  double tau = 1.0;
  double ridge_online_lambda = 1.0;
  std::vector<Method> methods{Method::online_ts};
  /// "all", "support", or "list" (uses `coord_list`).
  std::string coords = "all";
  std::vector<Index> coord_list;

  double alpha = 0.05;
  int replicates = 20;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const {
    require(replicates >= 1, "config: replicates must be >= 1");
    require(alpha > 0.0 && alpha <= 1.0, "config: alpha must lie in (0, 1]");
    require(!methods.empty(), "config: at least one method is required");
    require(coords == "all" || coords == "support" || coords == "list", "config: coords must be all, support or list");
    require(coords != "list" || !coord_list.empty(), "config: coords = list needs coord_list");
    require(c_mu > 0.0 && L0 >= 0.0 && ridge > 0.0 && tau > 0.0 && ridge_online_lambda > 0.0,
            "config: c_mu, ridge, tau and ridge_online_lambda must be positive and L0 nonnegative");
    require(beta > 1.0, "config: beta must exceed 1");
    require(threads >= 1, "config: threads must be >= 1");
    if (scenario == Scenario::ts) {
      require(p >= 1 && d >= 1 && T > d + 1, "config: need p, d >= 1 and T > d + 1");
      require(q >= 0.0 && q <= 1.0 && std::abs(rho) < 1.0, "config: need q in [0, 1] and |rho| < 1");
      for (Index i : rows) require_dims(i >= 0 && i < p, "config: row index out of range");
      for (Index a : coord_list) require_dims(a >= 0 && a < d * p, "config: coordinate out of range");
    } else {
      require(n1 >= 2 && n2 >= 0 && p >= 2, "config: need n1 >= 2, n2 >= 0 and p >= 2");
      require(s0 >= 0 && s0 <= p, "config: s0 must lie in [0, p]");
      require(noise_sigma > 0.0, "config: noise_sigma must be positive");
      for (Index a : coord_list) require_dims(a >= 0 && a < p, "config: coordinate out of range");
    }
  }
};

/// One (replicate, regression, coordinate, method) outcome.
struct Record {
  int replicate = 0;
  Index row = 0;
  Index coord = 0;
  Method method = Method::online_ts;
  Index n = 0;
  double theta0 = 0.0;
  double lasso = 0.0;
  double estimate = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  bool is_null = true;
  bool covered = false;
  bool rejected = false;
  /// Noise term W_a (sqrt(n)-scaled); NaN when unavailable.
  double noise = std::numeric_limits<double>::quiet_NaN();

  /// sqrt(n / V) (estimate - theta0); NaN when V = 0.
  [[nodiscard]] double rescaled_residual() const {
    return variance > 0.0 ? std::sqrt(static_cast<double>(n) / variance) * (estimate - theta0)
                          : std::numeric_limits<double>::quiet_NaN();
  }
  /// W_a / sqrt(V_a); NaN when unavailable.
  [[nodiscard]] double studentized_noise() const {
    return variance > 0.0 ? noise / std::sqrt(variance) : std::numeric_limits<double>::quiet_NaN();
  }
};

struct Exclusion {
  int replicate = 0;
  std::string reason;
};

struct MetricsRow {
  Method method = Method::online_ts;
  double fpr = std::numeric_limits<double>::quiet_NaN();
  double tpr = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  /// Mean of 2 Phi^{-1}(1 - alpha/2) sqrt(V_a), the sqrt(n)-scaled interval.
  double avg_ci_length = std::numeric_limits<double>::quiet_NaN();
  /// Mean of the interval length 2 Phi^{-1}(1 - alpha/2) sqrt(V_a / n).
  double avg_ci_length_raw = std::numeric_limits<double>::quiet_NaN();
  /// Mean estimate over coordinates where the true-null flag is false.
  double nonnull_mean = std::numeric_limits<double>::quiet_NaN();
  std::size_t nulls = 0;
  std::size_t nonnulls = 0;
  std::size_t coordinates = 0;
  int replicates_used = 0;
  int replicates_excluded = 0;
  std::optional<NormalityStats> residual;
  std::optional<NormalityStats> noise;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<MetricsRow> metrics;
  std::vector<Record> records;
  std::vector<Exclusion> exclusions;
};

struct TsSample {
  CoefficientDraw draw;
  Matrix noise_cov;
  /// T x p series.
  Matrix z;
  [[nodiscard]] VarModel model() const { return VarModel(draw.coeffs, noise_cov); }
};

struct BatchSample {
  Matrix Sigma;
  Vector theta0;
  BatchData data;
};

/// Data of replicate `rep`: coefficients (fresh per replicate) and series,
/// all drawn from stream `rep` of the configured seed.
inline TsSample simulate_ts(const ExperimentConfig& cfg, int rep) {
  Rng rng(cfg.seed, static_cast<std::uint64_t>(rep));
  TsSample s;
  s.noise_cov = build_sigma_zeta(cfg.p, cfg.rho, cfg.noise_kind);
  if (cfg.diagonal_coefficients) {
    for (Index l = 0; l < cfg.d; ++l) {
      s.draw.coeffs.push_back(cfg.b * Matrix::Identity(cfg.p, cfg.p));
      s.draw.spikes.push_back(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Identity(cfg.p, cfg.p));
    }
    s.draw.attempts = 1;
  } else {
    s.draw = gen_stable_coefficients(cfg.p, cfg.d, cfg.q, cfg.b, cfg.coef_noise_sd, s.noise_cov, rng);
  }
  s.z = gen_var_series(s.model(), cfg.T, cfg.burn_in, rng);
  return s;
}

/// Tridiagonal design, support of size s0 drawn uniformly, then both batches.
inline BatchSample simulate_batch(const ExperimentConfig& cfg, int rep) {
  Rng rng(cfg.seed, static_cast<std::uint64_t>(rep));
  BatchSample s;
  s.Sigma = tridiagonal_covariance(cfg.p, 1.0, cfg.design_off_diagonal);
  std::vector<Index> perm(static_cast<std::size_t>(cfg.p));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  s.theta0 = Vector::Zero(cfg.p);
  for (Index k = 0; k < cfg.s0; ++k) s.theta0(perm[static_cast<std::size_t>(k)]) = cfg.signal;
  s.data = gen_batch_data(s.theta0, s.Sigma, cfg.n1, cfg.n2, cfg.varsigma_bar, cfg.intermediate, cfg.noise_sigma, rng);
  return s;
}

namespace detail {

inline std::vector<Index> all_indices(Index count) {
  std::vector<Index> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

inline EpisodeDecorrelatorConfig episode_config(const ExperimentConfig& cfg, const std::vector<Index>& coords) {
  EpisodeDecorrelatorConfig ec;
  ec.c_mu = cfg.c_mu;
  if (cfg.L0 > 0.0)
    ec.L0 = cfg.L0;
  else
    ec.L0.reset();
  ec.ridge = cfg.ridge;
  ec.rows = coords;
  return ec;
}

inline void check_rows(const DecorrelatorMatrix& M) {
  for (const auto& r : M.rows) {
    if (r.unbounded_below) throw SingularityError("decorrelator program unbounded below after all mu doublings");
    if (!r.m.allFinite()) throw SingularityError("decorrelator returned non-finite entries");
  }
}

inline void append_records(std::vector<Record>& out, int rep, Index row, const DebiasedEstimate& est,
                           const Vector& theta_lasso, const Vector& theta0, const std::vector<Index>& coords,
                           const std::vector<bool>& is_null, double alpha) {
  if (!est.theta.allFinite() || !est.variance.allFinite()) throw SingularityError("estimate is not finite");
  for (Index a : coords) {
    Record r;
    r.replicate = rep;
    r.row = row;
    r.coord = a;
    r.method = est.method;
    r.n = est.n;
    r.theta0 = theta0(a);
    r.lasso = theta_lasso(a);
    r.estimate = est.theta(a);
    r.variance = est.variance(a);
    const Interval ci = confidence_interval(est, a, alpha);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
    r.p_value = p_value(est, a);
    r.is_null = is_null[static_cast<std::size_t>(a)];
    r.covered = ci.contains(r.theta0);
    r.rejected = r.p_value <= alpha;
    if (est.noise) r.noise = (*est.noise)(a);
    out.push_back(r);
  }
}

inline std::vector<Index> pick_coords(const ExperimentConfig& cfg, const std::vector<bool>& is_null) {
  if (cfg.coords == "list") return cfg.coord_list;
  if (cfg.coords == "support") {
    std::vector<Index> v;
    for (std::size_t a = 0; a < is_null.size(); ++a)
      if (!is_null[a]) v.push_back(static_cast<Index>(a));
    return v;
  }
  return all_indices(static_cast<Index>(is_null.size()));
}

/// Rows of M for a single full-sample covariance, with the same mu and
/// budget rules as one online episode.
inline DecorrelatorMatrix offline_decorrelator(const RegressionProblem& prob, const ExperimentConfig& cfg,
                                               const std::vector<Index>& coords) {
  const Matrix S = prefix_covariance(prob.X, prob.n());
  const EpisodeDecorrelatorConfig ec = episode_config(cfg, coords);
  return solve_decorrelator(S, resolve_episode_config(S, prob.n(), ec), nullptr, 1, coords);
}

inline std::vector<Record> run_ts_replicate(const ExperimentConfig& cfg, int rep) {
  const TsSample sample = simulate_ts(cfg, rep);
  const CoefficientDraw& draw = sample.draw;
  const Matrix& Sz = sample.noise_cov;
  const Matrix& z = sample.z;
  const VarModel model = sample.model();
  const std::vector<Index> rows = cfg.rows.empty() ? all_indices(cfg.p) : cfg.rows;

  std::vector<Record> out;
  for (Index i : rows) {
    RegressionProblem prob = build_regression_view(z, cfg.d, i);
    prob.theta0 = model.row_target(i);
    const double sigma = std::sqrt(Sz(i, i));
    prob.sigma = sigma;
    const Index p0 = prob.p0();
    std::vector<bool> is_null(static_cast<std::size_t>(p0));
    for (Index a = 0; a < p0; ++a)
      is_null[static_cast<std::size_t>(a)] = !draw.spikes[static_cast<std::size_t>(a / cfg.p)](i, a % cfg.p);
    const std::vector<Index> coords = pick_coords(cfg, is_null);
    if (coords.empty()) continue;

    LassoConfig lc;
    lc.lambda = default_lambda(static_cast<double>(prob.n()), static_cast<double>(p0), sigma, cfg.lambda0);
    const Vector theta_l = fit_lasso(prob, lc).theta;

    for (Method m : cfg.methods) {
      DebiasedEstimate est;
      if (m == Method::online_ts || m == Method::online_batch) {
        const Index r0 = cfg.r0 > 0 ? cfg.r0 : default_first_episode(prob.n());
        const EpisodeSchedule sched = make_schedule(prob.n(), r0, cfg.beta);
        const auto seq = build_M_sequence(prob, sched, episode_config(cfg, coords));
        for (const auto& M : seq) check_rows(M);
        est = online_debias_ts(theta_l, prob, sched, seq, sigma);
      } else if (m == Method::offline) {
        const auto M = offline_decorrelator(prob, cfg, coords);
        check_rows(M);
        est = offline_debias(theta_l, prob, M.M, sigma, Method::offline);
      } else if (m == Method::offline_sparse) {
        const Matrix S = prefix_covariance(prob.X, prob.n());
        const auto M = build_offline_M(S, offline_mu(prob.n(), p0, cfg.tau), DecorrelatorConfig{}, 1, coords);
        check_rows(M);
        est = offline_debias(theta_l, prob, M.M, sigma, Method::offline_sparse);
      } else {
        est = ridge_online_baseline(theta_l, prob, cfg.ridge_online_lambda, sigma, coords);
      }
      append_records(out, rep, i, est, theta_l, *prob.theta0, coords, is_null, cfg.alpha);
    }
  }
  return out;
}

inline std::vector<Record> run_batch_replicate(const ExperimentConfig& cfg, int rep) {
  const BatchSample sample = simulate_batch(cfg, rep);
  const Matrix& Sigma = sample.Sigma;
  const Vector& theta0 = sample.theta0;
  const BatchData& data = sample.data;
  const BatchDesign& D = data.design;
  const RegressionProblem prob = D.stacked();
  const double sigma = cfg.noise_sigma;
  std::vector<bool> is_null(static_cast<std::size_t>(cfg.p));
  for (Index a = 0; a < cfg.p; ++a) is_null[static_cast<std::size_t>(a)] = theta0(a) == 0.0;
  const std::vector<Index> coords = pick_coords(cfg, is_null);
  if (coords.empty()) return {};

  Eigen::SelfAdjointEigenSolver<Matrix> eig(Sigma, Eigen::EigenvaluesOnly);
  LassoConfig lc;
  lc.lambda = cfg.lasso_scale * eig.eigenvalues().maxCoeff() * sigma *
              std::sqrt(std::log(static_cast<double>(cfg.p)) / static_cast<double>(prob.n()));
  const Vector theta_l = fit_lasso(prob, lc).theta;

  std::vector<Record> out;
  for (Method m : cfg.methods) {
    DebiasedEstimate est;
    if (m == Method::online_ts || m == Method::online_batch) {
      const auto [M1, M2] = build_batch_decorrelators(D, episode_config(cfg, coords));
      check_rows(M1);
      check_rows(M2);
      est = online_debias_batch(theta_l, D, M1, M2, sigma);
    } else if (m == Method::offline) {
      const Matrix Omega = pooled_precision(Sigma, D.theta_int, cfg.varsigma_bar, cfg.n1, cfg.n2);
      est = offline_debias(theta_l, prob, Omega, sigma, Method::offline);
    } else if (m == Method::offline_sparse) {
      const Matrix S = prefix_covariance(prob.X, prob.n());
      const auto M = build_offline_M(S, offline_mu(prob.n(), cfg.p, cfg.tau), DecorrelatorConfig{}, 1, coords);
      check_rows(M);
      est = offline_debias(theta_l, prob, M.M, sigma, Method::offline_sparse);
    } else {
      est = ridge_online_baseline(theta_l, prob, cfg.ridge_online_lambda, sigma, coords);
    }
    append_records(out, rep, 0, est, theta_l, theta0, coords, is_null, cfg.alpha);
  }
  return out;
}

inline std::optional<NormalityStats> normality_or_none(const std::vector<double>& v) {
  if (v.size() < 20) return std::nullopt;
  return normality_diagnostics(v);
}

}  // namespace detail

/// Aggregates records for one method. Used both by run_experiment and to
/// recompute the summary from emitted records.
inline MetricsRow aggregate(const std::vector<Record>& records, Method method, double alpha) {
  MetricsRow row;
  row.method = method;
  std::size_t fp = 0, tp = 0, covered = 0;
  double len = 0.0, len_raw = 0.0, nonnull_sum = 0.0;
  std::vector<double> resid, noise;
  std::set<int> reps;
  const double zq = 2.0 * normal::upper_quantile(alpha / 2.0);
  // Canonical order so the sums do not depend on how records arrive.
  std::vector<const Record*> mine;
  for (const auto& r : records)
    if (method_name(r.method) == method_name(method)) mine.push_back(&r);
  std::sort(mine.begin(), mine.end(), [](const Record* x, const Record* y) {
    return std::tie(x->replicate, x->row, x->coord) < std::tie(y->replicate, y->row, y->coord);
  });
  for (const Record* rp : mine) {
    const Record& r = *rp;
    reps.insert(r.replicate);
    ++row.coordinates;
    if (r.is_null) {
      ++row.nulls;
      fp += r.rejected ? 1 : 0;
    } else {
      ++row.nonnulls;
      tp += r.rejected ? 1 : 0;
      nonnull_sum += r.estimate;
    }
    covered += r.covered ? 1 : 0;
    len += zq * std::sqrt(r.variance);
    len_raw += r.ci_high - r.ci_low;
    const double z = r.rescaled_residual();
    if (std::isfinite(z)) resid.push_back(z);
    const double w = r.studentized_noise();
    if (std::isfinite(w)) noise.push_back(w);
  }
  row.replicates_used = static_cast<int>(reps.size());
  if (row.nulls > 0) row.fpr = static_cast<double>(fp) / static_cast<double>(row.nulls);
  if (row.nonnulls > 0) {
    row.tpr = static_cast<double>(tp) / static_cast<double>(row.nonnulls);
    row.nonnull_mean = nonnull_sum / static_cast<double>(row.nonnulls);
  }
  if (row.coordinates > 0) {
    const auto c = static_cast<double>(row.coordinates);
    row.coverage = static_cast<double>(covered) / c;
    row.avg_ci_length = len / c;
    row.avg_ci_length_raw = len_raw / c;
  }
  row.residual = detail::normality_or_none(resid);
  row.noise = detail::normality_or_none(noise);
  return row;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult res;
  res.config = config;
  const auto reps = static_cast<std::size_t>(config.replicates);
  std::vector<std::vector<Record>> per(reps);
  std::vector<std::optional<std::string>> failed(reps);
  parallel_for(reps, config.threads, [&](std::size_t r) {
    try {
      per[r] = config.scenario == Scenario::ts ? detail::run_ts_replicate(config, static_cast<int>(r))
                                               : detail::run_batch_replicate(config, static_cast<int>(r));
    } catch (const Error& e) {
      per[r].clear();
      failed[r] = e.what();
    }
  });
  for (std::size_t r = 0; r < reps; ++r) {
    if (failed[r]) {
      res.exclusions.push_back({static_cast<int>(r), *failed[r]});
      continue;
    }
    res.records.insert(res.records.end(), per[r].begin(), per[r].end());
  }
  for (Method m : config.methods) {
    MetricsRow row = aggregate(res.records, m, config.alpha);
    row.replicates_excluded = static_cast<int>(res.exclusions.size());
    res.metrics.push_back(std::move(row));
  }
  return res;
}

// ---------------------------------------------------------------------------
// JSON configuration

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "name",  "scenario", "p",      "d",       "T",         "q",         "b",
      "rho",   "noise_kind", "coef_noise_sd", "diagonal_coefficients", "burn_in", "rows",
      "n1",    "n2",       "s0",     "signal",  "varsigma_bar", "design_off_diagonal", "intermediate",
      "ridge_intermediate_lambda", "intermediate_lasso_scale", "noise_sigma", "lasso_scale",
      "lambda0", "c_mu",   "L0",     "ridge",   "r0",        "beta",      "tau",
      "ridge_online_lambda", "methods", "coords", "coord_list", "alpha", "replicates", "seed", "threads"};
  require(j.is_object(), "config: top level must be a JSON object");
  for (const auto& [k, v] : j.items()) require(known.count(k) > 0, "config: unknown key '" + k + "'");
  ExperimentConfig c;
  try {
    detail::read_opt(j, "name", c.name);
    if (j.contains("scenario")) {
      const auto s = j.at("scenario").get<std::string>();
      require(s == "ts" || s == "batch", "config: scenario must be ts or batch");
      c.scenario = s == "ts" ? Scenario::ts : Scenario::batch;
    }
    detail::read_opt(j, "p", c.p);
    detail::read_opt(j, "d", c.d);
    detail::read_opt(j, "T", c.T);
    detail::read_opt(j, "q", c.q);
    detail::read_opt(j, "b", c.b);
    detail::read_opt(j, "rho", c.rho);
    if (j.contains("noise_kind")) c.noise_kind = parse_cov_kind(j.at("noise_kind").get<std::string>());
    detail::read_opt(j, "coef_noise_sd", c.coef_noise_sd);
    detail::read_opt(j, "diagonal_coefficients", c.diagonal_coefficients);
    detail::read_opt(j, "burn_in", c.burn_in);
    detail::read_opt(j, "rows", c.rows);
    detail::read_opt(j, "n1", c.n1);
    detail::read_opt(j, "n2", c.n2);
    detail::read_opt(j, "s0", c.s0);
    detail::read_opt(j, "signal", c.signal);
    if (j.contains("varsigma_bar")) {
      const auto& v = j.at("varsigma_bar");
      c.varsigma_bar = v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>();
    }
    detail::read_opt(j, "design_off_diagonal", c.design_off_diagonal);
    if (j.contains("intermediate")) {
      const auto s = j.at("intermediate").get<std::string>();
      require(s == "debiased-lasso" || s == "ridge", "config: intermediate must be debiased-lasso or ridge");
      c.intermediate.kind = s == "ridge" ? IntermediateKind::ridge : IntermediateKind::debiased_lasso;
    }
    detail::read_opt(j, "ridge_intermediate_lambda", c.intermediate.ridge_lambda);
    detail::read_opt(j, "intermediate_lasso_scale", c.intermediate.lasso_scale);
    detail::read_opt(j, "noise_sigma", c.noise_sigma);
    detail::read_opt(j, "lasso_scale", c.lasso_scale);
    detail::read_opt(j, "lambda0", c.lambda0);
    detail::read_opt(j, "c_mu", c.c_mu);
    detail::read_opt(j, "L0", c.L0);
    detail::read_opt(j, "ridge", c.ridge);
    detail::read_opt(j, "r0", c.r0);
    detail::read_opt(j, "beta", c.beta);
    detail::read_opt(j, "tau", c.tau);
    detail::read_opt(j, "ridge_online_lambda", c.ridge_online_lambda);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
      if (c.scenario == Scenario::batch)
        for (auto& m : c.methods)
          if (m == Method::online_ts) m = Method::online_batch;
    } else if (c.scenario == Scenario::batch) {
      c.methods = {Method::online_batch};
    }
    detail::read_opt(j, "coords", c.coords);
    detail::read_opt(j, "coord_list", c.coord_list);
    detail::read_opt(j, "alpha", c.alpha);
    detail::read_opt(j, "replicates", c.replicates);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["scenario"] = to_string(c.scenario);
  if (c.scenario == Scenario::ts) {
    j["p"] = c.p;
    j["d"] = c.d;
    j["T"] = c.T;
    j["q"] = c.q;
    j["b"] = c.b;
    j["rho"] = c.rho;
    j["noise_kind"] = to_string(c.noise_kind);
    j["coef_noise_sd"] = c.coef_noise_sd;
    j["diagonal_coefficients"] = c.diagonal_coefficients;
    j["burn_in"] = c.burn_in;
    j["rows"] = c.rows;
    j["lambda0"] = c.lambda0;
    j["r0"] = c.r0;
    j["beta"] = c.beta;
  } else {
    j["p"] = c.p;
    j["n1"] = c.n1;
    j["n2"] = c.n2;
    j["s0"] = c.s0;
    j["signal"] = c.signal;
    j["varsigma_bar"] = std::isfinite(c.varsigma_bar) ? nlohmann::json(c.varsigma_bar) : nlohmann::json(nullptr);
    j["design_off_diagonal"] = c.design_off_diagonal;
    j["intermediate"] = c.intermediate.kind == IntermediateKind::ridge ? "ridge" : "debiased-lasso";
    j["ridge_intermediate_lambda"] = c.intermediate.ridge_lambda;
    j["intermediate_lasso_scale"] = c.intermediate.lasso_scale;
    j["noise_sigma"] = c.noise_sigma;
    j["lasso_scale"] = c.lasso_scale;
  }
  j["c_mu"] = c.c_mu;
  j["L0"] = c.L0;
  j["ridge"] = c.ridge;
  j["tau"] = c.tau;
  j["ridge_online_lambda"] = c.ridge_online_lambda;
  std::vector<std::string> ms;
  for (Method m : c.methods) ms.push_back(method_name(m));
  j["methods"] = ms;
  j["coords"] = c.coords;
  j["coord_list"] = c.coord_list;
  j["alpha"] = c.alpha;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

// ---------------------------------------------------------------------------
// Output files

inline nlohmann::json records_json(const ExperimentResult& res) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : res.records) {
    nlohmann::json o{{"replicate", r.replicate}, {"row", r.row},           {"coord", r.coord},
                     {"method", method_name(r.method)},                   {"n", r.n},
                     {"theta0", r.theta0},       {"lasso", r.lasso},       {"estimate", r.estimate},
                     {"variance", r.variance},   {"ci_low", r.ci_low},     {"ci_high", r.ci_high},
                     {"p_value", r.p_value},     {"is_null", r.is_null},   {"covered", r.covered},
                     {"rejected", r.rejected}};
    o["noise"] = std::isfinite(r.noise) ? nlohmann::json(r.noise) : nlohmann::json(nullptr);
    recs.push_back(std::move(o));
  }
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& e : res.exclusions) excl.push_back({{"replicate", e.replicate}, {"reason", e.reason}});
  return {{"config", config_to_json(res.config)}, {"records", recs}, {"exclusions", excl}};
}

inline std::vector<Record> records_from_json(const nlohmann::json& j) {
  std::vector<Record> out;
  for (const auto& o : j.at("records")) {
    Record r;
    r.replicate = o.at("replicate").get<int>();
    r.row = o.at("row").get<Index>();
    r.coord = o.at("coord").get<Index>();
    r.method = parse_method(o.at("method").get<std::string>());
    r.n = o.at("n").get<Index>();
    r.theta0 = o.at("theta0").get<double>();
    r.lasso = o.at("lasso").get<double>();
    r.estimate = o.at("estimate").get<double>();
    r.variance = o.at("variance").get<double>();
    r.ci_low = o.at("ci_low").get<double>();
    r.ci_high = o.at("ci_high").get<double>();
    r.p_value = o.at("p_value").get<double>();
    r.is_null = o.at("is_null").get<bool>();
    r.covered = o.at("covered").get<bool>();
    r.rejected = o.at("rejected").get<bool>();
    if (!o.at("noise").is_null()) r.noise = o.at("noise").get<double>();
    out.push_back(r);
  }
  return out;
}

inline void write_metrics_csv(std::ostream& out, const ExperimentResult& res) {
  using io::format_double;
  const auto stat = [](const std::optional<NormalityStats>& s, double NormalityStats::*f) {
    return s ? format_double((*s).*f) : std::string("nan");
  };
  out << "name,method,fpr,tpr,coverage,avg_ci_length,avg_ci_length_raw,nonnull_mean,nulls,nonnulls,coordinates,"
         "replicates_used,replicates_excluded,residual_ks,residual_mean,residual_sd,noise_ks,noise_mean,noise_sd\n";
  for (const auto& m : res.metrics) {
    out << res.config.name << ',' << method_name(m.method) << ',' << format_double(m.fpr) << ','
        << format_double(m.tpr) << ',' << format_double(m.coverage) << ',' << format_double(m.avg_ci_length) << ','
        << format_double(m.avg_ci_length_raw) << ',' << format_double(m.nonnull_mean) << ',' << m.nulls << ','
        << m.nonnulls << ',' << m.coordinates << ',' << m.replicates_used << ',' << m.replicates_excluded << ','
        << stat(m.residual, &NormalityStats::ks_distance) << ',' << stat(m.residual, &NormalityStats::mean) << ','
        << stat(m.residual, &NormalityStats::sd) << ',' << stat(m.noise, &NormalityStats::ks_distance) << ','
        << stat(m.noise, &NormalityStats::mean) << ',' << stat(m.noise, &NormalityStats::sd) << '\n';
  }
}

/// Plot-ready QQ and PP pairs per method and quantity.
inline void write_diagnostics_csv(std::ostream& out, const ExperimentResult& res) {
  using io::format_double;
  out << "method,quantity,i,theoretical_quantile,sample_quantile,pp_theoretical,pp_empirical\n";
  for (const auto& m : res.metrics) {
    const auto emit = [&](const std::optional<NormalityStats>& s, const char* what) {
      if (!s) return;
      for (std::size_t i = 0; i < s->qq.size(); ++i)
        out << method_name(m.method) << ',' << what << ',' << i + 1 << ',' << format_double(s->qq[i].first) << ','
            << format_double(s->qq[i].second) << ',' << format_double(s->pp[i].first) << ','
            << format_double(s->pp[i].second) << '\n';
    };
    emit(m.residual, "residual");
    emit(m.noise, "noise");
  }
}

inline void write_experiment_outputs(const std::string& dir, const ExperimentResult& res) {
  {
    std::ofstream f(dir + "/metrics.csv");
    if (!f) throw DomainError("cannot write " + dir + "/metrics.csv");
    write_metrics_csv(f, res);
  }
  {
    std::ofstream f(dir + "/diagnostics.csv");
    if (!f) throw DomainError("cannot write " + dir + "/diagnostics.csv");
    write_diagnostics_csv(f, res);
  }
  io::write_json(dir + "/records.json", records_json(res));
}

}  // namespace odb
