// odb: simulate datasets, debias LASSO fits, run inference and Monte Carlo
// experiments. See README.md for the file formats.

#include "odb/odb.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace odb;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir = ".";
};

struct Chain {
  double lambda0 = 1.0;
  double c_mu = 0.6;
  double L0 = 2.0;
  double ridge = 1.0;
  Index r0 = 0;
  double beta = 1.3;
  double tau = 1.0;
  double ridge_online_lambda = 1.0;
  double alpha = 0.05;
  std::optional<double> sigma;
  std::string method = "online";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
}

void add_chain(CLI::App* app, Chain& c) {
  app->add_option("--lambda0", c.lambda0, "LASSO penalty multiplier")->capture_default_str();
  app->add_option("--c-mu", c.c_mu, "Decorrelator constraint multiplier")->capture_default_str();
  app->add_option("--L0", c.L0, "l1 budget multiplier (0 = no budget)")->capture_default_str();
  app->add_option("--ridge", c.ridge, "Ridge used to size the l1 budget")->capture_default_str();
  app->add_option("--r0", c.r0, "First episode length (0 = ceil(sqrt(n)))")->capture_default_str();
  app->add_option("--beta", c.beta, "Episode growth factor")->capture_default_str();
  app->add_option("--tau", c.tau, "offline-sparse mu multiplier")->capture_default_str();
  app->add_option("--ridge-online-lambda", c.ridge_online_lambda, "ridge-online penalty")->capture_default_str();
  app->add_option("--alpha", c.alpha, "Significance level")->capture_default_str();
  app->add_option("--sigma", c.sigma, "Noise level (default: plug-in estimate)");
  app->add_option("--method", c.method, "online, offline, offline-sparse or ridge-online")->capture_default_str();
}

std::string prepare(const std::string& dir) {
  fs::create_directories(dir);
  return dir;
}

EpisodeDecorrelatorConfig episode_config(const Chain& c) {
  EpisodeDecorrelatorConfig ec;
  ec.c_mu = c.c_mu;
  if (c.L0 > 0.0)
    ec.L0 = c.L0;
  else
    ec.L0.reset();
  ec.ridge = c.ridge;
  return ec;
}

void emit(const std::string& dir, const DebiasedEstimate& est, const Vector& theta_l, double lambda, double alpha) {
  auto j = io::estimate_json(est);
  j["lasso"] = io::vector_json(theta_l);
  j["lambda"] = lambda;
  j["report"] = io::report_json(make_report(est, alpha));
  io::write_json(dir + "/estimates.json", j);
  io::write_estimates_csv(dir + "/estimates.csv", est);
}

/// Debiases one regression with the method named in `c`. `batch` is set for
/// two-batch data, where `online` uses per-batch decorrelators.
DebiasedEstimate debias(const RegressionProblem& prob, const BatchDesign* batch, const Vector& theta_l, double sigma,
                        const Chain& c, int threads) {
  const Method m = parse_method(c.method);
  EpisodeDecorrelatorConfig ec = episode_config(c);
  ec.threads = threads;
  if (m == Method::online_ts) {
    if (batch) {
      const auto [M1, M2] = build_batch_decorrelators(*batch, ec);
      return online_debias_batch(theta_l, *batch, M1, M2, sigma, true);
    }
    const Index r0 = c.r0 > 0 ? c.r0 : default_first_episode(prob.n());
    const auto sched = make_schedule(prob.n(), r0, c.beta);
    const auto seq = build_M_sequence(prob, sched, ec);
    return online_debias_ts(theta_l, prob, sched, seq, sigma);
  }
  const Matrix S = prefix_covariance(prob.X, prob.n());
  if (m == Method::offline) {
    const auto M = solve_decorrelator(S, resolve_episode_config(S, prob.n(), ec), nullptr, threads);
    return offline_debias(theta_l, prob, M.M, sigma, Method::offline, true);
  }
  if (m == Method::offline_sparse) {
    const auto M = build_offline_M(S, offline_mu(prob.n(), prob.p0(), c.tau), DecorrelatorConfig{}, threads);
    return offline_debias(theta_l, prob, M.M, sigma, Method::offline_sparse, true);
  }
  return ridge_online_baseline(theta_l, prob, c.ridge_online_lambda, sigma);
}

int run_simulate(const std::string& config_path, int replicate, const Common& common) {
  ExperimentConfig cfg = config_from_json(io::read_json(config_path));
  if (common.seed) cfg.seed = *common.seed;
  const std::string dir = prepare(common.out_dir);
  io::json truth;
  truth["seed"] = cfg.seed;
  truth["replicate"] = replicate;
  if (cfg.scenario == Scenario::ts) {
    const TsSample s = simulate_ts(cfg, replicate);
    io::write_series(dir + "/series.csv", s.z);
    io::json lags = io::json::array();
    for (const auto& a : s.draw.coeffs) lags.push_back(io::matrix_json(a));
    truth["d"] = cfg.d;
    truth["coefficients"] = lags;
    truth["noise_cov"] = io::matrix_json(s.noise_cov);
    std::cout << "wrote " << dir << "/series.csv (" << s.z.rows() << " x " << s.z.cols() << ")\n";
  } else {
    const BatchSample s = simulate_batch(cfg, replicate);
    io::write_batch(dir + "/batch.csv", s.data.design);
    truth["theta0"] = io::vector_json(s.theta0);
    truth["theta_int"] = io::vector_json(s.data.design.theta_int);
    truth["sigma"] = cfg.noise_sigma;
    std::cout << "wrote " << dir << "/batch.csv (" << s.data.design.n() << " x " << s.data.design.p() << ")\n";
  }
  io::write_json(dir + "/truth.json", truth);
  return 0;
}

int run_debias_ts(const std::string& data, Index d, Index row, const Chain& c, const Common& common) {
  const Matrix z = io::read_series(data);
  RegressionProblem prob = build_regression_view(z, d, row);
  LassoConfig lc;
  const double sigma0 = c.sigma.value_or(1.0);
  lc.lambda = default_lambda(static_cast<double>(prob.n()), static_cast<double>(prob.p0()), sigma0, c.lambda0);
  Vector theta_l = fit_lasso(prob, lc).theta;
  double sigma = sigma0;
  if (!c.sigma) {
    // Plug-in: refit with the estimated noise level once.
    sigma = estimate_sigma(prob, theta_l);
    lc.lambda = default_lambda(static_cast<double>(prob.n()), static_cast<double>(prob.p0()), sigma, c.lambda0);
    theta_l = fit_lasso(prob, lc).theta;
  }
  const auto est = debias(prob, nullptr, theta_l, sigma, c, common.threads.value_or(1));
  emit(prepare(common.out_dir), est, theta_l, lc.lambda, c.alpha);
  std::cout << "n = " << est.n << ", p0 = " << est.theta.size() << ", sigma = " << sigma << "\n";
  return 0;
}

int run_debias_batch(const std::string& data, const Chain& c, const Common& common) {
  const BatchDesign D = io::read_batch(data);
  const RegressionProblem prob = D.stacked();
  LassoConfig lc;
  const double sigma0 = c.sigma.value_or(1.0);
  lc.lambda = default_lambda(static_cast<double>(prob.n()), static_cast<double>(prob.p0()), sigma0, c.lambda0);
  Vector theta_l = fit_lasso(prob, lc).theta;
  double sigma = sigma0;
  if (!c.sigma) {
    sigma = estimate_sigma(prob, theta_l);
    lc.lambda = default_lambda(static_cast<double>(prob.n()), static_cast<double>(prob.p0()), sigma, c.lambda0);
    theta_l = fit_lasso(prob, lc).theta;
  }
  const auto est = debias(prob, &D, theta_l, sigma, c, common.threads.value_or(1));
  emit(prepare(common.out_dir), est, theta_l, lc.lambda, c.alpha);
  std::cout << "n1 = " << D.n1() << ", n2 = " << D.n2() << ", p = " << D.p() << ", sigma = " << sigma << "\n";
  return 0;
}

int run_infer(const std::string& path, Index n, double alpha, const Common& common) {
  const DebiasedEstimate est = io::read_estimates_csv(path, n);
  const auto rep = make_report(est, alpha);
  io::write_json(prepare(common.out_dir) + "/report.json", io::report_json(rep));
  std::cout << rep.by_rejections.size() << " of " << rep.coords.size() << " selected by BY at alpha = " << alpha << "\n";
  return 0;
}

int run_experiment_cmd(const std::string& config_path, const Common& common) {
  ExperimentConfig cfg = config_from_json(io::read_json(config_path));
  if (common.seed) cfg.seed = *common.seed;
  if (common.threads) cfg.threads = *common.threads;
  const std::string dir = prepare(common.out_dir);
  const ExperimentResult res = run_experiment(cfg);
  write_experiment_outputs(dir, res);
  write_metrics_csv(std::cout, res);
  if (!res.exclusions.empty()) std::cerr << res.exclusions.size() << " replicate(s) excluded, see records.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online debiasing of LASSO estimates for time series and batched data"};
  app.require_subcommand(1);

  Common common;
  Chain chain;

  auto* sim = app.add_subcommand("simulate", "Write one replicate's dataset and ground truth");
  std::string sim_config;
  int sim_replicate = 0;
  sim->add_option("--config", sim_config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--replicate", sim_replicate, "Replicate index (random stream)")->capture_default_str();
  add_common(sim, common);

  auto* dts = app.add_subcommand("debias-ts", "Debias one VAR regression from a series CSV");
  std::string ts_data;
  Index ts_d = 1, ts_row = 0;
  dts->add_option("--data", ts_data, "Series CSV (T rows x p columns)")->required()->check(CLI::ExistingFile);
  dts->add_option("--d", ts_d, "VAR order")->capture_default_str();
  dts->add_option("--row", ts_row, "Response coordinate (0-based)")->capture_default_str();
  add_chain(dts, chain);
  add_common(dts, common);

  auto* dbt = app.add_subcommand("debias-batch", "Debias a two-batch dataset CSV");
  std::string batch_data;
  dbt->add_option("--data", batch_data, "Batch CSV (batch, y, x1..xp)")->required()->check(CLI::ExistingFile);
  add_chain(dbt, chain);
  add_common(dbt, common);

  auto* inf = app.add_subcommand("infer", "Intervals, p-values and BY selection from an estimates CSV");
  std::string est_path;
  Index inf_n = 0;
  double inf_alpha = 0.05;
  inf->add_option("--estimates", est_path, "CSV with estimate and variance columns")->required()->check(CLI::ExistingFile);
  inf->add_option("--n", inf_n, "Sample size behind the estimates")->required()->check(CLI::PositiveNumber);
  inf->add_option("--alpha", inf_alpha, "Significance level")->capture_default_str();
  add_common(inf, common);

  auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment from a config");
  std::string exp_config;
  exp->add_option("--config", exp_config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  add_common(exp, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(sim_config, sim_replicate, common);
    if (dts->parsed()) return run_debias_ts(ts_data, ts_d, ts_row, chain, common);
    if (dbt->parsed()) return run_debias_batch(batch_data, chain, common);
    if (inf->parsed()) return run_infer(est_path, inf_n, inf_alpha, common);
    if (exp->parsed()) return run_experiment_cmd(exp_config, common);
  } catch (const odb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
