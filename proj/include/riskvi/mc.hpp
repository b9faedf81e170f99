#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "riskvi/bellman.hpp"
#include "riskvi/chain.hpp"
#include "riskvi/diffusion.hpp"
#include "riskvi/rng.hpp"

namespace riskvi {

struct McConfig {
  std::uint64_t seed = 0;
  long n_paths = 100000;
  /// Step count for chains, time horizon for diffusions.
  double horizon = 1.0;
  /// Euler-Maruyama step for SDE paths.
  double dt_sim = 0.01;
  /// Worker threads; estimates are bitwise identical for any value.
  int threads = 1;
};

struct McEstimate {
  double ratio_mean = 0.0;
  double std_err = 0.0;
  long n_paths = 0;
  long aborted_paths = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_mc_config(const McConfig& cfg) {
  if (cfg.n_paths < 100) {
    throw std::invalid_argument("mc config: need at least 100 paths");
  }
  if (!(cfg.horizon >= 0)) {
    throw std::invalid_argument("mc config: horizon must be nonnegative");
  }
  if (!(cfg.dt_sim > 0)) {
    throw std::invalid_argument("mc config: dt_sim must be positive");
  }
}

/// Runs fn(path) for every path index, optionally across threads.  Each path
/// writes only its own slot, so the schedule cannot change any result.
template <class Fn>
void for_each_path(long n_paths, int threads, Fn&& fn) {
  if (threads <= 1) {
    for (long p = 0; p < n_paths; ++p) fn(p);
    return;
  }
  std::vector<std::thread> pool;
  const long chunk = (n_paths + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long begin = t * chunk;
    const long end = std::min(n_paths, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn]() {
      for (long p = begin; p < end; ++p) fn(p);
    });
  }
  for (auto& worker : pool) worker.join();
}

/// Mean and standard error with a reduction order fixed by path index.
inline void reduce_estimate(const std::vector<double>& values, McEstimate& out) {
  const auto n = static_cast<double>(values.size());
  out.ratio_mean = pairwise_sum(values) / n;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - out.ratio_mean;
    sq[i] = d * d;
  }
  out.std_err = n > 1 ? std::sqrt(pairwise_sum(sq) / (n * (n - 1.0))) : 0.0;
}

}  // namespace detail

/// Checks the exact finite-horizon identity of the eigen-triple: along the
/// chain restricted to the given policy,
///   E_x [ e^{sum_{m<N} k(X_m)} V(X_N) ] = lambda^N V(x),
/// so the sampled ratio has expectation one.  Triples whose eigen-equation
/// defect exceeds max_dp_residual are rejected up front.
template <class Scalar>
McEstimate chain_identity_check(const ChainModel<Scalar>& model,
                                const PolicyVector& policy,
                                const DenseVector<Scalar>& value, Scalar lambda,
                                Eigen::Index x_start, const McConfig& cfg,
                                double max_dp_residual = 1e-8) {
  detail::check_mc_config(cfg);
  require_positive_value(value, "value function");
  if (x_start < 0 || x_start >= model.n_states) {
    throw std::out_of_range("chain_identity_check: x_start out of range");
  }
  const ChainModel<Scalar> chain = restricted(model, policy);
  // The identity is simulated under the supplied policy, so certify the
  // triple on the restricted chain; this also bounds the min-form defect.
  const double defect = static_cast<double>(dp_residual(chain, value, lambda));
  if (defect > max_dp_residual) {
    throw std::invalid_argument(
        "chain_identity_check: (V, lambda, policy) is not an eigen-triple "
        "(dp_residual " +
        std::to_string(defect) + ")");
  }
  const auto n_steps = static_cast<long>(std::llround(cfg.horizon));

  // Cumulative transition rows of the restricted chain, ascending state order.
  const Eigen::Index n = chain.n_states;
  std::vector<double> cumulative(static_cast<std::size_t>(n * n));
  for (Eigen::Index x = 0; x < n; ++x) {
    double acc = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      acc += static_cast<double>(chain.transitions[0](x, y));
      cumulative[static_cast<std::size_t>(x * n + y)] = acc;
    }
  }

  const double log_lambda = std::log(static_cast<double>(lambda));
  const double v_start = static_cast<double>(value(x_start));
  std::vector<double> ratios(static_cast<std::size_t>(cfg.n_paths));
  detail::for_each_path(cfg.n_paths, cfg.threads, [&](long p) {
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(p));
    Eigen::Index x = x_start;
    double log_weight = 0.0;
    for (long m = 0; m < n_steps; ++m) {
      log_weight += static_cast<double>(chain.stage_costs(x, 0));
      const double draw = rng.uniform01();
      const double* row = cumulative.data() + x * n;
      Eigen::Index y = 0;
      while (y + 1 < n && draw > row[y]) ++y;
      x = y;
    }
    log_weight -= static_cast<double>(n_steps) * log_lambda;
    ratios[static_cast<std::size_t>(p)] =
        std::exp(log_weight) * static_cast<double>(value(x)) / v_start;
  });

  McEstimate estimate;
  estimate.n_paths = cfg.n_paths;
  estimate.seed = cfg.seed;
  detail::reduce_estimate(ratios, estimate);
  return estimate;
}

struct SdeGrowthEstimate {
  double lambda_hat = 0.0;
  /// Three-sigma half width of lambda_hat from the sample spread.
  double ci_half_width = 0.0;
  long n_paths = 0;
  long aborted_paths = 0;
  std::uint64_t seed = 0;
  /// The finite-horizon estimator is upper-tail dominated and biased for the
  /// asymptotic rate; treat the estimate as a sanity band, not an identity.
  std::string bias_note =
      "finite-horizon growth estimate; biased for the asymptotic rate";
};

namespace detail {

struct SdeAccumulator {
  double integral = 0.0;  // accumulated cost integral
  Eigen::VectorXd x;      // terminal point
  bool aborted = false;
};

/// Euler-Maruyama path under the piecewise-constant (nearest grid node)
/// policy.  `shift` is subtracted from the running cost each step.  Paths
/// leaving |x|_inf > 10 R are flagged as exploded.
inline SdeAccumulator simulate_sde_path(
    const DiffusionModel& model, const DiscretizedProblem& problem,
    const PolicyVector& policy, const Eigen::VectorXd& x_start, double shift,
    double dt, long n_steps, CounterRng& rng) {
  SdeAccumulator acc;
  acc.x = x_start;
  const double sqrt_dt = std::sqrt(dt);
  const double bail = 10.0 * model.radius;
  double x1 = acc.x(0);
  double x2 = model.dim == 2 ? acc.x(1) : 0.0;
  for (long m = 0; m < n_steps; ++m) {
    const Eigen::Index node = nearest_state(problem, acc.x);
    const double u = model.actions[static_cast<std::size_t>(policy(node))];
    acc.integral += (model.cost(x1, x2, u) - shift) * dt;
    for (int d = 0; d < model.dim; ++d) {
      const double b = model.drift[static_cast<std::size_t>(d)](x1, x2, u);
      const double sig = model.sigma[static_cast<std::size_t>(d)](x1, x2, u);
      acc.x(d) += b * dt + sig * sqrt_dt * rng.normal();
    }
    x1 = acc.x(0);
    x2 = model.dim == 2 ? acc.x(1) : 0.0;
    if (std::abs(x1) > bail || std::abs(x2) > bail) {
      acc.aborted = true;
      return acc;
    }
  }
  return acc;
}

}  // namespace detail

/// Monte Carlo growth-rate estimate (1/T) log E[e^{int_0^T c dt}] under the
/// grid policy.  Exploded paths are dropped and counted.
inline SdeGrowthEstimate sde_growth_estimate(const DiffusionModel& model,
                                             const DiscretizedProblem& problem,
                                             const PolicyVector& policy,
                                             const Eigen::VectorXd& x_start,
                                             const McConfig& cfg) {
  detail::check_mc_config(cfg);
  require_valid_policy(problem.chain, policy);
  const auto n_steps = static_cast<long>(std::llround(cfg.horizon / cfg.dt_sim));
  const double t_eff = static_cast<double>(n_steps) * cfg.dt_sim;

  std::vector<double> weights(static_cast<std::size_t>(cfg.n_paths));
  std::vector<std::uint8_t> aborted(static_cast<std::size_t>(cfg.n_paths), 0);
  detail::for_each_path(cfg.n_paths, cfg.threads, [&](long p) {
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(p));
    const auto acc = detail::simulate_sde_path(model, problem, policy, x_start,
                                               0.0, cfg.dt_sim, n_steps, rng);
    aborted[static_cast<std::size_t>(p)] = acc.aborted ? 1 : 0;
    weights[static_cast<std::size_t>(p)] = acc.aborted ? 0.0 : std::exp(acc.integral);
  });

  SdeGrowthEstimate estimate;
  estimate.seed = cfg.seed;
  std::vector<double> kept;
  kept.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!aborted[i]) kept.push_back(weights[i]);
    else ++estimate.aborted_paths;
  }
  estimate.n_paths = static_cast<long>(kept.size());
  if (kept.empty()) {
    throw std::runtime_error("sde_growth_estimate: every path exploded");
  }
  McEstimate moments;
  detail::reduce_estimate(kept, moments);
  const double mean = moments.ratio_mean;
  if (!(mean > 0.0) || t_eff == 0.0) {
    estimate.lambda_hat = 0.0;
    estimate.ci_half_width = 0.0;
    return estimate;
  }
  estimate.lambda_hat = std::log(mean) / t_eff;
  estimate.ci_half_width = 3.0 * moments.std_err / (mean * t_eff);
  return estimate;
}

/// Simulates E_x[e^{int_0^T (c - lambda) dt} Psi_h(X_T)] / Psi_h(x) with the
/// grid ground state interpolated multilinearly; the expectation is one for
/// the exact eigenpair, up to discretization and truncation error.
inline McEstimate sde_martingale_check(const DiffusionModel& model,
                                       const DiscretizedProblem& problem,
                                       const Eigen::VectorXd& psi_h,
                                       double lambda,
                                       const PolicyVector& policy,
                                       const Eigen::VectorXd& x_start,
                                       const McConfig& cfg) {
  detail::check_mc_config(cfg);
  require_valid_policy(problem.chain, policy);
  require_positive_value(psi_h, "ground state");
  if (psi_h.size() != problem.chain.n_states) {
    throw std::invalid_argument("sde_martingale_check: ground state size");
  }
  const auto n_steps = static_cast<long>(std::llround(cfg.horizon / cfg.dt_sim));
  const double psi_start = interpolate(problem, psi_h, x_start);

  std::vector<double> ratios(static_cast<std::size_t>(cfg.n_paths));
  std::vector<std::uint8_t> aborted(static_cast<std::size_t>(cfg.n_paths), 0);
  detail::for_each_path(cfg.n_paths, cfg.threads, [&](long p) {
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(p));
    const auto acc = detail::simulate_sde_path(
        model, problem, policy, x_start, lambda, cfg.dt_sim, n_steps, rng);
    aborted[static_cast<std::size_t>(p)] = acc.aborted ? 1 : 0;
    ratios[static_cast<std::size_t>(p)] =
        acc.aborted
            ? 0.0
            : std::exp(acc.integral) * interpolate(problem, psi_h, acc.x) / psi_start;
  });

  McEstimate estimate;
  estimate.seed = cfg.seed;
  std::vector<double> kept;
  kept.reserve(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!aborted[i]) kept.push_back(ratios[i]);
    else ++estimate.aborted_paths;
  }
  estimate.n_paths = static_cast<long>(kept.size());
  if (kept.empty()) {
    throw std::runtime_error("sde_martingale_check: every path exploded");
  }
  detail::reduce_estimate(kept, estimate);
  return estimate;
}

}  // namespace riskvi
