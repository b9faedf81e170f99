#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "riskvi/bellman.hpp"
#include "riskvi/chain.hpp"

namespace riskvi {

template <class Scalar>
struct SolverConfig {
  /// Reference state whose value pins the normalization (and the eigenvalue).
  Eigen::Index x0 = 0;
  /// Convergence tolerance on the span seminorm of successive log-iterates.
  Scalar tol = Scalar(1e-10);
  int max_iter = 100000;
  /// Known eigenvalue; required by solve_vi, ignored by solve_rvi.
  std::optional<Scalar> lambda{};
  /// Evaluate sweeps in the log domain (slower, overflow-proof).
  bool log_space = false;
  /// Starting iterate; defaults to the all-ones function.
  std::optional<DenseVector<Scalar>> initial_value{};
  /// Record per-iteration diagnostics in the report.
  bool keep_trace = true;
};

template <class Scalar>
struct TraceRecord {
  int iter = 0;
  Scalar v_x0 = 0;                 // iterate value at x0 after the update
  Scalar span_log_increment = 0;   // span_x log(V_{n+1}/V_n)
  int policy_changes = 0;          // greedy actions changed since last sweep
  Scalar cw_lower = 0;             // min_x TV_n(x)/V_n(x)
  Scalar cw_upper = 0;             // max_x TV_n(x)/V_n(x)
};

template <class Scalar>
struct SolveReport {
  Scalar lambda_est = 0;
  DenseVector<Scalar> value;
  PolicyVector policy;
  bool converged = false;
  int iterations = 0;
  /// Certified sandwich: cw_lower <= Lambda <= cw_upper at the final iterate.
  Scalar cw_lower = 0;
  Scalar cw_upper = 0;
  std::vector<TraceRecord<Scalar>> trace;
  std::string message;
};

namespace detail {

// Divergence guards for value iteration with a mis-specified eigenvalue.
inline constexpr double kDivergenceCeiling = 1e150;
inline constexpr double kDivergenceFloor = 1e-150;

template <class Scalar>
DenseVector<Scalar> starting_iterate(const ChainModel<Scalar>& model,
                                     const SolverConfig<Scalar>& config) {
  if (config.initial_value) {
    require_positive_value(*config.initial_value, "initial value");
    if (config.initial_value->size() != model.n_states) {
      throw std::invalid_argument("initial value has wrong dimension");
    }
    return *config.initial_value;
  }
  return DenseVector<Scalar>::Ones(model.n_states);
}

template <class Scalar>
void check_config(const ChainModel<Scalar>& model,
                  const SolverConfig<Scalar>& config) {
  if (config.x0 < 0 || config.x0 >= model.n_states) {
    throw std::out_of_range("solver config: x0 out of range");
  }
  if (!(config.tol > Scalar(0))) {
    throw std::invalid_argument("solver config: tol must be positive");
  }
  if (config.lambda && !(*config.lambda > Scalar(0))) {
    throw std::invalid_argument("solver config: lambda must be positive");
  }
  if (config.max_iter < 1) {
    throw std::invalid_argument("solver config: max_iter must be at least 1");
  }
}

/// Shared sweep driver for solve_rvi and solve_vi.  Works on W = log V when
/// config.log_space is set, on V itself otherwise.  The two normalizations
/// differ only in the per-step divisor: V_n(x0) for RVI, lambda for VI.
template <class Scalar>
SolveReport<Scalar> iterate(const ChainModel<Scalar>& model,
                            const SolverConfig<Scalar>& config, bool rvi_mode) {
  check_config(model, config);
  const Eigen::Index n = model.n_states;
  const bool log_space = config.log_space;

  std::optional<BellmanKernel<Scalar>> lin;
  std::optional<LogBellmanKernel<Scalar>> log;
  if (log_space) {
    log.emplace(model);
  } else {
    lin.emplace(model);
  }

  DenseVector<Scalar> v = starting_iterate(model, config);
  if (log_space) v = v.array().log().matrix();

  const Scalar log_lambda =
      config.lambda ? std::log(static_cast<double>(*config.lambda)) : Scalar(0);

  SolveReport<Scalar> report;
  PolicyVector greedy(n), prev_greedy(n);
  DenseVector<Scalar> tv(n), increment(n);

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    // The ratios TV_n / V_n drive everything: their extremes are the
    // Collatz-Wielandt bounds, their log-span is the convergence measure
    // (the normalization only shifts log-increments by a constant), and the
    // next normalizer is the ratio at x0.
    Scalar cw_lo, cw_hi, span, inc_min, inc_max;
    if (log_space) {
      log->apply(v, tv, greedy);
      increment = tv - v;
      inc_min = increment.minCoeff();
      inc_max = increment.maxCoeff();
      span = inc_max - inc_min;
      cw_lo = std::exp(static_cast<double>(inc_min));
      cw_hi = std::exp(static_cast<double>(inc_max));
    } else {
      lin->apply(v, tv, greedy);
      if (!tv.allFinite() || tv.minCoeff() <= Scalar(0)) {
        throw OverflowError(
            "solver sweep left the representable range; enable log_space");
      }
      const DenseVector<Scalar> ratios = tv.cwiseQuotient(v);
      cw_lo = ratios.minCoeff();
      cw_hi = ratios.maxCoeff();
      inc_min = std::log(static_cast<double>(cw_lo));
      inc_max = std::log(static_cast<double>(cw_hi));
      span = std::log(static_cast<double>(cw_hi / cw_lo));
    }

    const int changes =
        iter == 1 ? 0 : static_cast<int>((greedy.array() != prev_greedy.array()).count());
    prev_greedy = greedy;

    // Normalize: divide by V_n(x0) (RVI) or by lambda (VI).
    if (log_space) {
      const Scalar shift = rvi_mode ? v(config.x0) : log_lambda;
      v = (tv.array() - shift).matrix();
    } else {
      const Scalar divisor = rvi_mode ? v(config.x0) : *config.lambda;
      v = tv / divisor;
    }

    const Scalar v_x0 = log_space ? std::exp(static_cast<double>(v(config.x0)))
                                  : v(config.x0);
    if (config.keep_trace) {
      report.trace.push_back(
          TraceRecord<Scalar>{iter, v_x0, span, changes, cw_lo, cw_hi});
    }
    report.iterations = iter;
    report.cw_lower = cw_lo;
    report.cw_upper = cw_hi;
    report.policy = greedy;

    const auto finalize = [&](bool converged, const char* message) {
      report.converged = converged;
      report.value = log_space ? v.array().exp().matrix().eval() : v;
      report.lambda_est = rvi_mode ? v_x0 : *config.lambda;
      if (rvi_mode) {
        // lambda_est is itself one of the ratios TV/V, so the sandwich holds
        // by construction; the min/max only absorbs log-domain rounding.
        report.cw_lower = std::min(report.cw_lower, report.lambda_est);
        report.cw_upper = std::max(report.cw_upper, report.lambda_est);
      }
      report.message = message;
      return report;
    };

    if (rvi_mode) {
      if (span < config.tol) return finalize(true, "");
    } else {
      // VI has a genuine fixed point only at the correct lambda, so require
      // the log-increment itself (not just its span) to vanish.
      const Scalar sup =
          std::max(std::abs(inc_max - log_lambda), std::abs(inc_min - log_lambda));
      if (sup < config.tol) return finalize(true, "");
      const Scalar v_max = log_space ? std::exp(static_cast<double>(v.maxCoeff()))
                                     : v.maxCoeff();
      const Scalar v_min = log_space ? std::exp(static_cast<double>(v.minCoeff()))
                                     : v.minCoeff();
      if (v_max > Scalar(detail::kDivergenceCeiling) ||
          v_min < Scalar(detail::kDivergenceFloor)) {
        return finalize(false,
                        "iterates left [1e-150, 1e150]; lambda is not the "
                        "eigenvalue");
      }
    }
    if (iter == config.max_iter) {
      return finalize(false, "no convergence within max_iter");
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace detail

/// Relative value iteration from V_0 = 1 (or a supplied positive start):
/// V_{n+1} = T V_n / V_n(x0).  Stops once the span seminorm of the
/// log-increment drops below tol; the limit satisfies V(x0) = Lambda, so the
/// reported eigenvalue is the final iterate's value at x0 -- exactly, by
/// construction.  Non-convergence is reported, not thrown.
template <class Scalar>
SolveReport<Scalar> solve_rvi(const ChainModel<Scalar>& model,
                              const SolverConfig<Scalar>& config) {
  return detail::iterate(model, config, /*rvi_mode=*/true);
}

/// Plain value iteration V_{n+1} = T V_n / lambda for a supplied lambda.
/// Converges to a positive fixed point only when lambda equals the true
/// eigenvalue; divergence to 0 or infinity is detected and reported.
template <class Scalar>
SolveReport<Scalar> solve_vi(const ChainModel<Scalar>& model,
                             const SolverConfig<Scalar>& config) {
  if (!config.lambda) {
    throw std::invalid_argument("solve_vi requires config.lambda");
  }
  return detail::iterate(model, config, /*rvi_mode=*/false);
}

template <class Scalar>
struct CouplingStep {
  int iter = 0;
  Scalar ratio_max = 0;          // max_x V_n(x)/J_n(x)
  Scalar ratio_min = 0;          // min_x V_n(x)/J_n(x)
  Scalar coupling_constant = 0;  // C_n = V_n(x0)/J_n(x0)
  /// | C_n - prod_{m<n} lambda / V_m(x0) |
  Scalar product_residual = 0;
  /// | V_n(x0)/J_n(x0) - lambda / J_{n-1}(x0) |  (0 for n = 0)
  Scalar anchor_residual = 0;
};

template <class Scalar>
struct CouplingDiagnostics {
  std::vector<CouplingStep<Scalar>> steps;
  Scalar max_ratio_spread = 0;     // max_n (ratio_max/ratio_min - 1)
  Scalar max_product_residual = 0;
  Scalar max_anchor_residual = 0;
};

/// Runs VI (J_n, using the trusted lambda) and RVI (V_n) side by side from
/// the same start and through the same kernel, and tracks the coupling
/// quantities: the two iterates stay proportional, the constant C_n equals
/// the running product of lambda/V_m(x0), and the x0-anchored identity
/// V_{n+1}(x0)/J_{n+1}(x0) = lambda/J_n(x0) holds step by step.
template <class Derived>
CouplingDiagnostics<typename Derived::Scalar> coupling_check(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& v0_in, typename Derived::Scalar lambda,
    Eigen::Index x0, int n_steps) {
  using Scalar = typename Derived::Scalar;
  const DenseVector<Scalar> v0 = v0_in;
  require_positive_value(v0, "initial value");
  if (x0 < 0 || x0 >= model.n_states) {
    throw std::out_of_range("coupling_check: x0 out of range");
  }
  if (!(lambda > Scalar(0))) {
    throw std::invalid_argument("coupling_check: lambda must be positive");
  }

  BellmanKernel<Scalar> kernel(model);
  DenseVector<Scalar> vi = v0, rvi = v0;
  DenseVector<Scalar> tv(model.n_states);
  PolicyVector greedy(model.n_states);

  CouplingDiagnostics<Scalar> diag;
  Scalar product = 1;            // prod_{m<n} lambda / V_m(x0)
  Scalar prev_anchor = 0;        // lambda / J_{n-1}(x0)
  for (int n = 0; n <= n_steps; ++n) {
    CouplingStep<Scalar> step;
    step.iter = n;
    const DenseVector<Scalar> ratio = rvi.cwiseQuotient(vi);
    step.ratio_max = ratio.maxCoeff();
    step.ratio_min = ratio.minCoeff();
    step.coupling_constant = rvi(x0) / vi(x0);
    step.product_residual = std::abs(step.coupling_constant - product);
    step.anchor_residual =
        n == 0 ? Scalar(0) : std::abs(step.coupling_constant - prev_anchor);
    diag.steps.push_back(step);
    diag.max_ratio_spread =
        std::max(diag.max_ratio_spread, step.ratio_max / step.ratio_min - Scalar(1));
    diag.max_product_residual =
        std::max(diag.max_product_residual, step.product_residual);
    diag.max_anchor_residual =
        std::max(diag.max_anchor_residual, step.anchor_residual);
    if (n == n_steps) break;

    product *= lambda / rvi(x0);
    prev_anchor = lambda / vi(x0);
    const Scalar normalizer = rvi(x0);
    kernel.apply(rvi, tv, greedy);
    rvi = tv / normalizer;
    kernel.apply(vi, tv, greedy);
    vi = tv / lambda;
  }
  return diag;
}

}  // namespace riskvi
