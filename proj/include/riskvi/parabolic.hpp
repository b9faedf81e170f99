#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "riskvi/bellman.hpp"
#include "riskvi/diffusion.hpp"

namespace riskvi {

/// Two time discretizations of the relative-value flow: "normalized" runs the
/// discrete-time RVI of the approximating chain (divide by the iterate's
/// value at the reference node each step), "euler-ode" is a forward Euler
/// step of the flow  d Phi/dt = min_u [L_u Phi + c Phi] - Phi(t,0) Phi.
enum class RviMode { Normalized, EulerOde };

struct ParabolicResult {
  Eigen::VectorXd phi;        // final profile
  PolicyVector greedy;        // minimizing actions at the final step
  /// Per-step reference-node trace: Phi(t, x0) for the VI flow, the running
  /// eigenvalue estimate lambda_n for the RVI flows.
  std::vector<double> trace;
  double lambda_est = 0.0;    // RVI flows only
  bool positivity_lost = false;
  long failed_step = -1;
};

namespace detail {

inline void check_phi0(const DiscretizedProblem& problem,
                       const Eigen::VectorXd& phi0) {
  if (phi0.size() != problem.chain.n_states) {
    throw std::invalid_argument("initial profile has wrong dimension");
  }
  require_positive_value(phi0, "initial profile");
}

inline long step_count(const DiscretizedProblem& problem, double t_end) {
  if (!(t_end >= 0)) throw std::invalid_argument("t_end must be nonnegative");
  return std::llround(t_end / problem.dt);
}

/// min_u [ P_u phi + k_u .* phi ] together with the argmin; this is
/// phi + dt * min_u [L_{h,u} phi + c phi] for the cost-free chain kernel.
inline void euler_sweep(const ChainModel<double>& chain,
                        const Eigen::VectorXd& phi, Eigen::VectorXd& out,
                        PolicyVector& greedy) {
  const Eigen::Index n = chain.n_states;
  out.resize(n);
  greedy.resize(n);
  Eigen::VectorXd candidate(n);
  for (Eigen::Index u = 0; u < chain.n_actions; ++u) {
    candidate.noalias() = chain.transitions[static_cast<std::size_t>(u)] * phi;
    candidate.array() += chain.stage_costs.col(u).array() * phi.array();
    if (u == 0) {
      out = candidate;
      greedy.setZero();
    } else {
      for (Eigen::Index x = 0; x < n; ++x) {
        if (candidate(x) < out(x)) {
          out(x) = candidate(x);
          greedy(x) = static_cast<int>(u);
        }
      }
    }
  }
}

}  // namespace detail

/// Discretized value-iteration flow
///   Phi^{n+1}(x) = e^{-lambda_ref dt} min_u e^{k_h(x,u)} sum_y p(y|x,u) Phi^n(y)
/// run for t_end time units.  With lambda_ref equal to the chain eigenvalue
/// rate the discrete ground state is a fixed point.
inline ParabolicResult run_parabolic_vi(const DiscretizedProblem& problem,
                                        double lambda_ref,
                                        const Eigen::VectorXd& phi0,
                                        double t_end) {
  detail::check_phi0(problem, phi0);
  const long steps = detail::step_count(problem, t_end);
  const double decay = std::exp(-lambda_ref * problem.dt);
  BellmanKernel<double> kernel(problem.chain);

  ParabolicResult result;
  result.phi = phi0;
  result.greedy = PolicyVector::Zero(problem.chain.n_states);
  result.trace.reserve(static_cast<std::size_t>(steps) + 1);
  result.trace.push_back(result.phi(problem.origin_index));
  Eigen::VectorXd tv(problem.chain.n_states);
  for (long n = 0; n < steps; ++n) {
    kernel.apply(result.phi, tv, result.greedy);
    if (!tv.allFinite()) {
      throw OverflowError("run_parabolic_vi overflowed; rescale Phi0 or use a "
                          "better lambda_ref");
    }
    result.phi = tv * decay;
    result.trace.push_back(result.phi(problem.origin_index));
  }
  return result;
}

/// Relative-value flow; see RviMode for the two discretizations.  The trace
/// holds the running eigenvalue estimate, whose limit is the principal
/// eigenvalue rate of the approximating chain.
inline ParabolicResult run_parabolic_rvi(const DiscretizedProblem& problem,
                                         const Eigen::VectorXd& phi0,
                                         double t_end, RviMode mode) {
  detail::check_phi0(problem, phi0);
  const long steps = detail::step_count(problem, t_end);
  const Eigen::Index x0 = problem.origin_index;
  const double dt = problem.dt;

  ParabolicResult result;
  result.phi = phi0;
  result.greedy = PolicyVector::Zero(problem.chain.n_states);
  result.trace.reserve(static_cast<std::size_t>(steps));
  Eigen::VectorXd next(problem.chain.n_states);

  if (mode == RviMode::Normalized) {
    BellmanKernel<double> kernel(problem.chain);
    for (long n = 0; n < steps; ++n) {
      kernel.apply(result.phi, next, result.greedy);
      if (!next.allFinite()) {
        throw OverflowError("run_parabolic_rvi overflowed");
      }
      result.phi = next / result.phi(x0);
      result.trace.push_back(std::log(result.phi(x0)) / dt);
    }
    result.lambda_est =
        result.trace.empty() ? std::log(result.phi(x0)) / dt : result.trace.back();
    return result;
  }

  for (long n = 0; n < steps; ++n) {
    detail::euler_sweep(problem.chain, result.phi, next, result.greedy);
    next -= dt * result.phi(x0) * result.phi;
    if (!next.allFinite()) {
      throw OverflowError("run_parabolic_rvi overflowed");
    }
    if (next.minCoeff() <= 0.0) {
      result.positivity_lost = true;
      result.failed_step = n;
      break;
    }
    result.phi = next;
    result.trace.push_back(result.phi(x0));
  }
  result.lambda_est = result.phi(x0);
  return result;
}

struct RatioDiagnostic {
  /// Spatial coefficient of variation of Phi_bar(t,.) / Phi(t,.) per step.
  std::vector<double> cov;
  double max_cov = 0.0;
  double lambda_est = 0.0;  // estimate used as lambda_ref for the VI flow
  double dt = 0.0;
  /// max_cov / dt; the measured first-order constant of the euler-ode mode.
  double linear_coefficient = 0.0;
};

/// Runs the VI flow (with lambda_ref set to the RVI flow's own estimate) and
/// the RVI flow from the same start through identical sweeps, and measures
/// how far the pointwise ratio of the two profiles is from being spatially
/// constant.  In normalized mode the recursions are exactly proportional;
/// in euler-ode mode the proportionality holds to first order in dt.
inline RatioDiagnostic ratio_diagnostic(const DiscretizedProblem& problem,
                                        const Eigen::VectorXd& phi0,
                                        double t_end, RviMode mode) {
  detail::check_phi0(problem, phi0);
  RatioDiagnostic diag;
  diag.lambda_est = run_parabolic_rvi(problem, phi0, t_end, mode).lambda_est;

  const long steps = detail::step_count(problem, t_end);
  const Eigen::Index x0 = problem.origin_index;
  const double dt = problem.dt;
  const Eigen::Index n_states = problem.chain.n_states;

  Eigen::VectorXd vi = phi0, rvi = phi0, next(n_states);
  PolicyVector greedy(n_states);
  BellmanKernel<double> kernel(problem.chain);
  const double decay = std::exp(-diag.lambda_est * dt);

  diag.cov.reserve(static_cast<std::size_t>(steps));
  for (long n = 0; n < steps; ++n) {
    if (mode == RviMode::Normalized) {
      kernel.apply(rvi, next, greedy);
      next /= rvi(x0);
      rvi.swap(next);
      kernel.apply(vi, next, greedy);
      next *= decay;
      vi.swap(next);
    } else {
      detail::euler_sweep(problem.chain, rvi, next, greedy);
      next -= dt * rvi(x0) * rvi;
      if (next.minCoeff() <= 0.0) break;
      rvi.swap(next);
      detail::euler_sweep(problem.chain, vi, next, greedy);
      next -= dt * diag.lambda_est * vi;
      if (next.minCoeff() <= 0.0) break;
      vi.swap(next);
    }
    const Eigen::ArrayXd ratio = vi.array() / rvi.array();
    const double mean = ratio.mean();
    const double cov =
        std::sqrt((ratio - mean).square().sum() / static_cast<double>(n_states)) /
        mean;
    diag.cov.push_back(cov);
    diag.max_cov = std::max(diag.max_cov, cov);
  }
  diag.dt = dt;
  diag.linear_coefficient = diag.max_cov / dt;
  return diag;
}

}  // namespace riskvi
