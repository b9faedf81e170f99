#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "riskvi/chain.hpp"

namespace riskvi {

template <class Scalar>
struct PerronResult {
  Scalar rho = 0;               // Perron root of Q_v
  DenseVector<Scalar> eigvec;   // strictly positive eigenvector
  int iterations = 0;
  Scalar residual = 0;          // max_x |Q w - rho w| / (rho w)
};

/// Cost-weighted transition matrix of the policy-restricted chain,
/// Q_v(x, y) = e^{k(x, v(x))} p(y | x, v(x)).
template <class Scalar>
DenseMatrix<Scalar> policy_matrix(const ChainModel<Scalar>& model,
                                  const PolicyVector& policy) {
  require_valid_policy(model, policy);
  DenseMatrix<Scalar> q(model.n_states, model.n_states);
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    const auto u = static_cast<std::size_t>(policy(x));
    q.row(x) = model.transitions[u].row(x) *
               std::exp(static_cast<double>(model.stage_costs(x, policy(x))));
  }
  return q;
}

/// Power iteration on Q_v, normalized each step by the iterate's value at x0
/// so its trace is directly comparable with the RVI solver.  Throws on
/// non-convergence; the restricted chain must be primitive (strict positivity
/// of the model guarantees it).
template <class Scalar>
PerronResult<Scalar> policy_perron(const ChainModel<Scalar>& model,
                                   const PolicyVector& policy,
                                   Scalar tol = Scalar(1e-12),
                                   int max_iter = 200000,
                                   Eigen::Index x0 = 0) {
  const DenseMatrix<Scalar> q = policy_matrix(model, policy);
  const Eigen::Index n = model.n_states;
  DenseVector<Scalar> w = DenseVector<Scalar>::Ones(n);
  DenseVector<Scalar> qw(n);
  PerronResult<Scalar> result;
  for (int iter = 1; iter <= max_iter; ++iter) {
    qw.noalias() = q * w;
    const DenseVector<Scalar> ratios = qw.cwiseQuotient(w);
    const Scalar lo = ratios.minCoeff();
    const Scalar hi = ratios.maxCoeff();
    if (!(lo > Scalar(0)) || !std::isfinite(static_cast<double>(hi))) {
      throw std::runtime_error("policy_perron: iterate left (0, inf)");
    }
    const Scalar normalizer = w(x0);
    w = qw / normalizer;
    result.iterations = iter;
    if (std::log(static_cast<double>(hi / lo)) < static_cast<double>(tol)) {
      result.rho = w(x0);  // = Q w(x0) / w(x0) of the previous iterate
      result.eigvec = w;
      qw.noalias() = q * w;
      result.residual = ((qw - result.rho * w).cwiseAbs().cwiseQuotient(
                             result.rho * w))
                            .maxCoeff();
      return result;
    }
  }
  throw std::runtime_error("policy_perron: no convergence within max_iter");
}

template <class Scalar>
struct EnumerationResult {
  Scalar lambda_star = 0;
  PolicyVector best_policy;
  long n_policies = 0;
};

/// Exhaustive ground truth: Lambda = min over all deterministic stationary
/// policies of the Perron root of Q_v.  Policies are indexed lexicographically
/// (state 0 most significant) and ties keep the lowest index, so the argmin is
/// the same for any thread count or chunking.  Intended for desk-scale
/// certification only.
template <class Scalar>
EnumerationResult<Scalar> enumerate_min(const ChainModel<Scalar>& model,
                                        long policy_cap = 1000000,
                                        Scalar tol = Scalar(1e-12),
                                        int threads = 1) {
  double count = std::pow(static_cast<double>(model.n_actions),
                          static_cast<double>(model.n_states));
  if (count > static_cast<double>(policy_cap)) {
    throw std::invalid_argument(
        "enumerate_min: policy count " + std::to_string(count) +
        " exceeds cap " + std::to_string(policy_cap));
  }
  const long total = static_cast<long>(count + 0.5);

  const auto policy_at = [&model](long index) {
    PolicyVector policy(model.n_states);
    for (Eigen::Index d = model.n_states - 1; d >= 0; --d) {
      policy(d) = static_cast<int>(index % model.n_actions);
      index /= model.n_actions;
    }
    return policy;
  };

  struct Candidate {
    Scalar rho = 0;
    long index = -1;
  };
  const auto scan = [&](long begin, long end) {
    Candidate best;
    for (long i = begin; i < end; ++i) {
      const Scalar rho = policy_perron(model, policy_at(i), tol).rho;
      if (best.index < 0 || rho < best.rho) {
        best.rho = rho;
        best.index = i;
      }
    }
    return best;
  };

  std::vector<Candidate> candidates;
  if (threads <= 1) {
    candidates.push_back(scan(0, total));
  } else {
    const long chunk = (total + threads - 1) / threads;
    candidates.resize(static_cast<std::size_t>((total + chunk - 1) / chunk));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < candidates.size(); ++t) {
      const long begin = static_cast<long>(t) * chunk;
      const long end = std::min(total, begin + chunk);
      pool.emplace_back([&, t, begin, end]() { candidates[t] = scan(begin, end); });
    }
    for (auto& worker : pool) worker.join();
  }

  Candidate winner;
  for (const auto& c : candidates) {
    // strict < over ascending chunks keeps the lowest index on exact ties
    if (c.index >= 0 && (winner.index < 0 || c.rho < winner.rho)) winner = c;
  }
  EnumerationResult<Scalar> best;
  best.n_policies = total;
  best.lambda_star = winner.rho;
  best.best_policy = policy_at(winner.index);
  return best;
}

/// Second, algorithm-independent oracle: dense eigendecomposition of Q_v.
/// Returns the spectral-radius eigenpair; limited to n <= 50 states.
template <class Scalar>
PerronResult<Scalar> dense_perron(const ChainModel<Scalar>& model,
                                  const PolicyVector& policy) {
  if (model.n_states > 50) {
    throw std::invalid_argument("dense_perron: limited to 50 states");
  }
  const DenseMatrix<Scalar> q = policy_matrix(model, policy);
  Eigen::EigenSolver<DenseMatrix<Scalar>> solver(q);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("dense_perron: eigendecomposition failed");
  }
  const auto& values = solver.eigenvalues();
  Eigen::Index lead = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (std::abs(values(i)) > std::abs(values(lead))) lead = i;
  }
  PerronResult<Scalar> result;
  result.rho = values(lead).real();
  if (!(result.rho > Scalar(0)) ||
      std::abs(values(lead).imag()) > 1e-9 * std::abs(values(lead))) {
    throw std::runtime_error("dense_perron: leading eigenvalue is not real");
  }
  DenseVector<Scalar> vec = solver.eigenvectors().col(lead).real();
  if (vec.sum() < Scalar(0)) vec = -vec;
  result.eigvec = vec / vec.maxCoeff();
  result.iterations = 0;
  const DenseVector<Scalar> qv = q * result.eigvec;
  result.residual = ((qv - result.rho * result.eigvec)
                         .cwiseAbs()
                         .cwiseQuotient(result.rho * result.eigvec.cwiseAbs()))
                        .maxCoeff();
  return result;
}

}  // namespace riskvi
