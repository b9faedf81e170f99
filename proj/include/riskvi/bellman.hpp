#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskvi/chain.hpp"

namespace riskvi {

/// Raised when a linear-domain sweep produces non-finite values; the caller
/// should switch to log-space evaluation.
struct OverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class Scalar>
struct BellmanResult {
  DenseVector<Scalar> values;  // T J
  PolicyVector greedy;         // argmin, ties -> lowest action index
};

template <class Derived>
void require_positive_value(const Eigen::MatrixBase<Derived>& v,
                            const char* what) {
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index x = 0; x < v.size(); ++x) {
    if (!(v(x) > Scalar(0)) ||
        !std::isfinite(static_cast<double>(v(x)))) {
      throw std::invalid_argument(std::string(what) +
                                  " must be strictly positive and finite "
                                  "(offending state " +
                                  std::to_string(x) + ")");
    }
  }
}

/// Applies T J(x) = min_u e^{k(x,u)} sum_y p(y|x,u) J(y) with the exponential
/// weights precomputed, so solver loops pay one matrix-vector product per
/// action and nothing else.  Ties in the argmin go to the lowest action
/// index; with that rule proportional inputs select identical actions, which
/// the VI/RVI coupling identities rely on.
template <class Scalar>
class BellmanKernel {
 public:
  explicit BellmanKernel(const ChainModel<Scalar>& model)
      : model_(&model), exp_costs_(model.stage_costs.array().exp()) {}

  const ChainModel<Scalar>& model() const { return *model_; }

  /// Linear-domain sweep.  `values` and `greedy` are resized as needed.
  void apply(const DenseVector<Scalar>& value_in, DenseVector<Scalar>& values,
             PolicyVector& greedy) const {
    const Eigen::Index n = model_->n_states;
    values.resize(n);
    greedy.resize(n);
    DenseVector<Scalar> candidate(n);
    for (Eigen::Index u = 0; u < model_->n_actions; ++u) {
      candidate.noalias() =
          model_->transitions[static_cast<std::size_t>(u)] * value_in;
      candidate.array() *= exp_costs_.col(u).array();
      if (u == 0) {
        values = candidate;
        greedy.setZero();
      } else {
        for (Eigen::Index x = 0; x < n; ++x) {
          if (candidate(x) < values(x)) {
            values(x) = candidate(x);
            greedy(x) = static_cast<int>(u);
          }
        }
      }
    }
  }

 private:
  const ChainModel<Scalar>* model_;
  DenseMatrix<Scalar> exp_costs_;
};

/// Log-domain counterpart of BellmanKernel: operates on log J and returns
/// log T J via per-row log-sum-exp with max extraction.  Immune to overflow
/// as long as log-values themselves stay representable.
template <class Scalar>
class LogBellmanKernel {
 public:
  explicit LogBellmanKernel(const ChainModel<Scalar>& model) : model_(&model) {
    log_transitions_.reserve(model.transitions.size());
    for (const auto& P : model.transitions) {
      log_transitions_.push_back(P.array().log().matrix());
    }
  }

  const ChainModel<Scalar>& model() const { return *model_; }

  void apply(const DenseVector<Scalar>& log_in, DenseVector<Scalar>& log_out,
             PolicyVector& greedy) const {
    const Eigen::Index n = model_->n_states;
    log_out.resize(n);
    greedy.resize(n);
    DenseVector<Scalar> candidate(n);
    DenseVector<Scalar> row(n);
    for (Eigen::Index u = 0; u < model_->n_actions; ++u) {
      const auto& logP = log_transitions_[static_cast<std::size_t>(u)];
      for (Eigen::Index x = 0; x < n; ++x) {
        row = logP.row(x).transpose() + log_in;
        const Scalar m = row.maxCoeff();
        Scalar acc = 0;
        for (Eigen::Index y = 0; y < n; ++y) {
          acc += std::exp(static_cast<double>(row(y) - m));
        }
        candidate(x) = model_->stage_costs(x, u) + m +
                       static_cast<Scalar>(std::log(static_cast<double>(acc)));
      }
      if (u == 0) {
        log_out = candidate;
        greedy.setZero();
      } else {
        for (Eigen::Index x = 0; x < n; ++x) {
          if (candidate(x) < log_out(x)) {
            log_out(x) = candidate(x);
            greedy(x) = static_cast<int>(u);
          }
        }
      }
    }
  }

 private:
  const ChainModel<Scalar>* model_;
  std::vector<DenseMatrix<Scalar>> log_transitions_;
};

/// Multiplicative Bellman operator T J(x) = min_u e^{k(x,u)} sum_y p(y|x,u) J(y)
/// together with the greedy selector.
template <class Derived>
BellmanResult<typename Derived::Scalar> bellman_min(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& value) {
  using Scalar = typename Derived::Scalar;
  const DenseVector<Scalar> v = value;
  require_positive_value(v, "value function");
  BellmanResult<Scalar> result;
  BellmanKernel<Scalar>(model).apply(v, result.values, result.greedy);
  if (!result.values.allFinite()) {
    throw OverflowError(
        "bellman_min overflowed in linear arithmetic; enable log_space");
  }
  return result;
}

/// One value-iteration update J -> T J / lambda for a known eigenvalue guess.
template <class Derived>
DenseVector<typename Derived::Scalar> vi_step(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& value, typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  if (!(lambda > Scalar(0))) {
    throw std::invalid_argument("vi_step: lambda must be positive");
  }
  return bellman_min(model, value).values / lambda;
}

template <class Scalar>
struct RviStepResult {
  DenseVector<Scalar> value;  // T V / V(x0)
  Scalar normalizer;          // V(x0) before the update
};

/// One relative-value-iteration update V -> T V / V(x0).
template <class Derived>
RviStepResult<typename Derived::Scalar> rvi_step(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& value, Eigen::Index x0) {
  using Scalar = typename Derived::Scalar;
  if (x0 < 0 || x0 >= model.n_states) {
    throw std::out_of_range("rvi_step: x0 out of range");
  }
  RviStepResult<Scalar> result;
  result.normalizer = value(x0);
  result.value = bellman_min(model, value).values / result.normalizer;
  return result;
}

template <class Scalar>
struct CwBounds {
  Scalar lower;
  Scalar upper;
};

/// Collatz-Wielandt certificate: for any strictly positive V,
/// min_x TV(x)/V(x) <= Lambda <= max_x TV(x)/V(x).
template <class Derived>
CwBounds<typename Derived::Scalar> cw_bounds(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& value) {
  using Scalar = typename Derived::Scalar;
  const DenseVector<Scalar> v = value;
  const auto tv = bellman_min(model, v).values;
  const DenseVector<Scalar> ratios = tv.cwiseQuotient(v);
  return CwBounds<Scalar>{ratios.minCoeff(), ratios.maxCoeff()};
}

/// Relative eigen-equation defect max_x |TV(x) - lambda V(x)| / (lambda V(x)).
template <class Derived>
typename Derived::Scalar dp_residual(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& value, typename Derived::Scalar lambda) {
  using Scalar = typename Derived::Scalar;
  const DenseVector<Scalar> v = value;
  const auto tv = bellman_min(model, v).values;
  Scalar worst = 0;
  for (Eigen::Index x = 0; x < v.size(); ++x) {
    const Scalar denom = lambda * v(x);
    worst = std::max(worst, std::abs(tv(x) - denom) / denom);
  }
  return worst;
}

template <class Scalar>
struct TwistedKernel {
  DenseMatrix<Scalar> matrix;
  Scalar max_row_sum_error;  // max_x |row sum - 1|
};

/// Kernel of the chain twisted by an (approximate) eigen-triple:
/// p*(y|x) = e^{k(x,v(x))} p(y|x,v(x)) V(y) / (lambda V(x)).
/// Rows sum to one exactly when (lambda, V, v) solve the eigen-equation, so
/// the returned deviation doubles as a certificate of the triple.
template <class Derived>
TwistedKernel<typename Derived::Scalar> twisted_kernel(
    const ChainModel<typename Derived::Scalar>& model,
    const Eigen::MatrixBase<Derived>& value_in,
    typename Derived::Scalar lambda, const PolicyVector& policy) {
  using Scalar = typename Derived::Scalar;
  const DenseVector<Scalar> value = value_in;
  require_positive_value(value, "value function");
  require_valid_policy(model, policy);
  TwistedKernel<Scalar> out;
  out.matrix.resize(model.n_states, model.n_states);
  out.max_row_sum_error = 0;
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    const auto u = static_cast<std::size_t>(policy(x));
    const Scalar weight =
        std::exp(static_cast<double>(model.stage_costs(x, policy(x)))) /
        (lambda * value(x));
    Scalar row_sum = 0;
    for (Eigen::Index y = 0; y < model.n_states; ++y) {
      out.matrix(x, y) = weight * model.transitions[u](x, y) * value(y);
      row_sum += out.matrix(x, y);
    }
    out.max_row_sum_error =
        std::max(out.max_row_sum_error, std::abs(row_sum - Scalar(1)));
  }
  return out;
}

}  // namespace riskvi
