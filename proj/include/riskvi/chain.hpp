#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskvi/rng.hpp"

namespace riskvi {

template <class Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Deterministic stationary policy: one action index per state.
using PolicyVector = Eigen::VectorXi;

/// Allowed deviation of a transition row sum from one.
inline constexpr double kRowSumTolerance = 1e-12;
/// Smallest entry admitted when a model claims strict positivity.
inline constexpr double kPositivityFloor = 1e-15;

/// Finite controlled Markov chain with per-stage costs entering the
/// multiplicative (risk-sensitive) criterion.  Transition probabilities are
/// stored densely, one n_states x n_states matrix per action, with row x
/// holding p(.|x,u).  Instances are immutable by convention once built, so
/// they can be shared freely across threads.
template <class Scalar>
struct ChainModel {
  Eigen::Index n_states = 0;
  Eigen::Index n_actions = 0;
  /// transitions[u](x, y) = p(y | x, u).
  std::vector<DenseMatrix<Scalar>> transitions;
  /// stage_costs(x, u) = k(x, u) in nats per stage.
  DenseMatrix<Scalar> stage_costs;
  /// Optional display labels, one per state (names or grid coordinates).
  std::vector<std::string> state_labels;
  /// Asserts p(y|x,u) > 0 for every entry; required by the spectral oracle.
  bool strictly_positive = false;
};

enum class ViolationKind {
  BadShape,
  NegativeProbability,
  NonFiniteProbability,
  RowSum,
  PositivityFlag,
  NonFiniteCost,
  BadLabelCount,
};

/// One broken model invariant.  Violations are data, not exceptions.
struct Violation {
  ViolationKind kind;
  std::string message;
};

namespace detail {

inline std::string index_pair(Eigen::Index x, Eigen::Index u) {
  std::ostringstream os;
  os << "(x=" << x << ", u=" << u << ")";
  return os.str();
}

}  // namespace detail

/// Checks every ChainModel invariant; an empty report means the model is
/// valid.  Row sums must match one within kRowSumTolerance, probabilities
/// must be nonnegative (>= kPositivityFloor when strictly_positive is set),
/// and all costs finite.
template <class Scalar>
std::vector<Violation> validate(const ChainModel<Scalar>& model) {
  std::vector<Violation> report;
  const auto add = [&report](ViolationKind kind, std::string msg) {
    report.push_back(Violation{kind, std::move(msg)});
  };

  if (model.n_states <= 0 || model.n_actions <= 0) {
    add(ViolationKind::BadShape, "n_states and n_actions must be positive");
    return report;
  }
  if (static_cast<Eigen::Index>(model.transitions.size()) != model.n_actions) {
    add(ViolationKind::BadShape, "expected one transition matrix per action");
    return report;
  }
  for (Eigen::Index u = 0; u < model.n_actions; ++u) {
    const auto& P = model.transitions[static_cast<std::size_t>(u)];
    if (P.rows() != model.n_states || P.cols() != model.n_states) {
      add(ViolationKind::BadShape,
          "transition matrix for action " + std::to_string(u) +
              " has wrong shape");
      return report;
    }
  }
  if (model.stage_costs.rows() != model.n_states ||
      model.stage_costs.cols() != model.n_actions) {
    add(ViolationKind::BadShape, "stage cost matrix has wrong shape");
    return report;
  }
  if (!model.state_labels.empty() &&
      static_cast<Eigen::Index>(model.state_labels.size()) != model.n_states) {
    add(ViolationKind::BadLabelCount,
        "state_labels must be empty or have one entry per state");
  }

  for (Eigen::Index u = 0; u < model.n_actions; ++u) {
    const auto& P = model.transitions[static_cast<std::size_t>(u)];
    for (Eigen::Index x = 0; x < model.n_states; ++x) {
      Scalar row_sum = 0;
      for (Eigen::Index y = 0; y < model.n_states; ++y) {
        const Scalar p = P(x, y);
        if (!std::isfinite(static_cast<double>(p))) {
          add(ViolationKind::NonFiniteProbability,
              "non-finite probability at " + detail::index_pair(x, u));
          return report;
        }
        if (p < Scalar(0)) {
          add(ViolationKind::NegativeProbability,
              "negative probability at " + detail::index_pair(x, u));
        } else if (model.strictly_positive && p < Scalar(kPositivityFloor)) {
          add(ViolationKind::PositivityFlag,
              "strictly_positive set but p(y|x,u) < 1e-15 at " +
                  detail::index_pair(x, u));
        }
        row_sum += p;
      }
      if (std::abs(static_cast<double>(row_sum) - 1.0) > kRowSumTolerance) {
        add(ViolationKind::RowSum,
            "row sum " + std::to_string(static_cast<double>(row_sum)) +
                " differs from 1 at " + detail::index_pair(x, u));
      }
    }
  }

  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    for (Eigen::Index u = 0; u < model.n_actions; ++u) {
      if (!std::isfinite(static_cast<double>(model.stage_costs(x, u)))) {
        add(ViolationKind::NonFiniteCost,
            "non-finite stage cost at " + detail::index_pair(x, u));
      }
    }
  }
  return report;
}

/// Throws std::out_of_range unless every policy entry indexes a valid action.
template <class Scalar>
void require_valid_policy(const ChainModel<Scalar>& model,
                          const PolicyVector& policy) {
  if (policy.size() != model.n_states) {
    throw std::out_of_range("policy has " + std::to_string(policy.size()) +
                            " entries for " + std::to_string(model.n_states) +
                            " states");
  }
  for (Eigen::Index x = 0; x < policy.size(); ++x) {
    if (policy(x) < 0 || policy(x) >= model.n_actions) {
      throw std::out_of_range("policy action " + std::to_string(policy(x)) +
                              " out of range at state " + std::to_string(x));
    }
  }
}

/// Chain obtained by following a fixed stationary policy: a single-action
/// model with P'[x][0][.] = P[x][v(x)][.] and k'[x][0] = k(x, v(x)).
template <class Scalar>
ChainModel<Scalar> restricted(const ChainModel<Scalar>& model,
                              const PolicyVector& policy) {
  require_valid_policy(model, policy);
  ChainModel<Scalar> out;
  out.n_states = model.n_states;
  out.n_actions = 1;
  out.transitions.emplace_back(model.n_states, model.n_states);
  out.stage_costs.resize(model.n_states, 1);
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    const auto u = static_cast<std::size_t>(policy(x));
    out.transitions[0].row(x) = model.transitions[u].row(x);
    out.stage_costs(x, 0) = model.stage_costs(x, policy(x));
  }
  out.state_labels = model.state_labels;
  out.strictly_positive = model.strictly_positive;
  return out;
}

/// Deterministic test-fixture generator: every transition probability is at
/// least delta and costs are drawn uniformly from [-1, 1].  The same seed
/// always produces the same model, independent of platform.
template <class Scalar = double>
ChainModel<Scalar> random_model(std::uint64_t seed, Eigen::Index n_states,
                                Eigen::Index n_actions, double delta) {
  if (n_states <= 0 || n_actions <= 0) {
    throw std::invalid_argument("random_model: sizes must be positive");
  }
  if (delta < 0 || static_cast<double>(n_states) * delta > 1.0) {
    throw std::invalid_argument(
        "random_model: infeasible delta (need n_states * delta <= 1)");
  }
  CounterRng rng(seed, 0);
  ChainModel<Scalar> model;
  model.n_states = n_states;
  model.n_actions = n_actions;
  model.stage_costs.resize(n_states, n_actions);
  model.strictly_positive = delta >= kPositivityFloor;
  const double slack = 1.0 - static_cast<double>(n_states) * delta;
  for (Eigen::Index u = 0; u < n_actions; ++u) {
    DenseMatrix<Scalar> P(n_states, n_states);
    for (Eigen::Index x = 0; x < n_states; ++x) {
      double total = 0.0;
      std::vector<double> w(static_cast<std::size_t>(n_states));
      for (auto& wi : w) {
        wi = rng.uniform01();
        total += wi;
      }
      for (Eigen::Index y = 0; y < n_states; ++y) {
        const double share =
            slack == 0.0 ? 0.0
                         : slack * w[static_cast<std::size_t>(y)] / total;
        P(x, y) = static_cast<Scalar>(delta + share);
      }
    }
    model.transitions.push_back(std::move(P));
  }
  for (Eigen::Index x = 0; x < n_states; ++x) {
    for (Eigen::Index u = 0; u < n_actions; ++u) {
      model.stage_costs(x, u) = static_cast<Scalar>(2.0 * rng.uniform01() - 1.0);
    }
  }
  return model;
}

}  // namespace riskvi
