#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskvi/chain.hpp"
#include "riskvi/expr.hpp"
#include "riskvi/solver.hpp"

namespace riskvi {

/// Controlled diffusion dX = b(X,U) dt + sigma(X) dW on the box [-R, R]^dim
/// with running cost c(X,U) and a finite action set.  The diffusion matrix is
/// diagonal; coefficients are arithmetic expressions over x1, x2 and u.
struct DiffusionModel {
  int dim = 1;
  std::vector<Expr> drift;  // one component per dimension, b_i(x, u)
  std::vector<Expr> sigma;  // diagonal entries sigma_i(x)
  Expr cost;                // c(x, u) in nats per unit time
  std::vector<double> actions;
  double radius = 1.0;
};

/// Uniform grid parameters; the boundary treatment is always reflecting.
struct GridSpec {
  double h = 0.1;
  /// Time step; unset means 0.9 times the largest step allowed by the
  /// nonnegativity (CFL) condition.
  std::optional<double> dt{};
};

/// Chain approximation of a DiffusionModel on its grid.
struct DiscretizedProblem {
  ChainModel<double> chain;
  /// coords.row(s) is the grid point of state s.
  Eigen::MatrixXd coords;
  double dt = 0.0;
  /// Grid node closest to the origin; plays the role of the reference point.
  Eigen::Index origin_index = 0;
  std::optional<double> lambda_ref{};
  // Grid geometry, kept for interpolation and policy lookup.
  int dim = 1;
  double radius = 0.0;
  double h = 0.0;
  Eigen::Index nodes_per_dim = 0;
};

namespace detail {

inline void check_diffusion(const DiffusionModel& model) {
  if (model.dim != 1 && model.dim != 2) {
    throw std::invalid_argument("diffusion model: dim must be 1 or 2");
  }
  if (static_cast<int>(model.drift.size()) != model.dim ||
      static_cast<int>(model.sigma.size()) != model.dim) {
    throw std::invalid_argument(
        "diffusion model: need one drift and one sigma entry per dimension");
  }
  if (model.actions.empty()) {
    throw std::invalid_argument("diffusion model: empty action set");
  }
  if (!(model.radius > 0)) {
    throw std::invalid_argument("diffusion model: radius must be positive");
  }
}

inline std::string point_string(const Eigen::VectorXd& x) {
  std::string s = "(";
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", x(d));
    s += buf;
    if (d + 1 < x.size()) s += ",";
  }
  return s + ")";
}

}  // namespace detail

/// Largest time step with nonnegative self-transition probabilities:
/// 1 / max_{x,u} sum_i (a_ii(x)/h^2 + |b_i(x,u)|/h).
inline double cfl_bound(const DiffusionModel& model, double h) {
  detail::check_diffusion(model);
  const double radius = model.radius;
  const auto n_side = static_cast<Eigen::Index>(std::llround(2.0 * radius / h));
  if (n_side < 2) throw std::invalid_argument("cfl_bound: grid too coarse");
  const double h_eff = 2.0 * radius / static_cast<double>(n_side);
  double worst = 0.0;
  std::array<double, 2> x{0.0, 0.0};
  const Eigen::Index nodes = n_side + 1;
  const Eigen::Index total = model.dim == 1 ? nodes : nodes * nodes;
  for (Eigen::Index s = 0; s < total; ++s) {
    x[0] = -radius + static_cast<double>(s % nodes) * h_eff;
    x[1] = model.dim == 2 ? -radius + static_cast<double>(s / nodes) * h_eff : 0.0;
    for (const double u : model.actions) {
      double rate = 0.0;
      for (int d = 0; d < model.dim; ++d) {
        const double sig = model.sigma[static_cast<std::size_t>(d)](x[0], x[1], u);
        const double b = model.drift[static_cast<std::size_t>(d)](x[0], x[1], u);
        rate += sig * sig / (h_eff * h_eff) + std::abs(b) / h_eff;
      }
      worst = std::max(worst, rate);
    }
  }
  return 1.0 / worst;
}

/// Markov-chain approximation of the diffusion generator.  In cells where
/// diffusion dominates drift on the mesh (h |b_i| <= a_ii) the drift is
/// differenced centrally,
///   p(x +- h e_i | x, u) = dt (a_ii(x) / (2 h^2) +- b_i(x,u) / (2 h)),
/// which is second-order consistent; elsewhere the drift is split one-sided,
///   p(x +- h e_i | x, u) = dt (a_ii(x) / (2 h^2) + b_i^{+-}(x,u) / h),
/// keeping all probabilities nonnegative.  p(x|x,u) carries the complementary
/// mass, outward mass at the box faces is folded back into the boundary node
/// (reflection), and stage costs are dt * c(x,u).
inline DiscretizedProblem build_chain(const DiffusionModel& model,
                                      const GridSpec& grid) {
  detail::check_diffusion(model);
  if (!(grid.h > 0)) throw std::invalid_argument("build_chain: h must be positive");

  DiscretizedProblem problem;
  problem.dim = model.dim;
  problem.radius = model.radius;
  const auto n_side =
      static_cast<Eigen::Index>(std::llround(2.0 * model.radius / grid.h));
  if (n_side < 2) throw std::invalid_argument("build_chain: fewer than 3 nodes per dimension");
  problem.nodes_per_dim = n_side + 1;
  problem.h = 2.0 * model.radius / static_cast<double>(n_side);
  const double h = problem.h;

  const double dt = grid.dt ? *grid.dt : 0.9 * cfl_bound(model, grid.h);
  if (!(dt > 0)) throw std::invalid_argument("build_chain: dt must be positive");
  problem.dt = dt;

  const Eigen::Index nodes = problem.nodes_per_dim;
  const Eigen::Index n_states = model.dim == 1 ? nodes : nodes * nodes;
  const auto n_actions = static_cast<Eigen::Index>(model.actions.size());

  problem.coords.resize(n_states, model.dim);
  for (Eigen::Index s = 0; s < n_states; ++s) {
    problem.coords(s, 0) = -model.radius + static_cast<double>(s % nodes) * h;
    if (model.dim == 2) {
      problem.coords(s, 1) = -model.radius + static_cast<double>(s / nodes) * h;
    }
  }
  // Reference node: the grid point nearest the origin.
  Eigen::Index origin = 0;
  double best_dist = problem.coords.row(0).squaredNorm();
  for (Eigen::Index s = 1; s < n_states; ++s) {
    const double dist = problem.coords.row(s).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      origin = s;
    }
  }
  problem.origin_index = origin;

  ChainModel<double>& chain = problem.chain;
  chain.n_states = n_states;
  chain.n_actions = n_actions;
  chain.stage_costs.resize(n_states, n_actions);
  chain.strictly_positive = false;
  for (Eigen::Index a = 0; a < n_actions; ++a) {
    chain.transitions.emplace_back(DenseMatrix<double>::Zero(n_states, n_states));
  }

  const std::array<Eigen::Index, 2> stride{1, nodes};
  for (Eigen::Index s = 0; s < n_states; ++s) {
    const double x1 = problem.coords(s, 0);
    const double x2 = model.dim == 2 ? problem.coords(s, 1) : 0.0;
    const std::array<Eigen::Index, 2> idx{
        s % nodes, model.dim == 2 ? s / nodes : Eigen::Index(0)};
    for (Eigen::Index a = 0; a < n_actions; ++a) {
      const double u = model.actions[static_cast<std::size_t>(a)];
      auto& P = chain.transitions[static_cast<std::size_t>(a)];
      double off_mass = 0.0;
      for (int d = 0; d < model.dim; ++d) {
        const double sig = model.sigma[static_cast<std::size_t>(d)](x1, x2, u);
        const double a_dd = sig * sig;
        if (!(a_dd > 0) || !std::isfinite(a_dd)) {
          throw std::invalid_argument(
              "build_chain: non-elliptic sigma at grid point " +
              detail::point_string(problem.coords.row(s).transpose()));
        }
        const double b = model.drift[static_cast<std::size_t>(d)](x1, x2, u);
        const double diffuse = dt * a_dd / (2.0 * h * h);
        double up, down;
        if (h * std::abs(b) <= a_dd) {
          up = diffuse + dt * b / (2.0 * h);
          down = diffuse - dt * b / (2.0 * h);
        } else {
          up = diffuse + dt * std::max(b, 0.0) / h;
          down = diffuse + dt * std::max(-b, 0.0) / h;
        }
        if (idx[static_cast<std::size_t>(d)] + 1 < nodes) {
          P(s, s + stride[static_cast<std::size_t>(d)]) += up;
          off_mass += up;
        }  // else: reflected into the node itself
        if (idx[static_cast<std::size_t>(d)] > 0) {
          P(s, s - stride[static_cast<std::size_t>(d)]) += down;
          off_mass += down;
        }
      }
      if (off_mass > 1.0 + 1e-12) {
        throw std::invalid_argument(
            "build_chain: CFL condition violated (off-diagonal mass " +
            std::to_string(off_mass) + " > 1) at grid point " +
            detail::point_string(problem.coords.row(s).transpose()));
      }
      P(s, s) += std::max(0.0, 1.0 - off_mass);
      chain.stage_costs(s, a) = dt * model.cost(x1, x2, u);
    }
  }
  return problem;
}

/// Grid node nearest to a point (coordinates clamped into the box).
inline Eigen::Index nearest_state(const DiscretizedProblem& problem,
                                  const Eigen::VectorXd& x) {
  Eigen::Index s = 0;
  for (int d = 0; d < problem.dim; ++d) {
    const double clamped = std::clamp(x(d), -problem.radius, problem.radius);
    auto i = static_cast<Eigen::Index>(
        std::llround((clamped + problem.radius) / problem.h));
    i = std::clamp<Eigen::Index>(i, 0, problem.nodes_per_dim - 1);
    s += d == 0 ? i : i * problem.nodes_per_dim;
  }
  return s;
}

/// Multilinear interpolation of per-node values at a point (clamped into the
/// box).
inline double interpolate(const DiscretizedProblem& problem,
                          const Eigen::VectorXd& values,
                          const Eigen::VectorXd& x) {
  std::array<Eigen::Index, 2> lo{0, 0};
  std::array<double, 2> frac{0.0, 0.0};
  for (int d = 0; d < problem.dim; ++d) {
    const double clamped = std::clamp(x(d), -problem.radius, problem.radius);
    double pos = (clamped + problem.radius) / problem.h;
    auto i = static_cast<Eigen::Index>(std::floor(pos));
    i = std::clamp<Eigen::Index>(i, 0, problem.nodes_per_dim - 2);
    lo[static_cast<std::size_t>(d)] = i;
    frac[static_cast<std::size_t>(d)] = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
  }
  if (problem.dim == 1) {
    return (1.0 - frac[0]) * values(lo[0]) + frac[0] * values(lo[0] + 1);
  }
  const Eigen::Index n = problem.nodes_per_dim;
  const auto at = [&](Eigen::Index i, Eigen::Index j) { return values(i + j * n); };
  const double v00 = at(lo[0], lo[1]);
  const double v10 = at(lo[0] + 1, lo[1]);
  const double v01 = at(lo[0], lo[1] + 1);
  const double v11 = at(lo[0] + 1, lo[1] + 1);
  const double a = (1.0 - frac[0]) * v00 + frac[0] * v10;
  const double b = (1.0 - frac[0]) * v01 + frac[0] * v11;
  return (1.0 - frac[1]) * a + frac[1] * b;
}

/// Closed-form benchmark: the uncontrolled problem b = -x, sigma = sqrt(2),
/// c = alpha x^2 on the line has principal eigenvalue 2 beta and ground state
/// exp(beta x^2) with beta = (1 - sqrt(1 - 4 alpha)) / 4.
struct OuReference {
  double alpha = 0.0;
  double beta = 0.0;
  double lambda_star = 0.0;
  double operator()(double x) const { return std::exp(beta * x * x); }
};

inline OuReference ou_reference(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 0.25)) {
    throw std::invalid_argument("ou_reference: alpha must lie in (0, 1/4)");
  }
  OuReference ref;
  ref.alpha = alpha;
  ref.beta = (1.0 - std::sqrt(1.0 - 4.0 * alpha)) / 4.0;
  ref.lambda_star = 2.0 * ref.beta;
  return ref;
}

struct LambdaFromChain {
  double lambda = 0.0;  // log(Lambda_h) / dt
  SolveReport<double> report;
};

/// Bridges the chain eigenvalue back to the continuous-time rate:
/// lambda = log(Lambda_h) / dt.  The solve is normalized at the grid node
/// nearest the origin.  Non-convergence is propagated through the report.
inline LambdaFromChain lambda_from_chain(const DiscretizedProblem& problem,
                                         SolverConfig<double> config = {}) {
  config.x0 = problem.origin_index;
  LambdaFromChain out;
  out.report = solve_rvi(problem.chain, config);
  out.lambda = std::log(out.report.lambda_est) / problem.dt;
  return out;
}

}  // namespace riskvi
