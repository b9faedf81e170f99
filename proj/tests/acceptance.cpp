// End-to-end acceptance suite.  Each criterion prints exactly one line:
//   [PASS|FAIL] criterion N: <what was checked> (<measured numbers>)
// The process exits with the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "riskvi/chain.hpp"
#include "riskvi/diffusion.hpp"
#include "riskvi/mc.hpp"
#include "riskvi/parabolic.hpp"
#include "riskvi/solver.hpp"
#include "riskvi/spectral.hpp"

using namespace riskvi;

namespace {

struct Outcome {
  bool pass = false;
  std::string details;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

ChainModel<double> desk_model(std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(2 + seed % 5);   // 2..6 states
  const auto m = static_cast<Eigen::Index>(1 + seed % 3);   // 1..3 actions
  return random_model(seed, n, m, 0.02);
}

ChainModel<double> rank_one_fixture() {
  ChainModel<double> m;
  m.n_states = 2;
  m.n_actions = 1;
  m.transitions = {(DenseMatrix<double>(2, 2) << 0.5, 0.5, 0.5, 0.5).finished()};
  m.stage_costs =
      (DenseMatrix<double>(2, 1) << std::log(2.0), std::log(4.0)).finished();
  m.strictly_positive = true;
  return m;
}

ChainModel<double> three_state_fixture() {
  ChainModel<double> m;
  m.n_states = 3;
  m.n_actions = 2;
  m.transitions = {(DenseMatrix<double>(3, 3) << 0.70, 0.20, 0.10, 0.25, 0.50,
                    0.25, 0.05, 0.15, 0.80)
                       .finished(),
                   (DenseMatrix<double>(3, 3) << 0.10, 0.60, 0.30, 0.40, 0.20,
                    0.40, 0.34, 0.33, 0.33)
                       .finished()};
  m.stage_costs =
      (DenseMatrix<double>(3, 2) << 0.40, -0.10, -0.30, 0.20, 0.10, 0.05)
          .finished();
  m.strictly_positive = true;
  return m;
}

ChainModel<double> single_state_fixture() {
  ChainModel<double> m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transitions = {DenseMatrix<double>::Ones(1, 1)};
  m.stage_costs = DenseMatrix<double>::Zero(1, 1);
  m.strictly_positive = true;
  return m;
}

DiffusionModel ou_model(double radius, const char* cost = "0.1875*x1^2") {
  DiffusionModel m;
  m.dim = 1;
  m.drift = {Expr::parse("-x1")};
  m.sigma = {Expr::parse("2^0.5")};
  m.cost = Expr::parse(cost);
  m.actions = {0.0};
  m.radius = radius;
  return m;
}

// ---------------------------------------------------------------------------

// 1. RVI eigenvalue matches exhaustive policy enumeration on 50 random models.
Outcome criterion_oracle_equivalence(std::vector<SolveReport<double>>& reports,
                                     std::vector<double>& oracle_values) {
  const auto start = std::chrono::steady_clock::now();
  double worst_gap = 0.0, worst_residual = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto model = desk_model(seed);
    SolverConfig<double> config;
    config.tol = 1e-11;
    const auto report = solve_rvi(model, config);
    const auto oracle = enumerate_min(model);
    reports.push_back(report);
    oracle_values.push_back(oracle.lambda_star);
    if (!report.converged) {
      return {false, "seed " + std::to_string(seed) + " did not converge"};
    }
    worst_gap = std::max(worst_gap,
                         std::abs(report.lambda_est - oracle.lambda_star) /
                             oracle.lambda_star);
    worst_residual = std::max(
        worst_residual, dp_residual(model, report.value, report.lambda_est));
  }
  const double elapsed = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max relative gap %.2e (<=1e-8), max dp residual %.2e (<=1e-8), "
                "%.2f s (<10)",
                worst_gap, worst_residual, elapsed);
  return {worst_gap <= 1e-8 && worst_residual <= 1e-8 && elapsed < 10.0, buf};
}

// 2. VI/RVI coupling identities hold step by step for 50 sweeps.
Outcome criterion_coupling(const std::vector<double>& oracle_values) {
  double worst_ratio = 0.0, worst_product = 0.0, worst_anchor = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto model = desk_model(seed);
    const auto diag =
        coupling_check(model, DenseVector<double>::Ones(model.n_states),
                       oracle_values[seed], 0, 50);
    worst_ratio = std::max(worst_ratio, diag.max_ratio_spread);
    worst_product = std::max(worst_product, diag.max_product_residual);
    worst_anchor = std::max(worst_anchor, diag.max_anchor_residual);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max ratio spread %.2e, product residual %.2e, anchor residual "
                "%.2e (all <=1e-10)",
                worst_ratio, worst_product, worst_anchor);
  return {worst_ratio <= 1e-10 && worst_product <= 1e-10 &&
              worst_anchor <= 1e-10,
          buf};
}

// 3. Converged reports are pinned at V(x0) = lambda and twist to a stochastic
//    kernel.
Outcome criterion_normalization(const std::vector<SolveReport<double>>& reports) {
  double worst_row_error = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto& report = reports[seed];
    if (report.value(0) != report.lambda_est) {
      return {false, "seed " + std::to_string(seed) + ": value(x0) != lambda"};
    }
    const auto model = desk_model(seed);
    const auto twist = twisted_kernel(model, report.value, report.lambda_est,
                                      report.policy);
    worst_row_error = std::max(worst_row_error, twist.max_row_sum_error);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "value(x0) == lambda_est bitwise on 50/50, max twisted row-sum "
                "error %.2e (<=1e-10)",
                worst_row_error);
  return {worst_row_error <= 1e-10, buf};
}

// 4. Collatz-Wielandt sandwich along every sweep, tight at convergence.
Outcome criterion_cw_sandwich(const std::vector<SolveReport<double>>& reports,
                              const std::vector<double>& oracle_values) {
  double worst_violation = 0.0, worst_final_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto& report = reports[seed];
    const double truth = oracle_values[seed];
    for (const auto& rec : report.trace) {
      worst_violation = std::max(worst_violation,
                                 (rec.cw_lower - truth) / truth);
      worst_violation = std::max(worst_violation,
                                 (truth - rec.cw_upper) / truth);
    }
    worst_final_gap =
        std::max(worst_final_gap,
                 (report.cw_upper - report.cw_lower) / report.lambda_est);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "max sandwich violation %.2e (<=1e-10 roundoff), final gap "
                "%.2e (<=1e-8)",
                worst_violation, worst_final_gap);
  return {worst_violation <= 1e-10 && worst_final_gap <= 1e-8, buf};
}

// 5. OU benchmark: rate, ground state, truncation insensitivity.
Outcome criterion_ou_benchmark(DiscretizedProblem& fine_problem,
                               SolveReport<double>& fine_report,
                               double& fine_lambda) {
  const auto start = std::chrono::steady_clock::now();
  const auto ref = ou_reference(0.1875);
  SolverConfig<double> config;
  config.tol = 1e-9;
  config.max_iter = 400000;
  config.keep_trace = false;

  fine_problem = build_chain(ou_model(6.0), GridSpec{0.03, {}});
  const auto lf6 = lambda_from_chain(fine_problem, config);
  fine_report = lf6.report;
  fine_lambda = lf6.lambda;
  if (!lf6.report.converged) return {false, "R=6 solve did not converge"};

  double ground_err = 0.0;
  const double v0 = lf6.report.value(fine_problem.origin_index);
  for (Eigen::Index s = 0; s < fine_problem.chain.n_states; ++s) {
    const double x = fine_problem.coords(s, 0);
    if (std::abs(x) <= 3.0) {
      const double exact = ref(x);
      ground_err = std::max(
          ground_err, std::abs(lf6.report.value(s) / v0 - exact) / exact);
    }
  }

  const auto wide = build_chain(ou_model(12.0), GridSpec{0.03, {}});
  const auto lf12 = lambda_from_chain(wide, config);
  if (!lf12.report.converged) return {false, "R=12 solve did not converge"};
  const double truncation_shift = std::abs(lf12.lambda - lf6.lambda) / lf6.lambda;

  const double lambda_err = std::abs(lf6.lambda - ref.lambda_star) / ref.lambda_star;
  const double elapsed = seconds_since(start);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "lambda %.6f (err %.3f%% <= 2%%), ground state err %.3f%% "
                "(<=5%%), R-doubling shift %.4f%% (<0.1%%), %.1f s (<60)",
                lf6.lambda, 100 * lambda_err, 100 * ground_err,
                100 * truncation_shift, elapsed);
  return {lambda_err <= 0.02 && ground_err <= 0.05 &&
              truncation_shift < 0.001 && elapsed < 60.0,
          buf};
}

// 6. The VI/RVI profile ratio is spatially flat (normalized mode) and its
//    dispersion scales linearly in dt (euler-ode mode).
Outcome criterion_ratio_identity() {
  const auto model = ou_model(5.0);
  const auto problem = build_chain(model, GridSpec{0.1, {}});
  Eigen::VectorXd phi0(problem.chain.n_states);
  for (Eigen::Index s = 0; s < phi0.size(); ++s) {
    phi0(s) = 1.0 + 0.3 * std::cos(0.13 * static_cast<double>(s));
  }
  const auto flat = ratio_diagnostic(problem, phi0, 2.0, RviMode::Normalized);

  const auto halved = build_chain(model, GridSpec{0.1, problem.dt / 2.0});
  const auto coarse = ratio_diagnostic(problem, phi0, 1.0, RviMode::EulerOde);
  const auto fine = ratio_diagnostic(halved, phi0, 1.0, RviMode::EulerOde);
  const double shrink = coarse.max_cov / fine.max_cov;

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "normalized max CoV %.2e (<=1e-10), euler CoV shrink factor "
                "%.2f (in [1.5, 3])",
                flat.max_cov, shrink);
  return {flat.max_cov <= 1e-10 && shrink >= 1.5 && shrink <= 3.0, buf};
}

// 7. The euler-ode trace converges to the normalized-mode eigenvalue rate.
Outcome criterion_rvi_limit(const DiscretizedProblem& fine_problem) {
  const Eigen::VectorXd phi0 = Eigen::VectorXd::Ones(fine_problem.chain.n_states);
  const double t_end = 40.0;
  const auto normalized =
      run_parabolic_rvi(fine_problem, phi0, t_end, RviMode::Normalized);
  const auto euler =
      run_parabolic_rvi(fine_problem, phi0, t_end, RviMode::EulerOde);
  if (euler.positivity_lost) return {false, "euler flow lost positivity"};
  const double gap = std::abs(euler.lambda_est - normalized.lambda_est);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "|euler - normalized| = %.2e (<= 5 dt = %.2e)", gap,
                5.0 * fine_problem.dt);
  return {gap <= 5.0 * fine_problem.dt, buf};
}

// 8. Monte Carlo identities: exact chain identity on all fixtures, martingale
//    identity for the OU ground state at T = 2.
Outcome criterion_monte_carlo(const DiscretizedProblem& fine_problem,
                              const SolveReport<double>& fine_report,
                              double fine_lambda) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<ChainModel<double>> fixtures = {
      rank_one_fixture(), single_state_fixture(), three_state_fixture(),
      random_model(7, 5, 3, 0.02)};
  double worst_sigmas = 0.0;
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    SolverConfig<double> config;
    config.tol = 1e-11;
    config.keep_trace = false;
    const auto report = solve_rvi(fixtures[i], config);
    if (!report.converged) return {false, "fixture solve did not converge"};
    McConfig mc;
    mc.seed = 100 + i;
    mc.n_paths = 100000;
    mc.horizon = 5;
    const auto est = chain_identity_check(fixtures[i], report.policy,
                                          report.value, report.lambda_est,
                                          0, mc);
    const double dev = std::abs(est.ratio_mean - 1.0);
    if (dev > 3.0 * est.std_err) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "fixture %zu: |mean-1| = %.2e > 3 se = %.2e", i, dev,
                    3.0 * est.std_err);
      return {false, buf};
    }
    if (est.std_err > 0.0) {
      worst_sigmas = std::max(worst_sigmas, dev / est.std_err);
    }
  }

  const auto model = ou_model(6.0);
  Eigen::VectorXd x0(1);
  x0 << 0.0;
  McConfig mc;
  mc.seed = 17;
  mc.n_paths = 100000;
  mc.horizon = 2.0;
  mc.dt_sim = 0.01;
  const auto martingale =
      sde_martingale_check(model, fine_problem, fine_report.value, fine_lambda,
                           fine_report.policy, x0, mc);
  const double elapsed = seconds_since(start);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "chain identity worst deviation %.2f sigma (<=3), martingale "
                "ratio %.4f (in 1 +- 0.05), %.1f s (<60)",
                worst_sigmas, martingale.ratio_mean, elapsed);
  return {std::abs(martingale.ratio_mean - 1.0) <= 0.05 && elapsed < 60.0, buf};
}

// 9. Homogeneity of the operator and cost-shift equivariance of the rate.
Outcome criterion_equivariance() {
  double worst_homogeneity = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto model = desk_model(seed);
    CounterRng rng(seed, 7);
    DenseVector<double> j(model.n_states);
    for (Eigen::Index i = 0; i < model.n_states; ++i) {
      j(i) = 0.25 + rng.uniform01();
    }
    const auto tj = bellman_min(model, j).values;
    for (const double c : {0.125, 2.0, 64.0}) {
      const auto scaled = bellman_min(model, (c * j).eval()).values;
      worst_homogeneity = std::max(
          worst_homogeneity,
          ((scaled - c * tj).cwiseAbs().array() / (c * tj.array())).maxCoeff());
    }
  }

  DiffusionModel controlled;
  controlled.dim = 1;
  controlled.drift = {Expr::parse("-x1 + 0.4*u")};
  controlled.sigma = {Expr::parse("2^0.5")};
  controlled.cost = Expr::parse("0.2*x1^2 + 0.15*u^2");
  controlled.actions = {-1.0, 0.0, 1.0};
  controlled.radius = 3.0;
  auto shifted = controlled;
  const double c0 = 0.31;
  shifted.cost = Expr::parse("0.2*x1^2 + 0.15*u^2 + 0.31");

  SolverConfig<double> config;
  config.tol = 1e-10;
  config.keep_trace = false;
  const auto base = lambda_from_chain(build_chain(controlled, GridSpec{0.1, {}}), config);
  const auto moved = lambda_from_chain(build_chain(shifted, GridSpec{0.1, {}}), config);
  if (!base.report.converged || !moved.report.converged) {
    return {false, "controlled fixture did not converge"};
  }
  const double shift_error = std::abs((moved.lambda - base.lambda) - c0);
  const bool same_policy =
      (moved.report.policy.array() == base.report.policy.array()).all();
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "homogeneity defect %.2e (<=1e-12), cost-shift error %.2e "
                "(<=1e-9), greedy policy %s",
                worst_homogeneity, shift_error,
                same_policy ? "unchanged" : "CHANGED");
  return {worst_homogeneity <= 1e-12 && shift_error <= 1e-9 && same_policy, buf};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&failures](int index, const char* name,
                                  auto&& criterion) {
    Outcome outcome;
    try {
      outcome = criterion();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s (%s)\n", outcome.pass ? "PASS" : "FAIL",
                index, name, outcome.details.c_str());
    if (!outcome.pass) ++failures;
    std::fflush(stdout);
  };

  std::vector<SolveReport<double>> reports;
  std::vector<double> oracle_values;
  report(1, "oracle equivalence on 50 random models",
         [&] { return criterion_oracle_equivalence(reports, oracle_values); });
  report(2, "VI/RVI coupling identities over 50 sweeps",
         [&] { return criterion_coupling(oracle_values); });
  report(3, "fixed-point normalization and twisted-kernel stochasticity",
         [&] { return criterion_normalization(reports); });
  report(4, "Collatz-Wielandt sandwich along every run",
         [&] { return criterion_cw_sandwich(reports, oracle_values); });

  DiscretizedProblem fine_problem;
  SolveReport<double> fine_report;
  double fine_lambda = 0.0;
  report(5, "OU benchmark rate, ground state and truncation insensitivity",
         [&] { return criterion_ou_benchmark(fine_problem, fine_report, fine_lambda); });
  report(6, "RVI ratio identity (flat in normalized mode, O(dt) in euler mode)",
         [&] { return criterion_ratio_identity(); });
  report(7, "euler-ode trace converges to the normalized-mode rate",
         [&] { return criterion_rvi_limit(fine_problem); });
  report(8, "Monte Carlo chain identity and OU martingale identity",
         [&] { return criterion_monte_carlo(fine_problem, fine_report, fine_lambda); });
  report(9, "operator homogeneity and cost-shift equivariance",
         [&] { return criterion_equivariance(); });

  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria FAILED\n", failures);
  }
  return failures;
}
