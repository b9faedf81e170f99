// Command-line front end: validate / solve / oracle / discretize / pde / mc.
// JSON in, JSON out; every file-producing run drops a manifest next to its
// outputs so results can be reproduced byte for byte.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "riskvi/diffusion.hpp"
#include "riskvi/io.hpp"
#include "riskvi/mc.hpp"
#include "riskvi/parabolic.hpp"
#include "riskvi/solver.hpp"
#include "riskvi/spectral.hpp"
#include "riskvi/version.hpp"

namespace {

using riskvi::Json;

constexpr int kExitOk = 0;
constexpr int kExitInvalidInput = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitInternal = 3;

struct RunContext {
  std::string command_line;
  std::string subcommand;
  std::string input;
  std::uint64_t seed = 0;
  bool seed_set = false;
  Json overrides = Json::object();
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

void write_file(const std::string& path, const std::string& contents,
                RunContext& ctx) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw riskvi::IoError("cannot write " + path);
  out << contents;
  ctx.outputs.push_back(path);
}

// Every run that produces files also drops <first output>.manifest.json with
// the exact invocation, so a result can be traced back to its inputs.
void write_manifest(const RunContext& ctx) {
  if (ctx.outputs.empty()) return;
  Json manifest;
  manifest["command"] = ctx.command_line;
  manifest["subcommand"] = ctx.subcommand;
  manifest["input"] = ctx.input;
  manifest["overrides"] = ctx.overrides;
  if (ctx.seed_set) manifest["seed"] = ctx.seed;
  manifest["outputs"] = ctx.outputs;
  manifest["tool_version"] = riskvi::kVersion;
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - ctx.started)
                           .count();
  manifest["wall_clock_sec"] = elapsed;
  const std::string path = ctx.outputs.front() + ".manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (out) out << manifest.dump(2) << "\n";
}

void emit_json(const Json& j, const std::string& out_path, RunContext& ctx) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_file(out_path, j.dump(2) + "\n", ctx);
  }
}

Eigen::VectorXd parse_point(const std::string& text, int dim) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  std::stringstream ss(text);
  std::string item;
  int d = 0;
  while (std::getline(ss, item, ',')) {
    if (d >= dim) throw riskvi::IoError("--x-start has too many coordinates");
    x(d++) = std::stod(item);
  }
  if (d != dim) throw riskvi::IoError("--x-start needs one value per dimension");
  return x;
}

struct LoadedReport {
  double lambda_est = 0.0;
  Eigen::VectorXd value;
  riskvi::PolicyVector policy;
};

LoadedReport load_report(const std::string& path) {
  const Json j = riskvi::load_json_file(path);
  LoadedReport report;
  if (!j.contains("lambda_est") || !j.contains("value") || !j.contains("policy")) {
    throw riskvi::IoError(path + " is not a solve/pde report");
  }
  report.lambda_est = j["lambda_est"].get<double>();
  const auto values = j["value"].get<std::vector<double>>();
  report.value = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                   static_cast<Eigen::Index>(values.size()));
  const auto actions = j["policy"].get<std::vector<int>>();
  report.policy = Eigen::Map<const riskvi::PolicyVector>(
      actions.data(), static_cast<Eigen::Index>(actions.size()));
  return report;
}

std::string ground_state_csv(const riskvi::DiscretizedProblem& problem,
                             const Eigen::VectorXd& phi) {
  std::ostringstream out;
  out << "x1";
  if (problem.dim == 2) out << ",x2";
  out << ",psi\n";
  char buf[96];
  for (Eigen::Index s = 0; s < problem.chain.n_states; ++s) {
    if (problem.dim == 2) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                    problem.coords(s, 0), problem.coords(s, 1), phi(s));
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", problem.coords(s, 0),
                    phi(s));
    }
    out << buf;
  }
  return out.str();
}

int run_validate(const std::string& input) {
  const Json j = riskvi::load_json_file(input);
  const std::string type = j.contains("type") ? j["type"].get<std::string>() : "";
  if (type == "diffusion") {
    const auto file = riskvi::diffusion_from_json(j);
    riskvi::build_chain(file.model, file.grid);  // throws on CFL/ellipticity
    std::cout << "ok: diffusion problem is well-formed\n";
    return kExitOk;
  }
  // structural errors surface as IoError inside chain_from_json, so build the
  // model leniently here to report violations as data
  riskvi::ChainModel<double> model;
  try {
    model = riskvi::chain_from_json(j);
  } catch (const riskvi::IoError& e) {
    std::cout << e.what() << "\n";
    return kExitInvalidInput;
  }
  const auto violations = riskvi::validate(model);
  if (violations.empty()) {
    std::cout << "ok: model satisfies all invariants\n";
    return kExitOk;
  }
  for (const auto& v : violations) std::cout << v.message << "\n";
  return kExitInvalidInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risk-sensitive optimal control solver"};
  app.set_version_flag("--version", std::string("riskvi ") + riskvi::kVersion);
  app.require_subcommand(1);

  RunContext ctx;
  {
    std::ostringstream cmd;
    for (int i = 0; i < argc; ++i) cmd << (i ? " " : "") << argv[i];
    ctx.command_line = cmd.str();
  }

  std::string input, out_path, trace_path, ground_state_path, report_path;
  std::string mode = "normalized", check = "identity", x_start_text = "0";
  double tol = 1e-10, t_end = 40.0, horizon = 5.0, dt_sim = 0.01;
  double lambda = 0.0;
  long max_iter = 100000, n_paths = 100000;
  std::uint64_t seed = 0;
  Eigen::Index x0 = 0;
  int threads = 1;
  bool log_space = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("input", input, "problem JSON file")->required();
    cmd->add_option("--out", out_path, "write the result to this file");
  };

  auto* validate_cmd = app.add_subcommand("validate", "check a problem file");
  validate_cmd->add_option("input", input, "problem JSON file")->required();

  auto* solve_cmd =
      app.add_subcommand("solve", "relative value iteration on a chain");
  add_common(solve_cmd);
  solve_cmd->add_option("--tol", tol, "span tolerance on log-increments");
  solve_cmd->add_option("--max-iter", max_iter, "iteration cap");
  solve_cmd->add_option("--x0", x0, "reference state");
  auto* lambda_opt = solve_cmd->add_option(
      "--lambda", lambda, "run plain value iteration with this eigenvalue");
  solve_cmd->add_flag("--log-space", log_space, "sweep in the log domain");
  solve_cmd->add_option("--trace", trace_path, "write per-iteration CSV here");

  auto* oracle_cmd =
      app.add_subcommand("oracle", "exhaustive policy enumeration ground truth");
  add_common(oracle_cmd);
  auto* oracle_tol_opt =
      oracle_cmd->add_option("--tol", tol, "power-iteration tolerance");
  oracle_cmd->add_option("--threads", threads, "worker threads (default 1)");

  auto* discretize_cmd = app.add_subcommand(
      "discretize", "write the chain approximation of a diffusion");
  add_common(discretize_cmd);

  auto* pde_cmd = app.add_subcommand(
      "pde", "parabolic VI/RVI flows on the discretized diffusion");
  add_common(pde_cmd);
  pde_cmd->add_option("--mode", mode, "normalized | euler-ode")
      ->check(CLI::IsMember({"normalized", "euler-ode"}));
  pde_cmd->add_option("--t-end", t_end, "flow horizon in time units");
  auto* pde_lambda_opt = pde_cmd->add_option(
      "--lambda", lambda, "run the VI flow with this reference rate");
  pde_cmd->add_option("--ground-state", ground_state_path,
                      "write the final profile CSV here");

  auto* mc_cmd = app.add_subcommand("mc", "monte carlo identity checks");
  add_common(mc_cmd);
  mc_cmd->add_option("--check", check, "identity | growth | martingale")
      ->check(CLI::IsMember({"identity", "growth", "martingale"}));
  mc_cmd->add_option("--report", report_path,
                     "solve/pde report supplying the eigen-triple");
  mc_cmd->add_option("--paths", n_paths, "number of sample paths");
  mc_cmd->add_option("--horizon", horizon, "steps (chains) or time (SDEs)");
  mc_cmd->add_option("--dt-sim", dt_sim, "Euler-Maruyama step");
  mc_cmd->add_option("--seed", seed, "RNG seed");
  mc_cmd->add_option("--x-start", x_start_text,
                     "start state index (chains) or comma-separated point");
  mc_cmd->add_option("--threads", threads, "worker threads (default 1)");

  CLI11_PARSE(app, argc, argv);

  CLI::App* active = app.get_subcommands().front();
  ctx.subcommand = active->get_name();
  ctx.input = input;
  for (const auto* opt : active->get_options()) {
    if (opt->count() > 0 && opt->get_name().rfind("--", 0) == 0) {
      ctx.overrides[opt->get_name()] = opt->results().front();
    }
  }
  ctx.seed = seed;
  ctx.seed_set = mc_cmd->parsed();

  try {
    if (validate_cmd->parsed()) {
      return run_validate(input);
    }

    if (solve_cmd->parsed()) {
      const Json j = riskvi::load_json_file(input);
      const auto model = riskvi::chain_from_json(j);
      riskvi::SolverConfig<double> config;
      config.tol = tol;
      config.max_iter = static_cast<int>(max_iter);
      config.x0 = x0;
      config.log_space = log_space;
      if (lambda_opt->count() > 0) config.lambda = lambda;
      const auto report = lambda_opt->count() > 0
                              ? riskvi::solve_vi(model, config)
                              : riskvi::solve_rvi(model, config);
      emit_json(riskvi::solve_report_to_json(report), out_path, ctx);
      if (!trace_path.empty()) {
        std::ostringstream csv;
        riskvi::trace_to_csv(report, csv);
        write_file(trace_path, csv.str(), ctx);
      }
      write_manifest(ctx);
      if (!report.converged) {
        std::cerr << "solve: " << report.message << "\n";
        return kExitNoConvergence;
      }
      return kExitOk;
    }

    if (oracle_cmd->parsed()) {
      const auto model = riskvi::chain_from_json(riskvi::load_json_file(input));
      const double oracle_tol = oracle_tol_opt->count() > 0 ? tol : 1e-12;
      const auto result = riskvi::enumerate_min(model, 1000000, oracle_tol, threads);
      emit_json(riskvi::oracle_to_json(result), out_path, ctx);
      write_manifest(ctx);
      return kExitOk;
    }

    if (discretize_cmd->parsed()) {
      const auto file = riskvi::diffusion_from_json(riskvi::load_json_file(input));
      auto problem = riskvi::build_chain(file.model, file.grid);
      for (Eigen::Index s = 0; s < problem.chain.n_states; ++s) {
        problem.chain.state_labels.push_back(riskvi::detail::point_string(
            problem.coords.row(s).transpose()));
      }
      Json j = riskvi::chain_to_json(problem.chain);
      emit_json(j, out_path, ctx);
      write_manifest(ctx);
      std::cerr << "discretize: " << problem.chain.n_states << " states, dt = "
                << problem.dt << "\n";
      return kExitOk;
    }

    if (pde_cmd->parsed()) {
      const auto file = riskvi::diffusion_from_json(riskvi::load_json_file(input));
      auto problem = riskvi::build_chain(file.model, file.grid);
      const Eigen::VectorXd phi0 = Eigen::VectorXd::Ones(problem.chain.n_states);
      riskvi::ParabolicResult result;
      Json j;
      if (pde_lambda_opt->count() > 0) {
        problem.lambda_ref = lambda;
        result = riskvi::run_parabolic_vi(problem, *problem.lambda_ref, phi0, t_end);
        j["mode"] = "vi";
        j["lambda_ref"] = lambda;
        j["phi_x0"] = result.trace.empty() ? phi0(problem.origin_index)
                                           : result.trace.back();
      } else {
        const auto rvi_mode = mode == "normalized" ? riskvi::RviMode::Normalized
                                                   : riskvi::RviMode::EulerOde;
        result = riskvi::run_parabolic_rvi(problem, phi0, t_end, rvi_mode);
        j["mode"] = mode;
        j["lambda_est"] = result.lambda_est;
      }
      j["t_end"] = t_end;
      j["dt"] = problem.dt;
      j["n_states"] = problem.chain.n_states;
      j["x0_index"] = problem.origin_index;
      j["positivity_lost"] = result.positivity_lost;
      j["value"] = std::vector<double>(result.phi.data(),
                                       result.phi.data() + result.phi.size());
      j["policy"] = std::vector<int>(result.greedy.data(),
                                     result.greedy.data() + result.greedy.size());
      emit_json(j, out_path, ctx);
      std::string csv_path = ground_state_path;
      if (csv_path.empty() && !out_path.empty()) {
        csv_path = out_path + ".ground_state.csv";
      }
      if (!csv_path.empty()) {
        write_file(csv_path, ground_state_csv(problem, result.phi), ctx);
      }
      write_manifest(ctx);
      if (result.positivity_lost) {
        std::cerr << "pde: euler-ode profile lost positivity at step "
                  << result.failed_step << " (reduce dt)\n";
        return kExitNoConvergence;
      }
      return kExitOk;
    }

    if (mc_cmd->parsed()) {
      riskvi::McConfig cfg;
      cfg.seed = seed;
      cfg.n_paths = n_paths;
      cfg.horizon = horizon;
      cfg.dt_sim = dt_sim;
      cfg.threads = threads;
      const Json j = riskvi::load_json_file(input);
      const std::string type =
          j.contains("type") ? j["type"].get<std::string>() : "";
      Json out;
      if (check == "identity") {
        if (type != "chain") {
          throw riskvi::IoError("identity check needs a chain problem file");
        }
        const auto model = riskvi::chain_from_json(j);
        if (report_path.empty()) {
          throw riskvi::IoError("identity check needs --report from `solve`");
        }
        const auto report = load_report(report_path);
        const auto x_start = static_cast<Eigen::Index>(std::stol(x_start_text));
        out = riskvi::mc_to_json(riskvi::chain_identity_check(
            model, report.policy, report.value, report.lambda_est, x_start, cfg));
      } else {
        if (type != "diffusion") {
          throw riskvi::IoError(check + " check needs a diffusion problem file");
        }
        const auto file = riskvi::diffusion_from_json(j);
        const auto problem = riskvi::build_chain(file.model, file.grid);
        const auto x_start = parse_point(x_start_text, file.model.dim);
        riskvi::PolicyVector policy =
            riskvi::PolicyVector::Zero(problem.chain.n_states);
        LoadedReport report;
        if (!report_path.empty()) {
          report = load_report(report_path);
          policy = report.policy;
        }
        if (check == "growth") {
          out = riskvi::mc_to_json(riskvi::sde_growth_estimate(
              file.model, problem, policy, x_start, cfg));
        } else {
          if (report_path.empty()) {
            throw riskvi::IoError(
                "martingale check needs --report from `pde --mode normalized`");
          }
          out = riskvi::mc_to_json(riskvi::sde_martingale_check(
              file.model, problem, report.value, report.lambda_est, policy,
              x_start, cfg));
        }
      }
      emit_json(out, out_path, ctx);
      write_manifest(ctx);
      return kExitOk;
    }
  } catch (const riskvi::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const riskvi::ExprError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed document: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const riskvi::OverflowError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoConvergence;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
