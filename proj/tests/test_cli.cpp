#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// Drives the installed binary end to end: exit codes, file outputs,
// manifests, and byte-for-byte reproducibility.

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string binary() {
  const char* bin = std::getenv("RISKVI_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "RISKVI_BIN must point at the CLI binary");
  return bin;
}

std::string fixtures() {
  const char* dir = std::getenv("RISKVI_FIXTURES");
  REQUIRE_MESSAGE(dir != nullptr, "RISKVI_FIXTURES must point at fixtures/");
  return dir;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) {
    result.output.append(buf, n);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("riskvi_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("help never touches the filesystem and exits cleanly") {
  CHECK(run("--help").exit_code == 0);
  for (const char* sub :
       {"validate", "solve", "oracle", "discretize", "pde", "mc"}) {
    const auto r = run(std::string(sub) + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("Usage") != std::string::npos);
  }
}

TEST_CASE("validate distinguishes clean and broken files by exit code") {
  CHECK(run("validate " + fixtures() + "/rank_one.json").exit_code == 0);

  TempDir tmp;
  const auto broken = tmp.path / "broken.json";
  std::ofstream(broken) << R"({"type":"chain","n_states":2,"n_actions":1,
      "P":[[[0.7,0.2]],[[0.5,0.5]]],"k":[[0.0],[0.0]]})";
  const auto r = run("validate " + broken.string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("(x=0, u=0)") != std::string::npos);

  CHECK(run("validate /nonexistent.json").exit_code == 1);
}

TEST_CASE("solve writes the report, trace and manifest") {
  TempDir tmp;
  const auto out = tmp.path / "report.json";
  const auto trace = tmp.path / "trace.csv";
  const auto r = run("solve " + fixtures() + "/rank_one.json --tol 1e-10 --out " +
                     out.string() + " --trace " + trace.string());
  REQUIRE(r.exit_code == 0);

  const json report = json::parse(slurp(out));
  CHECK(std::abs(report["lambda_est"].get<double>() - 3.0) < 1e-9);
  CHECK(report["converged"].get<bool>());
  CHECK(report["value"][0].get<double>() == report["lambda_est"].get<double>());

  const std::string csv = slurp(trace);
  CHECK(csv.rfind("iter,v_x0,span_log_increment,policy_changes\n", 0) == 0);

  const json manifest = json::parse(slurp(out.string() + ".manifest.json"));
  CHECK(manifest["subcommand"] == "solve");
  CHECK(manifest["tool_version"].is_string());
  CHECK(manifest["outputs"].size() == 2);
}

TEST_CASE("identical invocations produce byte-identical result files") {
  TempDir tmp;
  const auto out1 = tmp.path / "a.json";
  const auto out2 = tmp.path / "b.json";
  const std::string base =
      "solve " + fixtures() + "/three_state.json --tol 1e-11 --out ";
  REQUIRE(run(base + out1.string()).exit_code == 0);
  REQUIRE(run(base + out2.string()).exit_code == 0);
  CHECK(slurp(out1) == slurp(out2));
}

TEST_CASE("oracle agrees with solve on the shipped chain") {
  TempDir tmp;
  const auto solve_out = tmp.path / "solve.json";
  const auto oracle_out = tmp.path / "oracle.json";
  REQUIRE(run("solve " + fixtures() + "/three_state.json --tol 1e-11 --out " +
              solve_out.string())
              .exit_code == 0);
  REQUIRE(run("oracle " + fixtures() + "/three_state.json --out " +
              oracle_out.string())
              .exit_code == 0);
  const json solve = json::parse(slurp(solve_out));
  const json oracle = json::parse(slurp(oracle_out));
  CHECK(std::abs(solve["lambda_est"].get<double>() -
                 oracle["lambda_star"].get<double>()) <
        1e-8 * oracle["lambda_star"].get<double>());
  CHECK(oracle["n_policies"] == 8);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(solve["policy"][i] == oracle["best_policy"][i]);
  }
}

TEST_CASE("solve with --lambda runs plain value iteration") {
  const auto good = run("solve " + fixtures() + "/rank_one.json --lambda 3.0");
  CHECK(good.exit_code == 0);
  // a wrong eigenvalue is a non-convergence, exit code 2
  const auto bad =
      run("solve " + fixtures() + "/rank_one.json --lambda 6.0 --max-iter 500");
  CHECK(bad.exit_code == 2);
}

TEST_CASE("discretize emits a valid chain with coordinate labels") {
  TempDir tmp;
  const auto out = tmp.path / "chain.json";
  REQUIRE(run("discretize " + fixtures() + "/ou_coarse.json --out " +
              out.string())
              .exit_code == 0);
  const json chain = json::parse(slurp(out));
  CHECK(chain["type"] == "chain");
  CHECK(chain["n_states"] == 101);
  CHECK(chain["labels"].size() == 101);
  // the generated chain round-trips through validate
  CHECK(run("validate " + out.string()).exit_code == 0);
}

TEST_CASE("pde normalized mode reports the OU rate and a ground-state CSV") {
  TempDir tmp;
  const auto out = tmp.path / "pde.json";
  const auto r = run("pde " + fixtures() + "/ou_coarse.json --mode normalized "
                     "--t-end 50 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  const json report = json::parse(slurp(out));
  CHECK(std::abs(report["lambda_est"].get<double>() - 0.25) < 0.01);
  const std::string csv = slurp(out.string() + ".ground_state.csv");
  CHECK(csv.rfind("x1,psi\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 102);  // header + 101 rows
}

TEST_CASE("mc identity consumes a solve report") {
  TempDir tmp;
  const auto solve_out = tmp.path / "solve.json";
  REQUIRE(run("solve " + fixtures() + "/rank_one.json --tol 1e-11 --out " +
              solve_out.string())
              .exit_code == 0);
  const auto mc_out = tmp.path / "mc.json";
  const auto r = run("mc " + fixtures() + "/rank_one.json --check identity "
                     "--report " + solve_out.string() +
                     " --paths 20000 --horizon 5 --seed 1 --out " + mc_out.string());
  REQUIRE(r.exit_code == 0);
  const json mc = json::parse(slurp(mc_out));
  const double mean = mc["ratio_mean"].get<double>();
  const double err = mc["std_err"].get<double>();
  CHECK(std::abs(mean - 1.0) <= 3.0 * err);
  CHECK(mc["seed"] == 1);
  const json manifest = json::parse(slurp(mc_out.string() + ".manifest.json"));
  CHECK(manifest["seed"] == 1);
}

TEST_CASE("mc growth rejects a chain problem file with exit 1") {
  const auto r = run("mc " + fixtures() + "/rank_one.json --check growth");
  CHECK(r.exit_code == 1);
}

TEST_CASE("unknown subcommands and missing files fail cleanly") {
  CHECK(run("frobnicate").exit_code != 0);
  CHECK(run("solve /does/not/exist.json").exit_code == 1);
}

TEST_CASE("type errors in documents are invalid input, not internal errors") {
  TempDir tmp;
  const auto bad = tmp.path / "bad_types.json";
  std::ofstream(bad) << R"({"type":"chain","n_states":"two","n_actions":1,
      "P":[[[1.0]]],"k":[[0.0]]})";
  CHECK(run("solve " + bad.string()).exit_code == 1);
  const auto bad_expr = tmp.path / "bad_expr.json";
  std::ofstream(bad_expr) << R"({"type":"diffusion","dim":1,"drift":"-x9",
      "sigma":"1","cost":"0","actions":[0.0],"radius":1.0,"h":0.1})";
  CHECK(run("pde " + bad_expr.string()).exit_code == 1);
}
