#pragma once

#include <json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "riskvi/chain.hpp"
#include "riskvi/diffusion.hpp"
#include "riskvi/mc.hpp"
#include "riskvi/solver.hpp"
#include "riskvi/spectral.hpp"

namespace riskvi {

// Insertion-ordered documents keep result files deterministic and diffable.
using Json = nlohmann::ordered_json;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline const Json& require_field(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw IoError(std::string("missing field \"") + key + "\"");
  }
  return *it;
}

inline double as_number(const Json& j, const char* what) {
  if (!j.is_number()) throw IoError(std::string(what) + " must be a number");
  return j.get<double>();
}

}  // namespace detail

/// Parses the chain problem document
///   {"type":"chain","n_states":n,"n_actions":m,"P":[[[..]]],"k":[[..]],
///    "labels":[..]?,"strictly_positive":bool?}
/// and validates every model invariant; the first violation is reported in
/// the exception.
inline ChainModel<double> chain_from_json(const Json& j) {
  if (detail::require_field(j, "type").get<std::string>() != "chain") {
    throw IoError("expected \"type\": \"chain\"");
  }
  ChainModel<double> model;
  model.n_states = detail::require_field(j, "n_states").get<Eigen::Index>();
  model.n_actions = detail::require_field(j, "n_actions").get<Eigen::Index>();
  if (model.n_states <= 0 || model.n_actions <= 0) {
    throw IoError("n_states and n_actions must be positive");
  }
  // refuse documents whose dense tensor would not fit a desk-scale run
  const double entries = static_cast<double>(model.n_states) *
                         static_cast<double>(model.n_states) *
                         static_cast<double>(model.n_actions);
  if (entries > 2e8) {
    throw IoError("transition tensor would need " + std::to_string(entries) +
                  " entries; this tool stores chains densely");
  }
  const Json& P = detail::require_field(j, "P");
  if (!P.is_array() || static_cast<Eigen::Index>(P.size()) != model.n_states) {
    throw IoError("P must be an array with one entry per state");
  }
  for (Eigen::Index u = 0; u < model.n_actions; ++u) {
    model.transitions.emplace_back(model.n_states, model.n_states);
  }
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    const Json& row_block = P[static_cast<std::size_t>(x)];
    if (!row_block.is_array() ||
        static_cast<Eigen::Index>(row_block.size()) != model.n_actions) {
      throw IoError("P[" + std::to_string(x) +
                    "] must list one row per action");
    }
    for (Eigen::Index u = 0; u < model.n_actions; ++u) {
      const Json& row = row_block[static_cast<std::size_t>(u)];
      if (!row.is_array() ||
          static_cast<Eigen::Index>(row.size()) != model.n_states) {
        throw IoError("P[" + std::to_string(x) + "][" + std::to_string(u) +
                      "] must have one probability per next state");
      }
      for (Eigen::Index y = 0; y < model.n_states; ++y) {
        model.transitions[static_cast<std::size_t>(u)](x, y) =
            detail::as_number(row[static_cast<std::size_t>(y)], "probability");
      }
    }
  }
  const Json& k = detail::require_field(j, "k");
  if (!k.is_array() || static_cast<Eigen::Index>(k.size()) != model.n_states) {
    throw IoError("k must be an array with one entry per state");
  }
  model.stage_costs.resize(model.n_states, model.n_actions);
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    const Json& row = k[static_cast<std::size_t>(x)];
    if (!row.is_array() ||
        static_cast<Eigen::Index>(row.size()) != model.n_actions) {
      throw IoError("k[" + std::to_string(x) +
                    "] must have one cost per action");
    }
    for (Eigen::Index u = 0; u < model.n_actions; ++u) {
      model.stage_costs(x, u) =
          detail::as_number(row[static_cast<std::size_t>(u)], "stage cost");
    }
  }
  if (j.contains("labels") && !j["labels"].is_null()) {
    for (const auto& label : j["labels"]) {
      // labels may be names or coordinate tuples; keep the latter verbatim
      model.state_labels.push_back(
          label.is_string() ? label.get<std::string>() : label.dump());
    }
  }
  if (j.contains("strictly_positive")) {
    model.strictly_positive = j["strictly_positive"].get<bool>();
  }

  const auto violations = validate(model);
  if (!violations.empty()) {
    std::string msg = "model fails validation:";
    for (const auto& v : violations) msg += "\n  - " + v.message;
    throw IoError(msg);
  }
  return model;
}

inline Json chain_to_json(const ChainModel<double>& model) {
  Json j;
  j["type"] = "chain";
  j["n_states"] = model.n_states;
  j["n_actions"] = model.n_actions;
  Json P = Json::array();
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    Json per_action = Json::array();
    for (Eigen::Index u = 0; u < model.n_actions; ++u) {
      Json row = Json::array();
      for (Eigen::Index y = 0; y < model.n_states; ++y) {
        row.push_back(model.transitions[static_cast<std::size_t>(u)](x, y));
      }
      per_action.push_back(std::move(row));
    }
    P.push_back(std::move(per_action));
  }
  j["P"] = std::move(P);
  Json k = Json::array();
  for (Eigen::Index x = 0; x < model.n_states; ++x) {
    Json row = Json::array();
    for (Eigen::Index u = 0; u < model.n_actions; ++u) {
      row.push_back(model.stage_costs(x, u));
    }
    k.push_back(std::move(row));
  }
  j["k"] = std::move(k);
  if (!model.state_labels.empty()) j["labels"] = model.state_labels;
  j["strictly_positive"] = model.strictly_positive;
  return j;
}

struct DiffusionFile {
  DiffusionModel model;
  GridSpec grid;
};

namespace detail {

inline std::vector<Expr> expr_list(const Json& j, int dim, const char* what) {
  std::vector<Expr> out;
  try {
    if (j.is_string()) {
      out.push_back(Expr::parse(j.get<std::string>()));
    } else if (j.is_array()) {
      for (const auto& item : j) out.push_back(Expr::parse(item.get<std::string>()));
    } else {
      throw IoError(std::string(what) + " must be an expression string or array");
    }
  } catch (const ExprError& e) {
    throw IoError(std::string("bad ") + what + " expression: " + e.what());
  }
  if (static_cast<int>(out.size()) == 1 && dim == 2) {
    throw IoError(std::string(what) + " needs one expression per dimension");
  }
  if (static_cast<int>(out.size()) != dim) {
    throw IoError(std::string(what) + " has wrong number of components");
  }
  return out;
}

}  // namespace detail

/// Parses the diffusion problem document
///   {"type":"diffusion","dim":1|2,"drift":expr|[expr,expr],"sigma":...,
///    "cost":expr,"actions":[..],"radius":R,"h":h,"dt":number|"auto"}.
inline DiffusionFile diffusion_from_json(const Json& j) {
  if (detail::require_field(j, "type").get<std::string>() != "diffusion") {
    throw IoError("expected \"type\": \"diffusion\"");
  }
  DiffusionFile file;
  file.model.dim = detail::require_field(j, "dim").get<int>();
  if (file.model.dim != 1 && file.model.dim != 2) {
    throw IoError("dim must be 1 or 2");
  }
  file.model.drift =
      detail::expr_list(detail::require_field(j, "drift"), file.model.dim, "drift");
  file.model.sigma =
      detail::expr_list(detail::require_field(j, "sigma"), file.model.dim, "sigma");
  try {
    file.model.cost = Expr::parse(detail::require_field(j, "cost").get<std::string>());
  } catch (const ExprError& e) {
    throw IoError(std::string("bad cost expression: ") + e.what());
  }
  for (const auto& action : detail::require_field(j, "actions")) {
    file.model.actions.push_back(detail::as_number(action, "action value"));
  }
  if (file.model.actions.empty()) throw IoError("actions must be non-empty");
  file.model.radius = detail::as_number(detail::require_field(j, "radius"), "radius");
  file.grid.h = detail::as_number(detail::require_field(j, "h"), "h");
  if (j.contains("dt") && !j["dt"].is_null()) {
    const Json& dt = j["dt"];
    if (dt.is_string()) {
      if (dt.get<std::string>() != "auto") throw IoError("dt must be a number or \"auto\"");
    } else {
      file.grid.dt = detail::as_number(dt, "dt");
    }
  }
  return file;
}

inline Json parse_stream(std::istream& in, const std::string& name) {
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse " + name + ": " + e.what());
  }
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_stream(in, path);
}

inline ChainModel<double> load_chain(std::istream& in,
                                     const std::string& name = "<stream>") {
  return chain_from_json(parse_stream(in, name));
}

template <class Scalar>
Json solve_report_to_json(const SolveReport<Scalar>& report) {
  Json j;
  j["lambda_est"] = report.lambda_est;
  j["converged"] = report.converged;
  j["iterations"] = report.iterations;
  j["cw_lower"] = report.cw_lower;
  j["cw_upper"] = report.cw_upper;
  j["value"] = std::vector<Scalar>(report.value.data(),
                                   report.value.data() + report.value.size());
  j["policy"] = std::vector<int>(report.policy.data(),
                                 report.policy.data() + report.policy.size());
  if (!report.message.empty()) j["message"] = report.message;
  return j;
}

template <class Scalar>
void trace_to_csv(const SolveReport<Scalar>& report, std::ostream& out) {
  out << "iter,v_x0,span_log_increment,policy_changes\n";
  char buf[128];
  for (const auto& rec : report.trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d\n", rec.iter,
                  static_cast<double>(rec.v_x0),
                  static_cast<double>(rec.span_log_increment),
                  rec.policy_changes);
    out << buf;
  }
}

template <class Scalar>
Json oracle_to_json(const EnumerationResult<Scalar>& result) {
  Json j;
  j["lambda_star"] = result.lambda_star;
  j["best_policy"] = std::vector<int>(
      result.best_policy.data(),
      result.best_policy.data() + result.best_policy.size());
  j["n_policies"] = result.n_policies;
  return j;
}

inline Json mc_to_json(const McEstimate& estimate) {
  Json j;
  j["ratio_mean"] = estimate.ratio_mean;
  j["std_err"] = estimate.std_err;
  j["n_paths"] = estimate.n_paths;
  j["aborted_paths"] = estimate.aborted_paths;
  j["seed"] = estimate.seed;
  return j;
}

inline Json mc_to_json(const SdeGrowthEstimate& estimate) {
  Json j;
  j["lambda_hat"] = estimate.lambda_hat;
  j["ci_half_width"] = estimate.ci_half_width;
  j["n_paths"] = estimate.n_paths;
  j["aborted_paths"] = estimate.aborted_paths;
  j["seed"] = estimate.seed;
  j["bias_note"] = estimate.bias_note;
  return j;
}

}  // namespace riskvi
