#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddlasso/bench.hpp"
#include "ddlasso/inference.hpp"
#include "ddlasso/simgen.hpp"

namespace ddlasso::config {

using Json = nlohmann::json;

/// Scenario JSON. Every field is written; on input, missing fields keep
/// their defaults and unknown keys are rejected with InvalidArgument.
Json scenario_to_json(const simgen::Scenario& s);
simgen::Scenario scenario_from_json(const Json& j);

/// "trim", "identity" or "pca:K".
struct TransformChoice {
  inference::TransformKind kind = inference::TransformKind::Trim;
  Eigen::Index q_hat = 0;
};
TransformChoice parse_transform(const std::string& s);
std::string to_string(const TransformChoice& t);

/// "cv" or "theory:A:sigmaE:sigmaJ".
inference::Tuning parse_tuning(const std::string& s);

/// User-facing estimator settings, mirrored in JSON under "ddl".
struct DdlSettings {
  double rho = 0.5;
  double rho_j = 0.5;
  double alpha = 0.05;
  std::string transform = "trim";
  std::string tuning = "cv";
  int folds = 10;
  double variance_inflation = 1.25;
  std::optional<Eigen::Index> confounders;

  inference::DdlConfig build(std::uint64_t seed) const;
};

Json ddl_to_json(const DdlSettings& d);
DdlSettings ddl_from_json(const Json& j);

struct Sweep {
  std::string axis = "none";
  std::vector<double> values;
};

/// Axes a sweep can vary.
const std::vector<std::string>& sweep_axes();

struct SimulateConfig {
  std::uint64_t master_seed = 0;
  int workers = 1;
  Eigen::Index reps = 300;
  Eigen::Index target = 1;  // 1-based column
  std::vector<bench::Method> methods{bench::Method::DDL, bench::Method::DebiasedLasso, bench::Method::SharedInit};
  simgen::Scenario scenario;
  DdlSettings ddl;
  Sweep sweep;

  std::vector<bench::Cell> cells() const;
  void validate() const;
};

Json simulate_to_json(const SimulateConfig& c);
SimulateConfig simulate_from_json(const Json& j);

struct FitConfig {
  std::string input;
  std::string response;
  std::string targets = "all";
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int workers = 1;
  DdlSettings ddl;
};

FitConfig fit_from_json(const Json& j);

/// Parse a JSON file; InvalidArgument on I/O or syntax errors.
Json load_json(const std::string& path);

}  // namespace ddlasso::config
