#include "ddlasso/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "ddlasso/error.hpp"

namespace ddlasso::config {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); }

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) bad(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) bad("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(std::string("bad value for '") + key + "' in " + where);
  }
}

// Integers must be given as integral JSON numbers.
void read_index(const Json& j, const char* key, Eigen::Index& out, const std::string& where) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_number_integer()) bad(std::string("'") + key + "' in " + where + " must be an integer");
  out = v.get<Eigen::Index>();
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad("cannot parse " + what + " '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) bad("cannot parse " + what + " '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Json scenario_to_json(const simgen::Scenario& s) {
  return Json{{"n", s.n},
              {"p", s.p},
              {"q", s.q},
              {"beta", s.beta},
              {"sigma_e", s.sigma_e},
              {"cov", {{"kind", simgen::to_string(s.cov.kind)}, {"kappa", s.cov.kappa}}},
              {"loadings",
               {{"kind", simgen::to_string(s.loadings.kind)}, {"frac", s.loadings.frac}, {"decay", s.loadings.decay}}},
              {"dist", simgen::to_string(s.dist)},
              {"mode", simgen::to_string(s.mode)}};
}

simgen::Scenario scenario_from_json(const Json& j) {
  const std::string where = "scenario";
  reject_unknown(j, {"n", "p", "q", "beta", "sigma_e", "cov", "loadings", "dist", "mode"}, where);
  simgen::Scenario s;
  read_index(j, "n", s.n, where);
  read_index(j, "p", s.p, where);
  read_index(j, "q", s.q, where);
  read(j, "beta", s.beta, where);
  read(j, "sigma_e", s.sigma_e, where);
  if (j.contains("cov")) {
    const Json& c = j.at("cov");
    reject_unknown(c, {"kind", "kappa"}, "scenario.cov");
    std::string kind = simgen::to_string(s.cov.kind);
    read(c, "kind", kind, "scenario.cov");
    s.cov.kind = simgen::cov_kind_from_string(kind);
    read(c, "kappa", s.cov.kappa, "scenario.cov");
  }
  if (j.contains("loadings")) {
    const Json& l = j.at("loadings");
    reject_unknown(l, {"kind", "frac", "decay"}, "scenario.loadings");
    std::string kind = simgen::to_string(s.loadings.kind);
    read(l, "kind", kind, "scenario.loadings");
    s.loadings.kind = simgen::loading_kind_from_string(kind);
    read(l, "frac", s.loadings.frac, "scenario.loadings");
    read(l, "decay", s.loadings.decay, "scenario.loadings");
  }
  std::string dist = simgen::to_string(s.dist);
  read(j, "dist", dist, where);
  s.dist = simgen::distribution_from_string(dist);
  std::string mode = simgen::to_string(s.mode);
  read(j, "mode", mode, where);
  s.mode = simgen::mode_from_string(mode);
  s.validate();
  return s;
}

TransformChoice parse_transform(const std::string& s) {
  if (s == "trim") return {inference::TransformKind::Trim, 0};
  if (s == "identity") return {inference::TransformKind::Identity, 0};
  if (s.rfind("pca:", 0) == 0) {
    const std::string k = s.substr(4);
    if (k.empty() || k.find_first_not_of("0123456789") != std::string::npos)
      bad("pca transform needs a nonnegative integer count, got '" + s + "'");
    return {inference::TransformKind::PcaAdjust, static_cast<Eigen::Index>(std::stoll(k))};
  }
  bad("unknown transform '" + s + "' (expected trim, identity or pca:K)");
}

std::string to_string(const TransformChoice& t) {
  switch (t.kind) {
    case inference::TransformKind::Trim: return "trim";
    case inference::TransformKind::Identity: return "identity";
    case inference::TransformKind::PcaAdjust: return "pca:" + std::to_string(t.q_hat);
  }
  return "unknown";
}

inference::Tuning parse_tuning(const std::string& s) {
  inference::Tuning t;
  if (s == "cv") return t;
  const auto parts = split(s, ':');
  if (parts.size() == 4 && parts[0] == "theory") {
    t.mode = inference::TuningMode::Theoretical;
    t.A = parse_double(parts[1], "tuning constant A");
    t.sigma_e = parse_double(parts[2], "sigma_e");
    t.sigma_j = parse_double(parts[3], "sigma_j");
    if (t.A < 0.0 || t.sigma_e < 0.0 || t.sigma_j < 0.0) bad("theoretical tuning constants must be nonnegative");
    return t;
  }
  bad("unknown tuning '" + s + "' (expected cv or theory:A:sigmaE:sigmaJ)");
}

inference::DdlConfig DdlSettings::build(std::uint64_t seed) const {
  inference::DdlConfig c;
  c.tuning = parse_tuning(tuning);
  c.tuning.folds = folds;
  c.tuning.variance_inflation = variance_inflation;
  c.tuning.seed = seed;
  c.alpha = alpha;
  c.confounder_hint = confounders;
  const TransformChoice t = parse_transform(transform);
  switch (t.kind) {
    case inference::TransformKind::Trim:
      c.initial = inference::TransformSpec::trim(rho);
      c.nuisance = inference::TransformSpec::trim(rho_j);
      break;
    case inference::TransformKind::Identity:
      c.initial = c.nuisance = inference::TransformSpec::identity();
      break;
    case inference::TransformKind::PcaAdjust:
      c.initial = c.nuisance = inference::TransformSpec::pca(t.q_hat);
      break;
  }
  if (!(rho > 0.0 && rho <= 1.0)) bad("rho must lie in (0, 1]");
  if (!(rho_j >= 0.0 && rho_j <= 1.0)) bad("rho_j must lie in [0, 1]");
  c.validate();
  return c;
}

Json ddl_to_json(const DdlSettings& d) {
  Json j{{"rho", d.rho},         {"rho_j", d.rho_j}, {"alpha", d.alpha},
         {"transform", d.transform}, {"tuning", d.tuning}, {"folds", d.folds},
         {"variance_inflation", d.variance_inflation}};
  if (d.confounders) j["confounders"] = *d.confounders;
  return j;
}

DdlSettings ddl_from_json(const Json& j) {
  const std::string where = "ddl";
  reject_unknown(j, {"rho", "rho_j", "alpha", "transform", "tuning", "folds", "variance_inflation", "confounders"},
                 where);
  DdlSettings d;
  read(j, "rho", d.rho, where);
  read(j, "rho_j", d.rho_j, where);
  read(j, "alpha", d.alpha, where);
  read(j, "transform", d.transform, where);
  read(j, "tuning", d.tuning, where);
  read(j, "folds", d.folds, where);
  read(j, "variance_inflation", d.variance_inflation, where);
  if (j.contains("confounders")) {
    Eigen::Index k = 0;
    read_index(j, "confounders", k, where);
    d.confounders = k;
  }
  d.build(0);  // validates
  return d;
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"none", "n", "p", "q", "kappa", "frac", "decay",
                                             "sigma_e", "rho", "rho_j", "q_hat"};
  return axes;
}

std::vector<bench::Cell> SimulateConfig::cells() const {
  validate();
  std::vector<bench::Cell> out;
  auto make = [&](const std::string& axis, double value) {
    bench::Cell cell;
    cell.axis = axis;
    cell.axis_value = value;
    cell.scenario = scenario;
    cell.methods = methods;
    cell.reps = reps;
    cell.target = target - 1;
    DdlSettings d = ddl;
    const auto as_index = [&] { return static_cast<Eigen::Index>(std::llround(value)); };
    if (axis == "n") cell.scenario.n = as_index();
    else if (axis == "p") cell.scenario.p = as_index();
    else if (axis == "q") cell.scenario.q = as_index();
    else if (axis == "kappa") cell.scenario.cov.kappa = value;
    else if (axis == "frac") cell.scenario.loadings.frac = value;
    else if (axis == "decay") cell.scenario.loadings.decay = value;
    else if (axis == "sigma_e") cell.scenario.sigma_e = value;
    else if (axis == "rho") d.rho = value;
    else if (axis == "rho_j") d.rho_j = value;
    else if (axis == "q_hat") d.transform = "pca:" + std::to_string(as_index());
    cell.scenario.validate();
    if (cell.target >= cell.scenario.p) bad("target exceeds p in a sweep cell");
    cell.config = d.build(0);
    out.push_back(std::move(cell));
  };
  if (sweep.axis == "none") {
    make("none", 0.0);
  } else {
    for (double v : sweep.values) make(sweep.axis, v);
  }
  return out;
}

void SimulateConfig::validate() const {
  if (workers < 1) bad("workers must be >= 1");
  if (reps < 1) bad("reps must be >= 1");
  if (methods.empty()) bad("at least one method is required");
  if (target < 1 || target > scenario.p) bad("target must lie in [1, p]");
  bool known = false;
  for (const auto& a : sweep_axes()) known = known || a == sweep.axis;
  if (!known) bad("unknown sweep axis '" + sweep.axis + "'");
  if (sweep.axis != "none" && sweep.values.empty()) bad("sweep needs at least one value");
  for (double v : sweep.values)
    if (!std::isfinite(v)) bad("sweep values must be finite");
  scenario.validate();
}

Json simulate_to_json(const SimulateConfig& c) {
  Json methods = Json::array();
  for (auto m : c.methods) methods.push_back(bench::to_string(m));
  Json j{{"master_seed", c.master_seed}, {"workers", c.workers}, {"reps", c.reps},
         {"target", c.target},           {"methods", methods},   {"scenario", scenario_to_json(c.scenario)},
         {"ddl", ddl_to_json(c.ddl)}};
  if (c.sweep.axis != "none") j["sweep"] = Json{{"axis", c.sweep.axis}, {"values", c.sweep.values}};
  return j;
}

SimulateConfig simulate_from_json(const Json& j) {
  const std::string where = "simulation config";
  reject_unknown(j, {"master_seed", "workers", "reps", "target", "methods", "scenario", "ddl", "sweep"}, where);
  SimulateConfig c;
  read(j, "master_seed", c.master_seed, where);
  read(j, "workers", c.workers, where);
  read_index(j, "reps", c.reps, where);
  read_index(j, "target", c.target, where);
  if (j.contains("methods")) {
    std::vector<std::string> names;
    read(j, "methods", names, where);
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(bench::method_from_string(n));
  }
  if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("ddl")) c.ddl = ddl_from_json(j.at("ddl"));
  if (j.contains("sweep")) {
    const Json& s = j.at("sweep");
    reject_unknown(s, {"axis", "values"}, "sweep");
    read(s, "axis", c.sweep.axis, "sweep");
    read(s, "values", c.sweep.values, "sweep");
  }
  c.validate();
  return c;
}

FitConfig fit_from_json(const Json& j) {
  const std::string where = "fit config";
  reject_unknown(j, {"input", "response", "targets", "out_dir", "seed", "workers", "ddl"}, where);
  FitConfig c;
  read(j, "input", c.input, where);
  read(j, "response", c.response, where);
  read(j, "targets", c.targets, where);
  read(j, "out_dir", c.out_dir, where);
  read(j, "seed", c.seed, where);
  read(j, "workers", c.workers, where);
  if (j.contains("ddl")) c.ddl = ddl_from_json(j.at("ddl"));
  return c;
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    bad("config '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ddlasso::config
