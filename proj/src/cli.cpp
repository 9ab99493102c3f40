#include "ddlasso/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ddlasso/bench.hpp"
#include "ddlasso/config.hpp"
#include "ddlasso/csv.hpp"
#include "ddlasso/error.hpp"
#include "ddlasso/inference.hpp"
#include "ddlasso/spectral.hpp"

namespace ddlasso::cli {

namespace {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown for user errors that map to exit code 2.
struct BadInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DdlFlags {
  std::optional<double> rho, rho_j, alpha;
  std::optional<std::string> transform, tuning;

  void add(CLI::App& app) {
    app.add_option("--rho", rho, "Trim fraction for the initial transform");
    app.add_option("--rho-j", rho_j, "Trim fraction for the nuisance transform");
    app.add_option("--alpha", alpha, "CI miscoverage level");
    app.add_option("--transform", transform, "trim, identity or pca:K");
    app.add_option("--tuning", tuning, "cv or theory:A:sigmaE:sigmaJ");
  }
  void apply(config::DdlSettings& d) const {
    if (rho) d.rho = *rho;
    if (rho_j) d.rho_j = *rho_j;
    if (alpha) d.alpha = *alpha;
    if (transform) d.transform = *transform;
    if (tuning) d.tuning = *tuning;
  }
};

std::ofstream open_output(const std::string& dir, const std::string& name) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path path = fs::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BadInput("cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& s : parts) out += (out.empty() ? "" : "; ") + s;
  return out;
}

int fit_command(const config::FitConfig& cfg, std::ostream& out, std::ostream& err) {
  using csv::format_number;
  if (cfg.input.empty()) throw BadInput("--input is required");
  if (cfg.response.empty()) throw BadInput("--response is required");
  if (cfg.workers < 1) throw BadInput("--workers must be >= 1");

  const csv::Table table = csv::read_file(cfg.input);
  const Index yc = table.column(cfg.response);
  if (yc < 0) throw BadInput("response column '" + cfg.response + "' not found");
  const Index n = table.data.rows();

  // Predictors: every other column with nonzero variance.
  std::vector<Index> kept;
  std::vector<std::string> names;
  std::vector<std::string> dropped;
  for (Index c = 0; c < table.data.cols(); ++c) {
    if (c == yc) continue;
    const auto col = table.data.col(c);
    if (n > 0 && (col.array() - col.mean()).abs().maxCoeff() == 0.0) {
      dropped.push_back(table.header[static_cast<std::size_t>(c)]);
      err << "warning: dropping zero-variance column '" << dropped.back() << "'\n";
      continue;
    }
    kept.push_back(c);
    names.push_back(table.header[static_cast<std::size_t>(c)]);
  }
  MatrixXd X(n, static_cast<Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) X.col(static_cast<Index>(k)) = table.data.col(kept[k]);
  const VectorXd Y = table.data.col(yc);

  // Requested targets in order; names that were dropped stay as flagged rows.
  std::vector<std::string> requested;
  if (cfg.targets == "all") {
    requested = names;
  } else {
    requested = split_names(cfg.targets);
    if (requested.empty()) throw BadInput("--targets is empty");
  }
  std::vector<Index> targets;
  std::vector<std::optional<std::size_t>> slot(requested.size());
  for (std::size_t k = 0; k < requested.size(); ++k) {
    const auto it = std::find(names.begin(), names.end(), requested[k]);
    if (it != names.end()) {
      slot[k] = targets.size();
      targets.push_back(static_cast<Index>(it - names.begin()));
    } else if (std::find(dropped.begin(), dropped.end(), requested[k]) == dropped.end()) {
      throw BadInput("target column '" + requested[k] + "' not found");
    }
  }

  const inference::DdlConfig ddl = cfg.ddl.build(cfg.seed);
  std::vector<inference::DdlResult> results;
  if (!targets.empty()) {
    try {
      results = inference::DoublyDebiasedLasso(X, Y, ddl).fit(targets, cfg.workers);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::NonFinite ||
          e.kind() == ErrorKind::DimensionMismatch)
        throw BadInput(e.what());
      throw;
    }
  }

  std::ofstream file = open_output(cfg.out_dir, "estimates.csv");
  csv::write_row(file, {"target", "beta_hat", "std_err", "ci_low", "ci_high", "p_value", "sigma_e2_hat", "lambda",
                        "lambda_j", "flags"});
  std::size_t ok = 0;
  for (std::size_t k = 0; k < requested.size(); ++k) {
    if (!slot[k]) {
      const std::string nan = format_number(std::nan(""));
      csv::write_row(file, {requested[k], nan, nan, nan, nan, nan, nan, nan, nan, "zero-variance column dropped"});
      continue;
    }
    const auto& r = results[*slot[k]];
    ok += r.ok ? 1 : 0;
    csv::write_row(file, {requested[k], format_number(r.beta_hat), format_number(r.std_err), format_number(r.ci_low),
                          format_number(r.ci_high), format_number(r.p_value), format_number(r.sigma_e2_hat),
                          format_number(r.lambda), format_number(r.lambda_j), join(r.flags)});
  }
  out << "wrote " << (fs::path(cfg.out_dir) / "estimates.csv").string() << " (" << requested.size() << " targets, "
      << ok << " ok)\n";
  return ok == 0 ? kAllDegenerate : kOk;
}

int simulate_command(const config::SimulateConfig& cfg, const std::string& out_dir, std::ostream& out) {
  const auto cells = cfg.cells();
  const auto report = bench::run_grid(cells, cfg.master_seed, cfg.workers);
  {
    std::ofstream f = open_output(out_dir, "report.csv");
    bench::write_report_csv(report, f);
  }
  {
    std::ofstream f = open_output(out_dir, "records.csv");
    bench::write_records_csv(cells, report, f);
  }
  for (const auto& s : report.summaries)
    out << s.axis << '=' << csv::format_number(s.axis_value) << ' ' << bench::to_string(s.method)
        << " coverage=" << csv::format_number(s.coverage) << " reps=" << s.replications
        << " failures=" << s.failures << '\n';
  return kOk;
}

int diagnose_command(const std::string& input, const std::string& response, double rho, bool center,
                     const std::string& out_dir, std::ostream& out) {
  using csv::format_number;
  const csv::Table table = csv::read_file(input);
  Index yc = -1;
  if (!response.empty()) {
    yc = table.column(response);
    if (yc < 0) throw BadInput("response column '" + response + "' not found");
  }
  std::vector<Index> cols;
  for (Index c = 0; c < table.data.cols(); ++c)
    if (c != yc) cols.push_back(c);
  if (table.data.rows() < 1 || cols.empty()) throw BadInput("input needs at least one row and one predictor column");
  MatrixXd X(table.data.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) X.col(static_cast<Index>(k)) = table.data.col(cols[k]);
  if (center) X = inference::center_columns(X);
  if (!(rho > 0.0 && rho <= 1.0)) throw BadInput("--rho must lie in (0, 1]");

  const auto svd = spectral::svd_thin(X, false);
  const auto T = spectral::trim_transform(svd, rho);
  spectral::P1Limits limits;
  limits.rho = rho;
  const auto p1 = spectral::check_p1(T, X, limits);
  const VectorXd shrink = T.full_shrinkage();

  std::ofstream spec_file = open_output(out_dir, "spectrum.csv");
  csv::write_row(spec_file, {"index", "singular_value", "shrink_factor"});
  for (Index l = 0; l < svd.values.size(); ++l)
    csv::write_row(spec_file, {std::to_string(l + 1), format_number(svd.values(l)),
                               format_number(l < shrink.size() ? shrink(l) : 1.0)});

  // Leading singular value over the median one: a scree spike indicator.
  VectorXd sorted = svd.values;
  std::sort(sorted.begin(), sorted.end());
  const Index m = sorted.size();
  const double median = m % 2 ? sorted(m / 2) : 0.5 * (sorted(m / 2 - 1) + sorted(m / 2));
  const double spike = median > 0.0 ? svd.values(0) / median : (svd.values(0) > 0.0 ? INFINITY : 0.0);

  const std::vector<std::pair<std::string, double>> rows{
      {"n", static_cast<double>(X.rows())},
      {"d", static_cast<double>(X.cols())},
      {"rho", rho},
      {"trim_count", static_cast<double>(T.trimmed())},
      {"threshold", T.threshold()},
      {"spike_ratio", spike},
      {"op_norm_ratio", p1.op_norm_ratio},
      {"trace4_ratio", p1.trace4_ratio},
      {"trace2", p1.trace2},
      {"trace4", p1.trace4},
      {"op_norm_violation", p1.op_norm_violation ? 1.0 : 0.0},
      {"trace_violation", p1.trace_violation ? 1.0 : 0.0},
  };
  std::ofstream p1_file = open_output(out_dir, "p1.csv");
  csv::write_row(p1_file, {"metric", "value"});
  csv::write_row(out, {"metric", "value"});
  for (const auto& [k, v] : rows) {
    csv::write_row(p1_file, {k, format_number(v)});
    csv::write_row(out, {k, format_number(v)});
  }
  for (const auto& note : T.notes()) out << "note: " << note << '\n';
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly debiased Lasso: inference under hidden confounding"};
  app.require_subcommand(1);

  // fit
  CLI::App* fit = app.add_subcommand("fit", "Estimate coefficients with confidence intervals from a CSV file");
  std::optional<std::string> fit_input, fit_response, fit_targets, fit_config, fit_out;
  std::optional<std::uint64_t> fit_seed;
  std::optional<int> fit_workers;
  DdlFlags fit_flags;
  fit->add_option("--input", fit_input, "CSV file with a header row");
  fit->add_option("--response", fit_response, "Name of the response column");
  fit->add_option("--targets", fit_targets, "Comma-separated column names or 'all'");
  fit->add_option("--config", fit_config, "JSON config; flags override it");
  fit->add_option("--out-dir", fit_out, "Output directory");
  fit->add_option("--seed", fit_seed, "Seed for cross-validation folds");
  fit->add_option("--workers", fit_workers, "Threads over targets");
  fit_flags.add(*fit);

  // simulate
  CLI::App* sim = app.add_subcommand("simulate", "Run a Monte-Carlo grid and write report.csv and records.csv");
  std::optional<std::string> sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_workers;
  std::optional<Index> sim_reps;
  DdlFlags sim_flags;
  sim->add_option("--config", sim_config, "JSON scenario/grid config");
  sim->add_option("--out-dir", sim_out, "Output directory");
  sim->add_option("--seed", sim_seed, "Master seed");
  sim->add_option("--workers", sim_workers, "Worker threads");
  sim->add_option("--reps", sim_reps, "Replications per cell");
  sim_flags.add(*sim);

  // diagnose
  CLI::App* diag = app.add_subcommand("diagnose", "Singular value spectrum and spectral transform diagnostics");
  std::string diag_input, diag_response, diag_out = ".";
  double diag_rho = 0.5;
  bool diag_no_center = false;
  diag->add_option("--input", diag_input, "CSV file with a header row")->required();
  diag->add_option("--response", diag_response, "Column to exclude from the design");
  diag->add_option("--rho", diag_rho, "Trim fraction");
  diag->add_option("--out-dir", diag_out, "Output directory");
  diag->add_flag("--no-center", diag_no_center, "Do not mean-center the columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*fit) {
      config::FitConfig cfg;
      if (fit_config) cfg = config::fit_from_json(config::load_json(*fit_config));
      if (fit_input) cfg.input = *fit_input;
      if (fit_response) cfg.response = *fit_response;
      if (fit_targets) cfg.targets = *fit_targets;
      if (fit_out) cfg.out_dir = *fit_out;
      if (fit_seed) cfg.seed = *fit_seed;
      if (fit_workers) cfg.workers = *fit_workers;
      fit_flags.apply(cfg.ddl);
      return fit_command(cfg, out, err);
    }
    if (*sim) {
      config::SimulateConfig cfg;
      if (sim_config) cfg = config::simulate_from_json(config::load_json(*sim_config));
      if (sim_seed) cfg.master_seed = *sim_seed;
      if (sim_workers) cfg.workers = *sim_workers;
      if (sim_reps) cfg.reps = *sim_reps;
      sim_flags.apply(cfg.ddl);
      cfg.validate();
      cfg.ddl.build(0);
      return simulate_command(cfg, sim_out.value_or("."), out);
    }
    return diagnose_command(diag_input, diag_response, diag_rho, !diag_no_center, diag_out, out);
  } catch (const BadInput& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::NonFinite ? kBadInput : kFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace ddlasso::cli
