#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddlasso/inference.hpp"
#include "ddlasso/simgen.hpp"

namespace ddlasso::bench {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Method { DDL, DebiasedLasso, SharedInit };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Transforms a method uses, given the configured doubly debiased setup.
/// DebiasedLasso: identity for both. SharedInit: the configured initial
/// transform with an identity nuisance transform.
inference::DdlConfig method_config(Method m, const inference::DdlConfig& base);

struct BiasTerms {
  double B_beta = 0.0;
  double B_b = 0.0;
  double V = 0.0;           // variance with the true sigma_e^2
  double noise_term = 0.0;  // Z^T P^2 noise / Z^T P^2 X_j
};

/// Scaled bias terms of one estimate, using the true sigma_e^2.
///   B_beta = Z^T P^2 X_{-j} (beta_init_{-j} - beta_{-j}) / sqrt(Z^T P^4 Z sigma_e^2)
///   B_b    = Z^T P^2 X b / sqrt(Z^T P^4 Z sigma_e^2)
/// noise, when given, is the additive error of the linear model the data
/// follow; its contribution is returned as noise_term.
/// Throws DegenerateDenominator when Z^T P^2 X_j or Z^T P^4 Z vanishes.
BiasTerms scaled_bias_terms(const Eigen::Ref<const MatrixXd>& X, Index j, const inference::ProjectionDirection& proj,
                            const Eigen::Ref<const VectorXd>& beta_init, const Eigen::Ref<const VectorXd>& beta,
                            const Eigen::Ref<const VectorXd>& b, double sigma_e2,
                            const std::optional<VectorXd>& noise = std::nullopt);

struct ReplicationRecord {
  Index rep = 0;
  std::uint64_t seed = 0;
  Method method = Method::DDL;
  double beta_true = 0.0;
  double beta_hat = 0.0;
  double V = 0.0;  // estimated variance
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  double B_beta = 0.0;
  double B_b = 0.0;
  double V_true = 0.0;  // variance with the true sigma_e^2
  double sigma_e2_hat = 0.0;
  double sigma_j = 1.0;
  double lambda = 0.0;
  double lambda_j = 0.0;
  // beta_hat - beta - (noise - sqrt(V_true) B_beta + sqrt(V_true) B_b)
  double decomposition_residual = 0.0;
  double init_l2_error = 0.0;  // ||beta_init - beta||_2
  bool ok = true;
  std::string flags;
};

struct Cell {
  std::string axis = "none";
  double axis_value = 0.0;
  simgen::Scenario scenario;
  inference::DdlConfig config;
  std::vector<Method> methods{Method::DDL, Method::DebiasedLasso, Method::SharedInit};
  Index reps = 300;
  Index target = 0;  // 0-based column
};

/// Seed of replication rep. Depends only on (master_seed, rep), so every
/// cell of a grid sees the same random draws for a given rep.
std::uint64_t replication_seed(std::uint64_t master_seed, Index rep);

/// One dataset, every requested method. Initial fits and projection
/// directions are shared between methods that use the same transforms.
/// Failures are flagged in the records, not thrown.
std::vector<ReplicationRecord> run_replication(const simgen::Generator& gen, const inference::DdlConfig& config,
                                               std::span<const Method> methods, Index target, std::uint64_t seed,
                                               Index rep = 0);

ReplicationRecord run_replication(const simgen::Scenario& scenario, Method method,
                                  const inference::DdlConfig& config, std::uint64_t seed, Index target = 0);

struct CellSummary {
  std::string axis;
  double axis_value = 0.0;
  Method method = Method::DDL;
  Index replications = 0;  // successful
  Index failures = 0;
  double coverage = 0.0;
  double mean_abs_B_beta = 0.0;
  double mean_abs_B_b = 0.0;
  double mean_sqrt_V = 0.0;
  double mean_sigma_e2_hat = 0.0;
};

struct CellRecords {
  Index cell = 0;
  std::vector<ReplicationRecord> records;  // rep-major, method order as requested
};

struct MonteCarloReport {
  std::vector<CellSummary> summaries;
  std::vector<CellRecords> cells;
};

/// Runs every (cell, rep) pair on `workers` threads. The report does not
/// depend on the worker count or on scheduling.
MonteCarloReport run_grid(std::span<const Cell> cells, std::uint64_t master_seed, int workers = 1);

CellSummary summarize(const Cell& cell, Method method, std::span<const ReplicationRecord> records);

/// Long format: scenario_axis,axis_value,method,metric,value.
void write_report_csv(const MonteCarloReport& report, std::ostream& out);
/// One row per replication and method.
void write_records_csv(std::span<const Cell> cells, const MonteCarloReport& report, std::ostream& out);

/// Jaccard distance between the index sets of the k smallest p-values of
/// each vector; ties go to the lower index.
double jaccard_topk(std::span<const double> pvals_a, std::span<const double> pvals_b, Index k);

}  // namespace ddlasso::bench
