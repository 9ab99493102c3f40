#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddlasso/lasso.hpp"
#include "ddlasso/spectral.hpp"

namespace ddlasso::inference {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using spectral::SpectralTransform;
using spectral::TransformKind;

/// Inverse standard normal CDF, accurate to about 1e-15 in the central
/// range. Throws OutOfRange unless 0 < prob < 1.
double normal_quantile(double prob);
double normal_cdf(double x);
/// 2 (1 - Phi(|z|)), computed through erfc to keep tail precision.
double two_sided_p_value(double z);

struct TransformSpec {
  TransformKind kind = TransformKind::Trim;
  double rho = 0.5;  // Trim fraction; 0 means no trimming (identity)
  Index q_hat = 0;   // PcaAdjust component count

  static TransformSpec trim(double rho) { return {TransformKind::Trim, rho, 0}; }
  static TransformSpec pca(Index q_hat) { return {TransformKind::PcaAdjust, 0.0, q_hat}; }
  static TransformSpec identity() { return {TransformKind::Identity, 0.0, 0}; }

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

std::string to_string(const TransformSpec& spec);

/// Spectral transform of the given design per spec. Trim with rho = 0
/// gives the identity.
SpectralTransform build_transform(const Eigen::Ref<const MatrixXd>& X, const TransformSpec& spec);

enum class TuningMode { CrossValidation, Theoretical };

struct Tuning {
  TuningMode mode = TuningMode::CrossValidation;
  // Theoretical mode: lambda = A sigma_e sqrt(log p / n) and
  // lambda_j = A sigma_j sqrt(log p / n).
  double A = 2.0;
  double sigma_e = 1.0;
  double sigma_j = 1.0;

  int folds = 10;
  Index grid_size = 100;
  double grid_ratio = 1e-3;
  double variance_inflation = 1.25;
  std::uint64_t seed = 0;
  lasso::SolverOptions solver;
};

struct DdlConfig {
  TransformSpec initial = TransformSpec::trim(0.5);   // Q, built from X
  TransformSpec nuisance = TransformSpec::trim(0.5);  // P^(j), built from X_{-j}
  double alpha = 0.05;
  Tuning tuning;
  bool center = true;
  // Optional number of suspected confounders; enables the minimum-trim check.
  std::optional<Index> confounder_hint;

  /// Both transforms set to the identity: the standard debiased Lasso.
  static DdlConfig standard(const Tuning& tuning, double alpha = 0.05);

  /// Throws InvalidArgument on out-of-range settings.
  void validate() const;
};

struct InitialFit {
  lasso::LassoFit fit;
  SpectralTransform Q;
  double lambda = 0.0;
  VectorXd weights;
};

struct ProjectionDirection {
  Index j = 0;
  VectorXd gamma_hat;  // length p - 1, columns of X_{-j} in original order
  VectorXd Zj;         // X_j - X_{-j} gamma_hat
  VectorXd PZj;
  VectorXd P2Zj;
  SpectralTransform P;
  double lambda_j = 0.0;
  double lambda_cv = 0.0;
  double variance_ratio = 1.0;  // v(lambda_j) / v(lambda_cv)
  bool inflation_reached = true;
  std::vector<std::string> notes;

  /// Z_j^T P^2 X_j
  double denominator(const Eigen::Ref<const VectorXd>& Xj) const { return P2Zj.dot(Xj); }
  /// Z_j^T P^4 Z_j
  double variance_kernel() const { return P2Zj.squaredNorm(); }
};

struct DdlResult {
  Index j = 0;
  double beta_hat = 0.0;
  double variance = 0.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double sigma_e2_hat = 0.0;
  double p_value = 1.0;
  double denominator = 0.0;
  double lambda = 0.0;
  double lambda_j = 0.0;
  bool ok = true;
  std::vector<std::string> flags;
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Mean-centred copies of the columns of X.
MatrixXd center_columns(const Eigen::Ref<const MatrixXd>& X);
VectorXd center(const Eigen::Ref<const VectorXd>& y);

/// Transformed weighted Lasso on (QX, QY). Inputs are used as given.
InitialFit initial_estimator(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                             const DdlConfig& config);

/// Weighted Lasso of P X_j on P X_{-j}, with lambda_j from cross-validation
/// raised until the variance functional grows by the configured factor.
ProjectionDirection projection_direction(const Eigen::Ref<const MatrixXd>& X, Index j, const DdlConfig& config);

/// Z_j^T P^2 (Y - X_{-j} beta_init_{-j}) / Z_j^T P^2 X_j.
/// Throws DegenerateDenominator when |Z_j^T P^2 X_j| < 1e-12 ||Z_j|| ||X_j||.
double point_estimate(const Eigen::Ref<const VectorXd>& Y, const Eigen::Ref<const MatrixXd>& X, Index j,
                      const Eigen::Ref<const VectorXd>& beta_init, const ProjectionDirection& proj);

/// ||Q Y - Q X beta_init||^2 / Tr(Q^2).
double noise_level(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                   const Eigen::Ref<const VectorXd>& beta_init, const SpectralTransform& Q);

/// sigma_e2 Z_j^T P^4 Z_j / (Z_j^T P^2 X_j)^2.
double variance_estimate(const ProjectionDirection& proj, const Eigen::Ref<const VectorXd>& Xj, double sigma_e2_hat);

Interval confidence_interval(double beta_hat, double variance, double alpha);

/// Combine the pieces for one target. Degeneracies are reported through
/// ok/flags rather than thrown.
DdlResult assemble(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y, Index j,
                   const InitialFit& initial, double sigma_e2_hat, const ProjectionDirection& proj, double alpha);

struct TargetEstimate {
  DdlResult result;
  std::optional<ProjectionDirection> direction;
};

/// Doubly debiased Lasso for a fixed data set. The initial estimator,
/// its transform and the noise level are computed once at construction and
/// shared by all targets.
class DoublyDebiasedLasso {
 public:
  DoublyDebiasedLasso(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y, DdlConfig config);

  /// Never throws for data-dependent failures; see DdlResult::flags.
  TargetEstimate estimate(Index j) const;
  /// Targets are independent; workers > 1 spreads them over threads.
  std::vector<DdlResult> fit(std::span<const Index> targets, int workers = 1) const;

  const MatrixXd& design() const { return X_; }
  const VectorXd& response() const { return Y_; }
  const InitialFit& initial() const { return initial_; }
  double sigma_e2_hat() const { return sigma_e2_hat_; }
  const DdlConfig& config() const { return config_; }

 private:
  DdlConfig config_;
  MatrixXd X_;
  VectorXd Y_;
  InitialFit initial_;
  double sigma_e2_hat_ = 0.0;
};

/// Runs every target in targets (0-based column indices).
std::vector<DdlResult> fit(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                           std::span<const Index> targets, const DdlConfig& config, int workers = 1);

/// The same machinery with identity transforms and a plain Lasso start.
DdlResult debiased_lasso_baseline(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y, Index j,
                                  const Tuning& tuning, double alpha = 0.05);

struct AreBounds {
  double lower = 1.0;
  double upper = 1.0;
};

/// Asymptotic relative efficiency bounds against the Gauss-Markov variance
/// for p/n -> c_star (may be +infinity) and trimming limit rho_star.
AreBounds are(double c_star, double rho_star);

}  // namespace ddlasso::inference
