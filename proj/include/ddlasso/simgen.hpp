#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddlasso/rng.hpp"

namespace ddlasso::simgen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class CovKind { Identity, Toeplitz, Equicorrelation };
enum class LoadingKind { DenseGaussian, SparseProportion, Decay };
enum class Distribution { Gaussian, Chi2_1, T5, Bin16 };
enum class Mode { Confounded, NoBias, MeasurementError, Unconfounded };

std::string to_string(CovKind kind);
std::string to_string(LoadingKind kind);
std::string to_string(Distribution dist);
std::string to_string(Mode mode);
// Inverse of to_string; throw InvalidArgument on unknown names.
CovKind cov_kind_from_string(const std::string& s);
LoadingKind loading_kind_from_string(const std::string& s);
Distribution distribution_from_string(const std::string& s);
Mode mode_from_string(const std::string& s);

struct Covariance {
  CovKind kind = CovKind::Identity;
  double kappa = 0.0;

  friend bool operator==(const Covariance&, const Covariance&) = default;
};

struct Loadings {
  LoadingKind kind = LoadingKind::DenseGaussian;
  double frac = 1.0;   // SparseProportion: share of nonzero entries per row
  double decay = 1.0;  // Decay: exponent a

  friend bool operator==(const Loadings&, const Loadings&) = default;
};

struct Scenario {
  Index n = 300;
  Index p = 1000;
  Index q = 3;
  // Leading entries of beta; the rest are zero.
  std::vector<double> beta{1.0, 1.0, 1.0, 1.0, 1.0};
  double sigma_e = 1.0;
  Covariance cov;
  Loadings loadings;
  Distribution dist = Distribution::Gaussian;
  Mode mode = Mode::Confounded;

  VectorXd beta_full() const;
  /// Number of confounders actually drawn (0 in Unconfounded mode).
  Index effective_q() const { return mode == Mode::Unconfounded ? 0 : q; }
  /// Throws InvalidArgument when a field is out of range.
  void validate() const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct Truth {
  VectorXd beta;
  VectorXd b;               // perturbation of the linear model the data follow (0 in NoBias mode)
  VectorXd b_confounding;   // Sigma_X^{-1} Psi^T phi before any NoBias adjustment
  VectorXd sigma_j;         // per-column residual sd of E_j given E_{-j}
  MatrixXd H;               // n x q
  MatrixXd E;               // n x p
  VectorXd e;               // additive noise, already scaled by sigma_e
  MatrixXd Psi;             // q x p
  VectorXd phi;             // effective confounder effect on Y (-Psi beta under measurement error)
  VectorXd delta;           // H phi - X b - (X b_confounding in NoBias mode)
  double sigma_e2 = 1.0;
};

struct Dataset {
  MatrixXd X;
  VectorXd Y;
  Truth truth;
};

/// Lower-triangular Cholesky factor of Sigma_E. Toeplitz uses the closed
/// form of the AR(1) factor; equicorrelation uses a dense LLT and throws
/// NotPositiveDefinite if it fails.
MatrixXd make_covariance(const Covariance& cov, Index p);

/// 1 / sqrt((Sigma_E^{-1})_{jj}) for every column.
VectorXd residual_sd(const Covariance& cov, Index p);

struct LoadingDraw {
  MatrixXd Psi;  // q x p
  VectorXd phi;  // q
};

/// Loadings and confounder effects. Entries are Gaussian whatever the
/// scenario's distribution.
LoadingDraw make_loadings(Index q, Index p, const Loadings& kind, std::uint64_t seed);

/// b = (Sigma_E + Psi^T Psi)^{-1} Psi^T phi through the Woodbury identity.
/// chol is the Cholesky factor of Sigma_E; an empty matrix means identity.
/// Throws SingularSystem when the q x q capacitance matrix is not SPD.
VectorXd true_perturbation(const Eigen::Ref<const MatrixXd>& Psi, const Eigen::Ref<const VectorXd>& phi,
                           const MatrixXd& chol = MatrixXd());

/// Zero-mean, unit-variance variates of the given family.
class StandardizedSampler {
 public:
  StandardizedSampler(Distribution dist, std::uint64_t seed);
  double operator()();
  MatrixXd matrix(Index rows, Index cols);

 private:
  Distribution dist_;
  Engine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::student_t_distribution<double> t5_{5.0};
  std::binomial_distribution<int> bin16_{16, 0.5};
};

/// Scenario with its covariance factor and residual sds precomputed, for
/// drawing many replications.
class Generator {
 public:
  explicit Generator(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  /// Pure function of (scenario, seed).
  Dataset sample(std::uint64_t seed) const;

 private:
  MatrixXd correlate(MatrixXd Z) const;

  Scenario scenario_;
  MatrixXd chol_;  // empty for the identity
  VectorXd sigma_j_;
};

Dataset sample_dataset(const Scenario& scenario, std::uint64_t seed);

}  // namespace ddlasso::simgen
