#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddlasso::spectral {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thin singular value decomposition X = U diag(values) V^T with
/// m = min(rows, cols) components, values sorted nonincreasing.
struct SvdFactors {
  MatrixXd U;       // rows x m
  VectorXd values;  // m
  MatrixXd V;       // cols x m; empty when computed without right vectors
  Index rows = 0;
  Index cols = 0;

  Index rank_bound() const { return values.size(); }
  bool has_right_vectors() const { return V.cols() == values.size() && V.rows() == cols; }
};

/// Throws NonFinite on NaN/Inf input and ConvergenceFailure if the
/// decomposition does not produce finite factors.
SvdFactors svd_thin(const Eigen::Ref<const MatrixXd>& X, bool with_right_vectors = true);

enum class TransformKind { Identity, Trim, PcaAdjust };

std::string to_string(TransformKind kind);

/// Symmetric spectral shrinkage operator P = I - U diag(1 - S) U^T.
///
/// Stored in factored form. P acts as the identity on the orthogonal
/// complement of col(U), so all eigenvalues lie in [0, 1].
class SpectralTransform {
 public:
  SpectralTransform() = default;

  static SpectralTransform identity(Index n);

  TransformKind kind() const { return kind_; }
  Index size() const { return n_; }
  const MatrixXd& basis() const { return U_; }
  const VectorXd& shrinkage() const { return S_; }
  const VectorXd& singular_values() const { return Lambda_; }
  /// Number of stored (shrinking) components; S = 1 beyond these.
  Index components() const { return S_.size(); }
  /// Shrinkage factors for all m components of the source decomposition.
  VectorXd full_shrinkage() const;

  double rho() const { return rho_; }
  Index trimmed() const { return trimmed_; }
  double threshold() const { return tau_; }
  Index q_hat() const { return q_hat_; }

  const std::vector<std::string>& notes() const { return notes_; }

  /// P^power M without forming the n x n operator.
  MatrixXd apply(const Eigen::Ref<const MatrixXd>& M, int power = 1) const;
  VectorXd apply_vector(const Eigen::Ref<const VectorXd>& v, int power = 1) const;

  /// Tr(P^k) = sum_l S_l^k + (n - m).
  double trace_power(int k) const;

 private:
  friend SpectralTransform trim_transform(const SvdFactors&, double);
  friend SpectralTransform pca_adjust(const SvdFactors&, Index);

  TransformKind kind_ = TransformKind::Identity;
  Index n_ = 0;
  Index m_ = 0;
  MatrixXd U_;
  VectorXd S_;
  VectorXd Lambda_;
  double rho_ = 0.0;
  Index trimmed_ = 0;
  double tau_ = 0.0;
  Index q_hat_ = 0;
  std::vector<std::string> notes_;
};

/// Cap the top floor(rho * m) singular values at the floor(rho * m)-th one.
/// A zero trim count yields the identity transform.
SpectralTransform trim_transform(const SvdFactors& svd, double rho);

/// Map the leading q_hat singular values to zero.
SpectralTransform pca_adjust(const SvdFactors& svd, Index q_hat);

inline MatrixXd apply(const SpectralTransform& T, const Eigen::Ref<const MatrixXd>& M, int power = 1) {
  return T.apply(M, power);
}

inline double trace_power(const SpectralTransform& T, int k) { return T.trace_power(k); }

struct P1Limits {
  double max_op_norm_ratio = 4.0;
  // Floor for Tr(P^4)/m is (1 - rho) for a rho-Trim.
  double rho = 0.5;
};

struct P1Diagnostics {
  double op_norm_ratio = 0.0;  // ||P X||_2^2 / max(n, d)
  double trace4_ratio = 0.0;   // Tr(P^4) / m
  double trace2 = 0.0;
  double trace4 = 0.0;
  bool op_norm_violation = false;
  bool trace_violation = false;

  bool violated() const { return op_norm_violation || trace_violation; }
};

P1Diagnostics check_p1(const SpectralTransform& T, const Eigen::Ref<const MatrixXd>& X,
                       const P1Limits& limits = {});

struct Spectrum {
  VectorXd values;
  Index quantile_index = 0;  // 1-based floor(rho * m); 0 when no quantile applies
  double quantile_value = 0.0;
};

Spectrum singular_spectrum(const Eigen::Ref<const MatrixXd>& X, double rho = 0.5);

}  // namespace ddlasso::spectral
