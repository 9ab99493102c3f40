#include "ddlasso/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddlasso/error.hpp"

namespace ddlasso::spectral {

namespace {

void require_finite(const Eigen::Ref<const MatrixXd>& X, const char* what) {
  if (!X.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " contains NaN or Inf");
}

// Number of leading components that actually shrink (S_l < 1). Trim and
// PCA adjustment only ever shrink a prefix of the spectrum.
Index shrinking_prefix(const VectorXd& S) {
  Index k = 0;
  for (Index l = 0; l < S.size(); ++l)
    if (S(l) < 1.0) k = l + 1;
  return k;
}

Index trim_count(double rho, Index m) {
  // Guard against rho * m landing a hair below an integer.
  return static_cast<Index>(std::floor(rho * static_cast<double>(m) + 1e-9));
}

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Trim: return "trim";
    case TransformKind::PcaAdjust: return "pca";
  }
  return "unknown";
}

SvdFactors svd_thin(const Eigen::Ref<const MatrixXd>& X, bool with_right_vectors) {
  if (X.rows() < 1 || X.cols() < 1)
    throw Error(ErrorKind::InvalidArgument, "svd_thin needs a nonempty matrix");
  require_finite(X, "svd input");

  unsigned options = Eigen::ComputeThinU;
  if (with_right_vectors) options |= Eigen::ComputeThinV;
  Eigen::BDCSVD<MatrixXd> svd(X, options);
  if (svd.info() != Eigen::Success)
    throw Error(ErrorKind::ConvergenceFailure, "SVD did not converge");

  SvdFactors out;
  out.rows = X.rows();
  out.cols = X.cols();
  out.values = svd.singularValues();
  out.U = svd.matrixU();
  if (with_right_vectors) out.V = svd.matrixV();
  if (!out.values.allFinite() || !out.U.allFinite())
    throw Error(ErrorKind::ConvergenceFailure, "SVD produced non-finite factors");
  return out;
}

SpectralTransform SpectralTransform::identity(Index n) {
  SpectralTransform T;
  T.kind_ = TransformKind::Identity;
  T.n_ = n;
  T.U_.resize(n, 0);
  return T;
}

SpectralTransform trim_transform(const SvdFactors& svd, double rho) {
  if (!(rho > 0.0 && rho <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "trim fraction must lie in (0, 1]");

  const Index m = svd.values.size();
  const Index t = trim_count(rho, m);
  if (t == 0) {
    SpectralTransform T = SpectralTransform::identity(svd.rows);
    T.rho_ = rho;
    T.m_ = m;
    T.notes_.push_back("trim count floor(rho*m) is 0; using the identity transform");
    return T;
  }

  SpectralTransform T;
  T.kind_ = TransformKind::Trim;
  T.n_ = svd.rows;
  T.m_ = m;
  T.rho_ = rho;
  T.trimmed_ = t;
  T.Lambda_ = svd.values;
  T.tau_ = svd.values(t - 1);
  T.S_ = VectorXd::Ones(m);
  // Rank tolerance: a threshold at round-off level is treated as zero.
  const double zero_tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(svd.rows, svd.cols)) * svd.values(0);
  if (T.tau_ <= zero_tol) {
    T.tau_ = 0.0;
    T.notes_.push_back("trim threshold is zero; shrinking all positive leading singular values to 0");
  }
  for (Index l = 0; l < t; ++l) {
    const double lam = svd.values(l);
    if (lam > T.tau_) T.S_(l) = std::min(1.0, T.tau_ / lam);
  }

  const Index k = shrinking_prefix(T.S_);
  T.U_ = svd.U.leftCols(k);
  T.S_.conservativeResize(k);
  T.Lambda_.conservativeResize(k);
  return T;
}

SpectralTransform pca_adjust(const SvdFactors& svd, Index q_hat) {
  const Index m = svd.values.size();
  if (q_hat < 0 || q_hat > m)
    throw Error(ErrorKind::IndexOutOfRange, "PCA adjustment needs 0 <= q_hat <= m");
  if (q_hat == 0) {
    SpectralTransform T = SpectralTransform::identity(svd.rows);
    T.kind_ = TransformKind::PcaAdjust;
    T.m_ = m;
    return T;
  }
  SpectralTransform T;
  T.kind_ = TransformKind::PcaAdjust;
  T.n_ = svd.rows;
  T.m_ = m;
  T.q_hat_ = q_hat;
  T.U_ = svd.U.leftCols(q_hat);
  T.S_ = VectorXd::Zero(q_hat);
  T.Lambda_ = svd.values.head(q_hat);
  return T;
}

MatrixXd SpectralTransform::apply(const Eigen::Ref<const MatrixXd>& M, int power) const {
  if (M.rows() != n_)
    throw Error(ErrorKind::DimensionMismatch, "transform of size " + std::to_string(n_) +
                                                  " applied to matrix with " + std::to_string(M.rows()) +
                                                  " rows");
  if (power < 1) throw Error(ErrorKind::InvalidArgument, "transform power must be >= 1");
  MatrixXd out = M;
  if (U_.cols() == 0) return out;
  const VectorXd damp = VectorXd::Ones(S_.size()) - S_.array().pow(power).matrix();
  MatrixXd coords = U_.transpose() * M;
  coords = damp.asDiagonal() * coords;
  out.noalias() -= U_ * coords;
  return out;
}

VectorXd SpectralTransform::apply_vector(const Eigen::Ref<const VectorXd>& v, int power) const {
  if (v.size() != n_)
    throw Error(ErrorKind::DimensionMismatch, "transform of size " + std::to_string(n_) +
                                                  " applied to vector of length " + std::to_string(v.size()));
  if (power < 1) throw Error(ErrorKind::InvalidArgument, "transform power must be >= 1");
  VectorXd out = v;
  if (U_.cols() == 0) return out;
  const VectorXd damp = VectorXd::Ones(S_.size()) - S_.array().pow(power).matrix();
  VectorXd coords = U_.transpose() * v;
  coords.array() *= damp.array();
  out.noalias() -= U_ * coords;
  return out;
}

VectorXd SpectralTransform::full_shrinkage() const {
  VectorXd out = VectorXd::Ones(std::max(m_, S_.size()));
  out.head(S_.size()) = S_;
  return out;
}

double SpectralTransform::trace_power(int k) const {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "trace power must be >= 1");
  // Components dropped from storage have S = 1 and join the complement.
  return S_.array().pow(k).sum() + static_cast<double>(n_ - S_.size());
}

P1Diagnostics check_p1(const SpectralTransform& T, const Eigen::Ref<const MatrixXd>& X, const P1Limits& limits) {
  if (X.rows() != T.size()) throw Error(ErrorKind::DimensionMismatch, "check_p1: row count differs from transform");
  const double n = static_cast<double>(X.rows());
  const double d = static_cast<double>(X.cols());
  const double m = std::min(n, d);

  P1Diagnostics out;
  const MatrixXd PX = T.apply(X);
  Eigen::BDCSVD<MatrixXd> svd(PX);
  const double top = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  out.op_norm_ratio = top * top / std::max(n, d);
  out.trace2 = T.trace_power(2);
  out.trace4 = T.trace_power(4);
  out.trace4_ratio = out.trace4 / m;
  out.op_norm_violation = out.op_norm_ratio > limits.max_op_norm_ratio;
  out.trace_violation = out.trace4_ratio < 1.0 - limits.rho;
  return out;
}

Spectrum singular_spectrum(const Eigen::Ref<const MatrixXd>& X, double rho) {
  require_finite(X, "spectrum input");
  Spectrum out;
  if (X.size() == 0) return out;
  Eigen::BDCSVD<MatrixXd> svd(X);
  out.values = svd.singularValues();
  const Index m = out.values.size();
  const Index t = (rho > 0.0 && rho <= 1.0) ? trim_count(rho, m) : 0;
  out.quantile_index = t;
  out.quantile_value = t > 0 ? out.values(t - 1) : (m > 0 ? out.values(0) : 0.0);
  return out;
}

}  // namespace ddlasso::spectral
