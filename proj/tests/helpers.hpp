#pragma once

#include <Eigen/Dense>

#include "ddlasso/rng.hpp"
#include "ddlasso/spectral.hpp"

namespace testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  ddlasso::Engine engine = ddlasso::make_engine(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = normal(engine);
  return out;
}

inline Eigen::MatrixXd random_orthonormal(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(n, k, seed));
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
}

/// X = U diag(values) V^T with random orthonormal factors.
inline Eigen::MatrixXd with_singular_values(Eigen::Index n, Eigen::Index d, const Eigen::VectorXd& values,
                                            std::uint64_t seed) {
  const Eigen::Index m = values.size();
  return random_orthonormal(n, m, seed) * values.asDiagonal() * random_orthonormal(d, m, seed + 1).transpose();
}

/// Dense n x n materialization of P; test oracle only.
inline Eigen::MatrixXd dense(const ddlasso::spectral::SpectralTransform& T) {
  const Eigen::Index n = T.size();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  const auto& U = T.basis();
  const Eigen::VectorXd damp = Eigen::VectorXd::Ones(T.components()) - T.shrinkage();
  P -= U * damp.asDiagonal() * U.transpose();
  return P;
}

inline Eigen::VectorXd singular_values(const Eigen::MatrixXd& X) { return Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues(); }

}  // namespace testing
