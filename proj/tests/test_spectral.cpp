#include <doctest.h>

#include <cmath>

#include "ddlasso/error.hpp"
#include "ddlasso/simgen.hpp"
#include "ddlasso/spectral.hpp"
#include "helpers.hpp"

using namespace ddlasso;
using namespace ddlasso::spectral;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_SUITE("spectral") {

TEST_CASE("svd_thin small cases") {
  {
    const auto f = svd_thin(MatrixXd::Identity(2, 2));
    CHECK(f.values(0) == doctest::Approx(1.0));
    CHECK(f.values(1) == doctest::Approx(1.0));
    CHECK((f.U * f.V.transpose() - MatrixXd::Identity(2, 2)).norm() < 1e-12);
  }
  {
    MatrixXd X = MatrixXd::Zero(2, 2);
    X(0, 0) = 3.0;
    const auto f = svd_thin(X);
    CHECK(f.values(0) == doctest::Approx(3.0));
    CHECK(std::abs(f.values(1)) < 1e-15);
  }
  {
    const auto f = svd_thin(MatrixXd::Ones(2, 2));
    CHECK(f.values(0) == doctest::Approx(2.0));
    CHECK(std::abs(f.values(1)) < 1e-12);
  }
}

TEST_CASE("svd_thin reconstruction and orthonormality") {
  for (auto [n, d] : {std::pair{30, 12}, std::pair{12, 30}, std::pair{25, 25}}) {
    const MatrixXd X = testing::gaussian(n, d, 100 + n);
    const auto f = svd_thin(X);
    const Eigen::Index m = std::min(n, d);
    REQUIRE(f.values.size() == m);
    CHECK((f.U.transpose() * f.U - MatrixXd::Identity(m, m)).norm() < 1e-8);
    CHECK((f.V.transpose() * f.V - MatrixXd::Identity(m, m)).norm() < 1e-8);
    CHECK((X - f.U * f.values.asDiagonal() * f.V.transpose()).norm() <= 1e-8 * (1.0 + X.norm()));
    for (Eigen::Index l = 1; l < m; ++l) CHECK(f.values(l - 1) >= f.values(l));
  }
}

TEST_CASE("svd_thin rejects non-finite input") {
  MatrixXd X = MatrixXd::Ones(3, 3);
  X(1, 1) = std::nan("");
  CHECK_THROWS_AS(svd_thin(X), Error);
  try {
    svd_thin(X);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
}

TEST_CASE("trim shrinkage factors") {
  const VectorXd lam = (VectorXd(3) << 4, 2, 1).finished();
  const MatrixXd X = testing::with_singular_values(6, 3, lam, 7);
  const auto f = svd_thin(X);

  SUBCASE("rho = 2/3 caps at the second value") {
    const auto T = trim_transform(f, 2.0 / 3.0);
    CHECK(T.trimmed() == 2);
    CHECK(T.threshold() == doctest::Approx(2.0));
    const VectorXd S = T.full_shrinkage();
    CHECK(S(0) == doctest::Approx(0.5));
    CHECK(S(1) == 1.0);
    CHECK(S(2) == 1.0);
    const VectorXd sv = testing::singular_values(T.apply(X));
    CHECK(sv(0) == doctest::Approx(2.0));
    CHECK(sv(1) == doctest::Approx(2.0));
    CHECK(sv(2) == doctest::Approx(1.0));
    // P^2 X has singular values S^2 * Lambda.
    const VectorXd sv2 = testing::singular_values(T.apply(X, 2));
    CHECK(sv2(0) == doctest::Approx(2.0));
    CHECK(sv2(1) == doctest::Approx(1.0));
    CHECK(sv2(2) == doctest::Approx(1.0));
  }
  SUBCASE("rho = 1/2 leaves the spectrum alone") {
    const auto T = trim_transform(f, 0.5);
    CHECK(T.trimmed() == 1);
    CHECK(T.threshold() == doctest::Approx(4.0));
    CHECK((T.full_shrinkage() - VectorXd::Ones(3)).norm() == 0.0);
    CHECK((T.apply(X) - X).norm() < 1e-10 * X.norm());
  }
  SUBCASE("equal singular values") {
    const MatrixXd Y = testing::with_singular_values(6, 3, VectorXd::Constant(3, 2.5), 9);
    for (double rho : {0.34, 0.5, 0.9, 1.0}) {
      const auto T = trim_transform(svd_thin(Y), rho);
      CHECK((T.full_shrinkage() - VectorXd::Ones(3)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("trim with zero count is the identity") {
  const MatrixXd X = testing::gaussian(10, 3, 3);
  const auto T = trim_transform(svd_thin(X), 0.2);  // floor(0.6) = 0
  CHECK(T.kind() == TransformKind::Identity);
  CHECK(!T.notes().empty());
  CHECK(T.apply(X) == X);
}

TEST_CASE("trim with a zero threshold annihilates the leading block") {
  VectorXd lam(4);
  lam << 3, 2, 0, 0;
  const MatrixXd X = testing::with_singular_values(8, 4, lam, 21);
  const auto T = trim_transform(svd_thin(X), 0.75);  // t = 3, tau = 0
  CHECK(T.threshold() < 1e-12);
  CHECK(T.apply(X).norm() < 1e-10);
  CHECK(!T.notes().empty());
}

TEST_CASE("trim rejects rho outside (0, 1]") {
  const auto f = svd_thin(testing::gaussian(5, 5, 1));
  CHECK_THROWS_AS(trim_transform(f, 0.0), Error);
  CHECK_THROWS_AS(trim_transform(f, 1.5), Error);
}

TEST_CASE("pca adjustment") {
  const VectorXd lam = (VectorXd(3) << 4, 2, 1).finished();
  const MatrixXd X = testing::with_singular_values(6, 3, lam, 11);
  const auto f = svd_thin(X);
  {
    const auto T = pca_adjust(f, 0);
    CHECK(T.apply(X) == X);
  }
  {
    const auto T = pca_adjust(f, 1);
    const VectorXd sv = testing::singular_values(T.apply(X));
    CHECK(sv(0) == doctest::Approx(2.0));
    CHECK(sv(1) == doctest::Approx(1.0));
    CHECK(std::abs(sv(2)) < 1e-10);
  }
  {
    const auto T = pca_adjust(f, 3);
    CHECK(T.apply(X).norm() < 1e-10);
  }
  CHECK_THROWS_AS(pca_adjust(f, 4), Error);
}

TEST_CASE("apply checks dimensions and composes") {
  const MatrixXd X = testing::gaussian(20, 8, 5);
  const auto T = trim_transform(svd_thin(X), 0.5);
  CHECK_THROWS_AS(T.apply(MatrixXd::Ones(19, 2)), Error);
  CHECK_THROWS_AS(T.apply_vector(VectorXd::Ones(21)), Error);
  const MatrixXd M = testing::gaussian(20, 4, 6);
  const MatrixXd twice = T.apply(T.apply(M));
  CHECK((T.apply(M, 2) - twice).norm() <= 1e-10 * twice.norm());
  CHECK((T.apply_vector(M.col(0), 3) - T.apply(T.apply(T.apply(M))).col(0)).norm() < 1e-10 * M.norm());
  const auto I = SpectralTransform::identity(20);
  CHECK(I.apply(M) == M);
}

TEST_CASE("trace_power examples") {
  CHECK(SpectralTransform::identity(10).trace_power(2) == 10.0);

  const VectorXd lam = (VectorXd(3) << 4, 2, 1).finished();
  const auto T = trim_transform(svd_thin(testing::with_singular_values(3, 3, lam, 4)), 2.0 / 3.0);
  CHECK(T.trace_power(4) == doctest::Approx(2.0625));

  const auto Tp = pca_adjust(svd_thin(testing::with_singular_values(5, 3, lam, 8)), 1);
  CHECK(Tp.trace_power(2) == doctest::Approx(4.0));
}

TEST_CASE("factored transforms against a dense oracle") {
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index n = 5 + (rep * 7) % 46;
    const Eigen::Index d = 3 + (rep * 11) % 40;
    const MatrixXd X = testing::gaussian(n, d, 500 + rep);
    const auto f = svd_thin(X);
    const double rho = 0.1 + 0.03 * rep;
    for (const auto& T : {trim_transform(f, std::min(rho, 1.0)), pca_adjust(f, std::min<Eigen::Index>(2, f.values.size()))}) {
      const MatrixXd P = testing::dense(T);
      // Symmetric with spectrum in [0, 1].
      CHECK((P - P.transpose()).norm() < 1e-12);
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(P);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
      CHECK(eig.eigenvalues().maxCoeff() <= 1.0 + 1e-10);
      MatrixXd Pk = MatrixXd::Identity(n, n);
      for (int k = 1; k <= 8; ++k) {
        Pk = Pk * P;
        if (k == 2 || k == 4 || k == 8) CHECK(std::abs(T.trace_power(k) - Pk.trace()) <= 1e-8 * (1.0 + Pk.trace()));
      }
      const MatrixXd M = testing::gaussian(n, 3, 900 + rep);
      CHECK((T.apply(M) - P * M).norm() <= 1e-10 * (1.0 + M.norm()));
      CHECK((T.apply(M, 2) - P * P * M).norm() <= 1e-10 * (1.0 + M.norm()));
      for (Eigen::Index c = 0; c < M.cols(); ++c) CHECK(T.apply_vector(M.col(c)).norm() <= M.col(c).norm() * (1 + 1e-12));
    }
  }
}

TEST_CASE("trim caps singular values at the quantile") {
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 10 + rep * 2;
    const Eigen::Index d = 40 - rep;
    const MatrixXd X = testing::gaussian(n, d, 70 + rep);
    const double rho = 0.05 + 0.045 * rep;
    const auto T = trim_transform(svd_thin(X), rho);
    // Oracle: singular values from an independent SVD routine.
    const VectorXd lam = testing::singular_values(X);
    const auto t = static_cast<Eigen::Index>(std::floor(rho * lam.size() + 1e-9));
    const double tau = t > 0 ? lam(t - 1) : lam(0);
    const VectorXd got = testing::singular_values(T.apply(X));
    for (Eigen::Index l = 0; l < lam.size(); ++l) CHECK(std::abs(got(l) - std::min(lam(l), tau)) < 1e-8);
  }
}

TEST_CASE("check_p1") {
  const MatrixXd Xsq = testing::gaussian(200, 200, 31);
  const auto pI = check_p1(SpectralTransform::identity(200), Xsq);
  CHECK(pI.trace4_ratio == doctest::Approx(1.0));

  const MatrixXd X = testing::gaussian(200, 400, 32);
  const auto T = trim_transform(svd_thin(X), 0.5);
  const auto p1 = check_p1(T, X);
  CHECK(p1.trace4_ratio >= 0.5);
  CHECK(!p1.trace_violation);
  CHECK(p1.trace2 == doctest::Approx(T.trace_power(2)));
  CHECK_THROWS_AS(check_p1(T, testing::gaussian(199, 4, 1)), Error);
}

TEST_CASE("check_p1 operator norm ratio against a dense oracle") {
  // Median trim on standard Gaussian 200 x 400 designs: record the largest
  // ratio over seeded draws and compare each value with a dense evaluation.
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    const MatrixXd X = testing::gaussian(200, 400, 4000 + seed);
    const auto T = trim_transform(svd_thin(X, false), 0.5);
    const auto p1 = check_p1(T, X);
    const MatrixXd PX = testing::dense(T) * X;
    const double top = testing::singular_values(PX)(0);
    CHECK(p1.op_norm_ratio == doctest::Approx(top * top / 400.0).epsilon(1e-10));
    worst = std::max(worst, p1.op_norm_ratio);
  }
  MESSAGE("largest op_norm_ratio over 100 draws: " << worst);
  CHECK(worst < 4.0);
}

TEST_CASE("singular_spectrum") {
  const auto z = singular_spectrum(MatrixXd::Zero(4, 3));
  CHECK(z.values.cwiseAbs().maxCoeff() == 0.0);

  MatrixXd D = MatrixXd::Zero(2, 2);
  D(0, 0) = 2;
  D(1, 1) = 1;
  const auto s = singular_spectrum(D, 0.5);
  CHECK(s.values(0) == doctest::Approx(2.0));
  CHECK(s.values(1) == doctest::Approx(1.0));
  CHECK(s.quantile_index == 1);
  CHECK(s.quantile_value == doctest::Approx(2.0));

  MatrixXd bad = MatrixXd::Ones(2, 2);
  bad(0, 1) = INFINITY;
  CHECK_THROWS_AS(singular_spectrum(bad), Error);
}

TEST_CASE("confounded draw shows three spikes") {
  simgen::Scenario sc;
  sc.n = 200;
  sc.p = 400;
  const auto data = simgen::sample_dataset(sc, 17);
  const auto s = singular_spectrum(data.X);
  const VectorXd oracle = testing::singular_values(data.X);
  CHECK((s.values - oracle).cwiseAbs().maxCoeff() < 1e-8 * oracle(0));
  VectorXd sorted = s.values;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted(sorted.size() / 2);
  for (int l = 0; l < 3; ++l) CHECK(s.values(l) > 3.0 * median);
  CHECK(s.values(3) < 3.0 * median);
}

}  // TEST_SUITE
