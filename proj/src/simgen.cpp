#include "ddlasso/simgen.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "ddlasso/error.hpp"

namespace ddlasso::simgen {

namespace {

// Stream keys for the independent parts of one dataset.
enum Stream : std::uint64_t { kLoadings = 1, kConfounders = 2, kDesign = 3, kNoise = 4 };

template <class Enum, std::size_t N>
Enum parse_enum(const std::string& s, const std::pair<const char*, Enum> (&table)[N], const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw Error(ErrorKind::InvalidArgument, std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::pair<const char*, CovKind> kCovNames[] = {
    {"identity", CovKind::Identity}, {"toeplitz", CovKind::Toeplitz}, {"equicorrelation", CovKind::Equicorrelation}};
constexpr std::pair<const char*, LoadingKind> kLoadingNames[] = {{"dense", LoadingKind::DenseGaussian},
                                                                 {"sparse", LoadingKind::SparseProportion},
                                                                 {"decay", LoadingKind::Decay}};
constexpr std::pair<const char*, Distribution> kDistNames[] = {{"gaussian", Distribution::Gaussian},
                                                               {"chi2_1", Distribution::Chi2_1},
                                                               {"t5", Distribution::T5},
                                                               {"bin16", Distribution::Bin16}};
constexpr std::pair<const char*, Mode> kModeNames[] = {{"confounded", Mode::Confounded},
                                                       {"no_bias", Mode::NoBias},
                                                       {"measurement_error", Mode::MeasurementError},
                                                       {"unconfounded", Mode::Unconfounded}};

template <class Enum, std::size_t N>
std::string name_of(Enum value, const std::pair<const char*, Enum> (&table)[N]) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "unknown";
}

}  // namespace

std::string to_string(CovKind kind) { return name_of(kind, kCovNames); }
std::string to_string(LoadingKind kind) { return name_of(kind, kLoadingNames); }
std::string to_string(Distribution dist) { return name_of(dist, kDistNames); }
std::string to_string(Mode mode) { return name_of(mode, kModeNames); }
CovKind cov_kind_from_string(const std::string& s) { return parse_enum(s, kCovNames, "covariance kind"); }
LoadingKind loading_kind_from_string(const std::string& s) { return parse_enum(s, kLoadingNames, "loading kind"); }
Distribution distribution_from_string(const std::string& s) { return parse_enum(s, kDistNames, "distribution"); }
Mode mode_from_string(const std::string& s) { return parse_enum(s, kModeNames, "mode"); }

VectorXd Scenario::beta_full() const {
  VectorXd out = VectorXd::Zero(p);
  for (std::size_t l = 0; l < beta.size() && static_cast<Index>(l) < p; ++l) out(static_cast<Index>(l)) = beta[l];
  return out;
}

void Scenario::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, "scenario: " + msg); };
  if (n < 5) fail("n must be at least 5");
  if (p < 2) fail("p must be at least 2");
  if (q < 0) fail("q must be nonnegative");
  if (static_cast<Index>(beta.size()) > p) fail("beta has more entries than p");
  for (double v : beta)
    if (!std::isfinite(v)) fail("beta must be finite");
  if (!(sigma_e >= 0.0) || !std::isfinite(sigma_e)) fail("sigma_e must be finite and nonnegative");
  if (!(cov.kappa >= 0.0 && cov.kappa < 1.0)) fail("kappa must lie in [0, 1)");
  if (!(loadings.frac > 0.0 && loadings.frac <= 1.0)) fail("loading fraction must lie in (0, 1]");
  if (!(loadings.decay >= 1.0) || !std::isfinite(loadings.decay)) fail("loading decay must be >= 1");
}

MatrixXd make_covariance(const Covariance& cov, Index p) {
  if (p < 1) throw Error(ErrorKind::InvalidArgument, "covariance dimension must be positive");
  if (!(cov.kappa >= 0.0 && cov.kappa < 1.0))
    throw Error(ErrorKind::NotPositiveDefinite, "correlation parameter must lie in [0, 1)");
  const double k = cov.kappa;
  switch (cov.kind) {
    case CovKind::Identity: return MatrixXd::Identity(p, p);
    case CovKind::Toeplitz: {
      // AR(1): L(i, 0) = k^i, L(i, c) = k^(i-c) sqrt(1 - k^2) for 1 <= c <= i.
      MatrixXd L = MatrixXd::Zero(p, p);
      const double s = std::sqrt(1.0 - k * k);
      for (Index c = 0; c < p; ++c) {
        double v = c == 0 ? 1.0 : s;
        for (Index i = c; i < p; ++i) {
          L(i, c) = v;
          v *= k;
        }
      }
      return L;
    }
    case CovKind::Equicorrelation: {
      MatrixXd S = MatrixXd::Constant(p, p, k);
      S.diagonal().setOnes();
      Eigen::LLT<MatrixXd> llt(S);
      if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::NotPositiveDefinite, "equicorrelation matrix is not positive definite");
      return llt.matrixL();
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown covariance kind");
}

VectorXd residual_sd(const Covariance& cov, Index p) {
  const double k = cov.kappa;
  VectorXd prec(p);
  switch (cov.kind) {
    case CovKind::Identity: prec.setOnes(); break;
    case CovKind::Toeplitz:
      // Tridiagonal AR(1) precision.
      prec.setConstant((1.0 + k * k) / (1.0 - k * k));
      prec(0) = prec(p - 1) = 1.0 / (1.0 - k * k);
      if (p == 1) prec(0) = 1.0;
      break;
    case CovKind::Equicorrelation: {
      const double pd = static_cast<double>(p);
      prec.setConstant((1.0 + (pd - 2.0) * k) / ((1.0 - k) * (1.0 + (pd - 1.0) * k)));
      break;
    }
  }
  return prec.cwiseSqrt().cwiseInverse();
}

LoadingDraw make_loadings(Index q, Index p, const Loadings& kind, std::uint64_t seed) {
  LoadingDraw out;
  out.Psi.resize(q, p);
  out.phi.resize(q);
  if (q == 0) return out;
  Engine engine = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < q; ++i)
    for (Index l = 0; l < p; ++l) out.Psi(i, l) = normal(engine);
  for (Index i = 0; i < q; ++i) out.phi(i) = normal(engine);

  if (kind.kind == LoadingKind::SparseProportion) {
    const auto keep = static_cast<Index>(std::llround(kind.frac * static_cast<double>(p)));
    std::vector<Index> order(static_cast<std::size_t>(p));
    for (Index i = 0; i < q; ++i) {
      // Partial Fisher-Yates: the first `keep` positions form the support.
      std::iota(order.begin(), order.end(), Index{0});
      for (Index a = 0; a < keep && a < p - 1; ++a) {
        const auto b = a + static_cast<Index>(engine() % static_cast<std::uint64_t>(p - a));
        std::swap(order[a], order[b]);
      }
      for (Index a = keep; a < p; ++a) out.Psi(i, order[a]) = 0.0;
    }
  } else if (kind.kind == LoadingKind::Decay) {
    std::vector<Index> rank(static_cast<std::size_t>(p));
    for (Index i = 0; i < q; ++i) {
      std::iota(rank.begin(), rank.end(), Index{1});
      for (Index a = p - 1; a > 0; --a) {
        const auto b = static_cast<Index>(engine() % static_cast<std::uint64_t>(a + 1));
        std::swap(rank[a], rank[b]);
      }
      // Variance rank^{-a}, so the sd is rank^{-a/2}.
      for (Index l = 0; l < p; ++l) out.Psi(i, l) *= std::pow(static_cast<double>(rank[l]), -0.5 * kind.decay);
    }
  }
  return out;
}

VectorXd true_perturbation(const Eigen::Ref<const MatrixXd>& Psi, const Eigen::Ref<const VectorXd>& phi,
                           const MatrixXd& chol) {
  const Index q = Psi.rows();
  const Index p = Psi.cols();
  if (phi.size() != q) throw Error(ErrorKind::DimensionMismatch, "phi length differs from the number of confounders");
  if (q == 0) return VectorXd::Zero(p);

  // A = Sigma_E^{-1} Psi^T
  MatrixXd A = Psi.transpose();
  if (chol.size() > 0) {
    if (chol.rows() != p || chol.cols() != p)
      throw Error(ErrorKind::DimensionMismatch, "covariance factor has the wrong size");
    chol.triangularView<Eigen::Lower>().solveInPlace(A);
    chol.transpose().triangularView<Eigen::Upper>().solveInPlace(A);
  }
  MatrixXd cap = Psi * A;
  cap.diagonal().array() += 1.0;
  Eigen::LLT<MatrixXd> llt(cap);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "Woodbury capacitance matrix is singular");
  // Sigma_X^{-1} Psi^T phi = A phi - A cap^{-1} (Psi A) phi = A cap^{-1} phi
  return A * llt.solve(phi);
}

StandardizedSampler::StandardizedSampler(Distribution dist, std::uint64_t seed)
    : dist_(dist), engine_(make_engine(seed)) {}

double StandardizedSampler::operator()() {
  switch (dist_) {
    case Distribution::Gaussian: return normal_(engine_);
    case Distribution::Chi2_1: {
      const double z = normal_(engine_);
      return (z * z - 1.0) / std::numbers::sqrt2;
    }
    case Distribution::T5: return t5_(engine_) / std::sqrt(5.0 / 3.0);
    case Distribution::Bin16: return (bin16_(engine_) - 8) / 2.0;
  }
  return 0.0;
}

MatrixXd StandardizedSampler::matrix(Index rows, Index cols) {
  MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) out(i, c) = (*this)();
  return out;
}

Generator::Generator(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  if (scenario_.cov.kind != CovKind::Identity && scenario_.cov.kappa > 0.0)
    chol_ = make_covariance(scenario_.cov, scenario_.p);
  sigma_j_ = residual_sd(scenario_.cov, scenario_.p);
}

MatrixXd Generator::correlate(MatrixXd Z) const {
  if (chol_.size() == 0) return Z;
  if (scenario_.cov.kind == CovKind::Toeplitz) {
    // Row-wise AR(1) recursion; equal to Z L^T with the closed-form factor.
    const double k = scenario_.cov.kappa;
    const double s = std::sqrt(1.0 - k * k);
    for (Index c = 1; c < Z.cols(); ++c) Z.col(c) = k * Z.col(c - 1) + s * Z.col(c);
    return Z;
  }
  return Z * chol_.transpose().triangularView<Eigen::Upper>();
}

Dataset Generator::sample(std::uint64_t seed) const {
  const Scenario& s = scenario_;
  const Index n = s.n;
  const Index p = s.p;
  const Index q = s.effective_q();

  Dataset d;
  Truth& t = d.truth;
  t.beta = s.beta_full();
  t.sigma_j = sigma_j_;
  t.sigma_e2 = s.sigma_e * s.sigma_e;

  LoadingDraw load = make_loadings(q, p, s.loadings, derive_seed(seed, {kLoadings}));
  t.Psi = std::move(load.Psi);
  t.phi = s.mode == Mode::MeasurementError ? VectorXd(-(t.Psi * t.beta)) : std::move(load.phi);

  StandardizedSampler h_draw(s.dist, derive_seed(seed, {kConfounders}));
  StandardizedSampler e_draw(s.dist, derive_seed(seed, {kDesign}));
  StandardizedSampler noise_draw(s.dist, derive_seed(seed, {kNoise}));
  t.H = h_draw.matrix(n, q);
  t.E = correlate(e_draw.matrix(n, p));
  t.e = s.sigma_e * noise_draw.matrix(n, 1).col(0);

  d.X = t.E;
  if (q > 0) d.X.noalias() += t.H * t.Psi;
  const VectorXd Hphi = q > 0 ? VectorXd(t.H * t.phi) : VectorXd::Zero(n);
  d.Y = d.X * t.beta + Hphi + t.e;

  t.b_confounding = true_perturbation(t.Psi, t.phi, chol_);
  if (s.mode == Mode::NoBias) {
    d.Y -= d.X * t.b_confounding;
    t.b = VectorXd::Zero(p);
    t.delta = Hphi - d.X * t.b_confounding;
  } else {
    t.b = t.b_confounding;
    t.delta = Hphi - d.X * t.b;
  }
  return d;
}

Dataset sample_dataset(const Scenario& scenario, std::uint64_t seed) { return Generator(scenario).sample(seed); }

}  // namespace ddlasso::simgen
