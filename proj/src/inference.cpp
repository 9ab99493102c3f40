#include "ddlasso/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "ddlasso/error.hpp"
#include "ddlasso/rng.hpp"

namespace ddlasso::inference {

namespace {

constexpr double kDegenerateRelTol = 1e-12;

MatrixXd drop_column(const Eigen::Ref<const MatrixXd>& X, Index j) {
  MatrixXd out(X.rows(), X.cols() - 1);
  if (j > 0) out.leftCols(j) = X.leftCols(j);
  if (j + 1 < X.cols()) out.rightCols(X.cols() - j - 1) = X.rightCols(X.cols() - j - 1);
  return out;
}

void check_denominator(double denominator, double z_norm, double x_norm) {
  if (!std::isfinite(denominator) || std::abs(denominator) < kDegenerateRelTol * z_norm * x_norm ||
      denominator == 0.0)
    throw Error(ErrorKind::DegenerateDenominator, "Z_j^T P^2 X_j is numerically zero");
}

double theoretical_lambda(double A, double sigma, Index n, Index p) {
  return A * sigma * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

lasso::LassoFit fit_from_path(const lasso::LassoProblem& problem, const lasso::CvResult& cv) {
  lasso::LassoFit fit;
  fit.coef = cv.path.coefs[static_cast<std::size_t>(cv.index)];
  fit.lambda_used = cv.lambda;
  fit.objective = lasso::objective(problem, fit.coef);
  fit.kkt_violation = lasso::kkt_violation(problem, fit.coef);
  fit.converged = cv.path.converged[static_cast<std::size_t>(cv.index)];
  fit.iterations = cv.path.total_sweeps;
  return fit;
}

// Seeds for the fold assignments of the initial fit and of each projection
// regression; a fixed function of the tuning seed and the target.
std::uint64_t initial_seed(const Tuning& t) { return derive_seed(t.seed, {1}); }
std::uint64_t projection_seed(const Tuning& t, Index j) {
  return derive_seed(t.seed, {2, static_cast<std::uint64_t>(j)});
}

void trim_guard(const TransformSpec& spec, Index m, const std::optional<Index>& hint, const char* which,
                std::vector<std::string>& notes) {
  if (!hint || spec.kind != TransformKind::Trim) return;
  const auto t = static_cast<Index>(std::floor(spec.rho * static_cast<double>(m) + 1e-9));
  if (t < *hint + 1)
    notes.push_back(std::string(which) + " trims " + std::to_string(t) + " singular values, fewer than the " +
                    std::to_string(*hint + 1) + " needed for " + std::to_string(*hint) + " confounders");
}

}  // namespace

std::string to_string(const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Trim: {
      char buf[48];
      std::snprintf(buf, sizeof buf, "trim:%.15g", spec.rho);
      return buf;
    }
    case TransformKind::PcaAdjust: return "pca:" + std::to_string(spec.q_hat);
  }
  return "unknown";
}

SpectralTransform build_transform(const Eigen::Ref<const MatrixXd>& X, const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::Identity: return SpectralTransform::identity(X.rows());
    case TransformKind::Trim:
      if (spec.rho == 0.0) return SpectralTransform::identity(X.rows());
      return spectral::trim_transform(spectral::svd_thin(X, false), spec.rho);
    case TransformKind::PcaAdjust:
      if (spec.q_hat == 0) return SpectralTransform::identity(X.rows());
      return spectral::pca_adjust(spectral::svd_thin(X, false), spec.q_hat);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown transform kind");
}

DdlConfig DdlConfig::standard(const Tuning& tuning, double alpha) {
  DdlConfig c;
  c.initial = TransformSpec::identity();
  c.nuisance = TransformSpec::identity();
  c.tuning = tuning;
  c.alpha = alpha;
  return c;
}

void DdlConfig::validate() const {
  for (const TransformSpec* s : {&initial, &nuisance}) {
    if (s->kind == TransformKind::Trim && !(s->rho >= 0.0 && s->rho <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "trim fraction must lie in [0, 1]");
    if (s->kind == TransformKind::PcaAdjust && s->q_hat < 0)
      throw Error(ErrorKind::InvalidArgument, "PCA component count must be nonnegative");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  if (tuning.mode == TuningMode::Theoretical) {
    if (!(tuning.A >= 0.0) || !(tuning.sigma_e >= 0.0) || !(tuning.sigma_j >= 0.0))
      throw Error(ErrorKind::InvalidArgument, "theoretical tuning constants must be nonnegative");
  } else {
    if (tuning.folds < 2) throw Error(ErrorKind::InvalidArgument, "cross-validation needs at least two folds");
    if (tuning.grid_size < 1) throw Error(ErrorKind::InvalidArgument, "lambda grid must be nonempty");
    if (!(tuning.grid_ratio > 0.0 && tuning.grid_ratio < 1.0))
      throw Error(ErrorKind::InvalidArgument, "lambda grid ratio must lie in (0, 1)");
    if (!(tuning.variance_inflation >= 1.0))
      throw Error(ErrorKind::InvalidArgument, "variance inflation target must be >= 1");
  }
  if (confounder_hint && *confounder_hint < 0)
    throw Error(ErrorKind::InvalidArgument, "confounder hint must be nonnegative");
}

MatrixXd center_columns(const Eigen::Ref<const MatrixXd>& X) {
  return X.rowwise() - X.colwise().mean();
}

VectorXd center(const Eigen::Ref<const VectorXd>& y) {
  return y.array() - y.mean();
}

InitialFit initial_estimator(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                             const DdlConfig& config) {
  if (X.rows() != Y.size()) throw Error(ErrorKind::DimensionMismatch, "X and Y have different row counts");
  InitialFit out;
  out.Q = build_transform(X, config.initial);
  const MatrixXd QX = out.Q.apply(X);
  const VectorXd QY = out.Q.apply_vector(Y);
  out.weights = lasso::column_weights(QX);

  const Tuning& t = config.tuning;
  if (t.mode == TuningMode::Theoretical) {
    out.lambda = theoretical_lambda(t.A, t.sigma_e, X.rows(), X.cols());
    out.fit = lasso::solve(lasso::LassoProblem{QX, QY, out.weights, out.lambda}, t.solver);
    return out;
  }
  const double top = lasso::lambda_max(QX, QY, out.weights);
  if (!(top > 0.0)) {
    // The response is orthogonal to every column: the zero fit is exact.
    out.lambda = 0.0;
    out.fit.coef = VectorXd::Zero(X.cols());
    out.fit.objective = lasso::objective(lasso::LassoProblem{QX, QY, out.weights, 0.0}, out.fit.coef);
    out.fit.converged = true;
    return out;
  }
  const auto grid = lasso::lambda_grid(top, t.grid_size, t.grid_ratio);
  const auto cv = lasso::cv_lambda(QX, QY, out.weights, t.folds, grid, initial_seed(t), t.solver);
  out.lambda = cv.lambda;
  out.fit = fit_from_path(lasso::LassoProblem{QX, QY, out.weights, cv.lambda}, cv);
  return out;
}

ProjectionDirection projection_direction(const Eigen::Ref<const MatrixXd>& X, Index j, const DdlConfig& config) {
  const Index p = X.cols();
  if (j < 0 || j >= p) throw Error(ErrorKind::IndexOutOfRange, "target index " + std::to_string(j) + " outside [0, p)");
  if (p < 2) throw Error(ErrorKind::InvalidArgument, "projection direction needs at least two columns");

  ProjectionDirection out;
  out.j = j;
  const MatrixXd Xm = drop_column(X, j);
  const VectorXd Xj = X.col(j);
  const double xj_norm = Xj.norm();

  out.P = build_transform(Xm, config.nuisance);
  for (const auto& note : out.P.notes()) out.notes.push_back(note);
  trim_guard(config.nuisance, std::min(Xm.rows(), Xm.cols()), config.confounder_hint, "nuisance transform", out.notes);

  const MatrixXd PXm = out.P.apply(Xm);
  const VectorXd PXj = out.P.apply_vector(Xj);
  const VectorXd w = lasso::column_weights(PXm);

  const Tuning& t = config.tuning;
  if (t.mode == TuningMode::Theoretical) {
    out.lambda_j = theoretical_lambda(t.A, t.sigma_j, X.rows(), p);
    out.lambda_cv = out.lambda_j;
    auto fit = lasso::solve(lasso::LassoProblem{PXm, PXj, w, out.lambda_j}, t.solver);
    if (!fit.converged) out.notes.push_back("projection Lasso did not converge");
    out.gamma_hat = std::move(fit.coef);
  } else if (!(lasso::lambda_max(PXm, PXj, w) > 0.0)) {
    out.gamma_hat = VectorXd::Zero(p - 1);
    out.notes.push_back("transformed target column is orthogonal to the others; gamma_hat = 0");
  } else {
    const auto grid = lasso::lambda_grid(lasso::lambda_max(PXm, PXj, w), t.grid_size, t.grid_ratio);
    const auto cv = lasso::cv_lambda(PXm, PXj, w, t.folds, grid, projection_seed(t, j), t.solver);
    out.lambda_cv = cv.lambda;

    // Variance functional v = Z^T P^4 Z / (Z^T P^2 X_j)^2 along the fitted
    // path, up to the common sigma_e^2 factor.
    std::vector<double> v(grid.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<VectorXd> coefs = cv.path.coefs;
    std::vector<bool> converged = cv.path.converged;
    auto evaluate = [&](Index i) {
      const VectorXd& g = coefs[static_cast<std::size_t>(i)];
      const VectorXd PZ = PXj - PXm * g;
      const double den = PZ.dot(PXj);
      const double z_norm = (Xj - Xm * g).norm();
      if (!(std::abs(den) >= kDegenerateRelTol * z_norm * xj_norm) || den == 0.0) return;
      v[static_cast<std::size_t>(i)] = out.P.apply_vector(PZ).squaredNorm() / (den * den);
    };
    for (Index i = 0; i <= cv.index; ++i) evaluate(i);

    // The functional grows as lambda shrinks; continue the warm-started
    // path below lambda_cv until the target is met or the fit saturates.
    double base = std::numeric_limits<double>::quiet_NaN();
    for (Index i = cv.index; i >= 0; --i)
      if (std::isfinite(v[static_cast<std::size_t>(i)])) {
        base = v[static_cast<std::size_t>(i)];
        break;
      }
    if (std::isfinite(base) && !(v[static_cast<std::size_t>(cv.index)] >= t.variance_inflation * base)) {
      for (Index i = cv.index + 1; i < static_cast<Index>(grid.size()); ++i) {
        auto fit = lasso::solve(lasso::LassoProblem{PXm, PXj, w, grid[static_cast<std::size_t>(i)]}, t.solver,
                                coefs.back());
        const bool full = (fit.coef.array() != 0.0).count() >= X.rows();
        coefs.push_back(std::move(fit.coef));
        converged.push_back(fit.converged);
        evaluate(i);
        if (v[static_cast<std::size_t>(i)] >= t.variance_inflation * base || full) break;
      }
    }

    const auto inflated = lasso::inflate_lambda_for_variance(grid, v, cv.index, t.variance_inflation);
    out.lambda_j = inflated.lambda;
    out.variance_ratio = inflated.ratio;
    out.inflation_reached = inflated.reached;
    if (!inflated.reached) out.notes.push_back("variance inflation target not reached; using the cross-validated lambda_j");
    if (!converged[static_cast<std::size_t>(inflated.index)]) out.notes.push_back("projection Lasso did not converge");
    out.gamma_hat = coefs[static_cast<std::size_t>(inflated.index)];
  }

  out.Zj = Xj - Xm * out.gamma_hat;
  out.PZj = out.P.apply_vector(out.Zj);
  out.P2Zj = out.P.apply_vector(out.Zj, 2);
  check_denominator(out.denominator(Xj), out.Zj.norm(), xj_norm);
  return out;
}

double point_estimate(const Eigen::Ref<const VectorXd>& Y, const Eigen::Ref<const MatrixXd>& X, Index j,
                      const Eigen::Ref<const VectorXd>& beta_init, const ProjectionDirection& proj) {
  if (j < 0 || j >= X.cols()) throw Error(ErrorKind::IndexOutOfRange, "target index outside [0, p)");
  if (beta_init.size() != X.cols() || Y.size() != X.rows() || proj.P2Zj.size() != X.rows())
    throw Error(ErrorKind::DimensionMismatch, "point_estimate inputs disagree in size");
  const double den = proj.denominator(X.col(j));
  check_denominator(den, proj.Zj.norm(), X.col(j).norm());
  // Y - X_{-j} beta_{-j}
  const VectorXd partial = Y - X * beta_init + X.col(j) * beta_init(j);
  return proj.P2Zj.dot(partial) / den;
}

double noise_level(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                   const Eigen::Ref<const VectorXd>& beta_init, const SpectralTransform& Q) {
  const double tr = Q.trace_power(2);
  if (!(tr > 0.0)) throw Error(ErrorKind::InvalidArgument, "noise level needs Tr(Q^2) > 0");
  const VectorXd resid = Y - X * beta_init;
  return Q.apply_vector(resid).squaredNorm() / tr;
}

double variance_estimate(const ProjectionDirection& proj, const Eigen::Ref<const VectorXd>& Xj, double sigma_e2_hat) {
  const double den = proj.denominator(Xj);
  check_denominator(den, proj.Zj.norm(), Xj.norm());
  return sigma_e2_hat * proj.variance_kernel() / (den * den);
}

Interval confidence_interval(double beta_hat, double variance, double alpha) {
  if (!(variance >= 0.0)) throw Error(ErrorKind::InvalidArgument, "variance must be nonnegative");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance);
  return {beta_hat - half, beta_hat + half};
}

DdlResult assemble(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y, Index j,
                   const InitialFit& initial, double sigma_e2_hat, const ProjectionDirection& proj, double alpha) {
  DdlResult r;
  r.j = j;
  r.sigma_e2_hat = sigma_e2_hat;
  r.lambda = initial.lambda;
  r.lambda_j = proj.lambda_j;
  r.flags = proj.notes;
  if (!initial.fit.converged) r.flags.push_back("initial Lasso did not converge");
  try {
    r.denominator = proj.denominator(X.col(j));
    r.beta_hat = point_estimate(Y, X, j, initial.fit.coef, proj);
    r.variance = variance_estimate(proj, X.col(j), sigma_e2_hat);
    r.std_err = std::sqrt(r.variance);
    const auto ci = confidence_interval(r.beta_hat, r.variance, alpha);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
    if (r.std_err > 0.0)
      r.p_value = two_sided_p_value(r.beta_hat / r.std_err);
    else
      r.p_value = r.beta_hat == 0.0 ? 1.0 : 0.0;
  } catch (const Error& e) {
    r.ok = false;
    r.flags.push_back(e.what());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.beta_hat = r.variance = r.std_err = r.ci_low = r.ci_high = r.p_value = nan;
  }
  return r;
}

DoublyDebiasedLasso::DoublyDebiasedLasso(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                                         DdlConfig config)
    : config_(std::move(config)) {
  config_.validate();
  if (X.rows() != Y.size()) throw Error(ErrorKind::DimensionMismatch, "X and Y have different row counts");
  if (X.rows() < 5 || X.cols() < 2) throw Error(ErrorKind::InvalidArgument, "need n >= 5 and p >= 2");
  if (!X.allFinite() || !Y.allFinite()) throw Error(ErrorKind::NonFinite, "data contain NaN or Inf");
  X_ = config_.center ? center_columns(X) : MatrixXd(X);
  Y_ = config_.center ? center(Y) : VectorXd(Y);
  initial_ = initial_estimator(X_, Y_, config_);
  sigma_e2_hat_ = noise_level(X_, Y_, initial_.fit.coef, initial_.Q);
}

TargetEstimate DoublyDebiasedLasso::estimate(Index j) const {
  TargetEstimate out;
  try {
    out.direction = projection_direction(X_, j, config_);
    out.result = assemble(X_, Y_, j, initial_, sigma_e2_hat_, *out.direction, config_.alpha);
    std::vector<std::string> extra;
    trim_guard(config_.initial, std::min(X_.rows(), X_.cols()), config_.confounder_hint, "initial transform", extra);
    out.result.flags.insert(out.result.flags.end(), extra.begin(), extra.end());
  } catch (const Error& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.result = DdlResult{};
    out.result.j = j;
    out.result.ok = false;
    out.result.beta_hat = out.result.variance = out.result.std_err = nan;
    out.result.ci_low = out.result.ci_high = out.result.p_value = out.result.denominator = nan;
    out.result.sigma_e2_hat = sigma_e2_hat_;
    out.result.lambda = initial_.lambda;
    out.result.flags.push_back(e.what());
  }
  return out;
}

std::vector<DdlResult> DoublyDebiasedLasso::fit(std::span<const Index> targets, int workers) const {
  std::vector<DdlResult> out(targets.size());
  const auto count = static_cast<std::ptrdiff_t>(targets.size());
  const int threads = static_cast<int>(std::clamp<std::ptrdiff_t>(workers, 1, std::max<std::ptrdiff_t>(count, 1)));
  if (threads <= 1) {
    for (std::ptrdiff_t k = 0; k < count; ++k) out[k] = estimate(targets[k]).result;
    return out;
  }
  // Static interleaved partition: each slot is written by exactly one thread.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::ptrdiff_t k = w; k < count; k += threads) out[k] = estimate(targets[k]).result;
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<DdlResult> fit(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y,
                           std::span<const Index> targets, const DdlConfig& config, int workers) {
  return DoublyDebiasedLasso(X, Y, config).fit(targets, workers);
}

DdlResult debiased_lasso_baseline(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& Y, Index j,
                                  const Tuning& tuning, double alpha) {
  return DoublyDebiasedLasso(X, Y, DdlConfig::standard(tuning, alpha)).estimate(j).result;
}

AreBounds are(double c_star, double rho_star) {
  if (!(c_star > 0.0)) throw Error(ErrorKind::InvalidArgument, "c_star must be positive");
  if (!(rho_star >= 0.0 && rho_star < 1.0)) throw Error(ErrorKind::InvalidArgument, "rho_star must lie in [0, 1)");
  const double m = std::min(c_star, 1.0);
  return {1.0 / m, 1.0 / ((1.0 - rho_star) * m)};
}

}  // namespace ddlasso::inference
