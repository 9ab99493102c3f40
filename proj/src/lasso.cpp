#include "ddlasso/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

#include "ddlasso/error.hpp"
#include "ddlasso/rng.hpp"

namespace ddlasso::lasso {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

void validate(const LassoProblem& problem) {
  const auto& X = problem.design;
  if (X.rows() != problem.response.size())
    throw Error(ErrorKind::DimensionMismatch, "design has " + std::to_string(X.rows()) + " rows but response has " +
                                                  std::to_string(problem.response.size()) + " entries");
  if (X.cols() != problem.weights.size())
    throw Error(ErrorKind::DimensionMismatch, "weights length differs from the number of columns");
  if (X.rows() < 1) throw Error(ErrorKind::InvalidArgument, "lasso needs at least one observation");
  if (!(problem.lambda >= 0.0) || !std::isfinite(problem.lambda))
    throw Error(ErrorKind::InvalidArgument, "lambda must be finite and >= 0");
  if (!X.allFinite() || !problem.response.allFinite() || !problem.weights.allFinite())
    throw Error(ErrorKind::NonFinite, "lasso input contains NaN or Inf");
  for (Index l = 0; l < X.cols(); ++l) {
    const double w = problem.weights(l);
    if (w < 0.0) throw Error(ErrorKind::InvalidArgument, "penalty weights must be nonnegative");
    if (w == 0.0 && X.col(l).squaredNorm() > 0.0)
      throw Error(ErrorKind::InvalidArgument, "zero weight on a nonzero column " + std::to_string(l));
  }
}

// Lazily computed columns of X^T X, shared between the folds of a
// cross-validation run.
class GramCache {
 public:
  explicit GramCache(const Eigen::Ref<const MatrixXd>& X) : X_(X), cols_(X.cols()), have_(X.cols(), 0) {}

  const VectorXd& column(Index k) {
    if (!have_[k]) {
      cols_[k].noalias() = X_.transpose() * X_.col(k);
      have_[k] = 1;
    }
    return cols_[k];
  }

 private:
  Eigen::Ref<const MatrixXd> X_;
  std::vector<VectorXd> cols_;
  std::vector<char> have_;
};

// Gram columns of the training rows: full Gram minus the held-out rows.
class GramView {
 public:
  GramView(GramCache& full, MatrixXd holdout)
      : full_(full), holdout_(std::move(holdout)), cols_(full_columns()), have_(cols_.size(), 0) {}

  const VectorXd& column(Index k) {
    if (holdout_.rows() == 0) return full_.column(k);
    if (!have_[k]) {
      cols_[k] = full_.column(k);
      cols_[k].noalias() -= holdout_.transpose() * holdout_.col(k);
      have_[k] = 1;
    }
    return cols_[k];
  }

 private:
  std::size_t full_columns() const { return static_cast<std::size_t>(holdout_.cols()); }

  GramCache& full_;
  MatrixXd holdout_;
  std::vector<VectorXd> cols_;
  std::vector<char> have_;
};

// Coordinate descent on one weighted Lasso problem, warm-startable across
// penalty levels. With a Gram view the gradient is maintained through Gram
// columns (covariance updates); without one a residual vector is kept
// (naive updates).
class CoordinateDescent {
 public:
  static constexpr Index kNewtonEvery = 5;

  CoordinateDescent(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                    const Eigen::Ref<const VectorXd>& weights, GramView* gram)
      : X_(X), y_(y), w_(weights), gram_(gram), n_(static_cast<double>(X.rows())), d_(X.cols()) {
    curvature_ = X_.colwise().squaredNorm().transpose() / n_;
    coef_ = VectorXd::Zero(d_);
    active_.assign(d_, 0);
    grad0_.noalias() = X_.transpose() * y_ / n_;
    grad_ = grad0_;
    resid_ = y_;
  }

  void warm_start(const Eigen::Ref<const VectorXd>& coef) {
    coef_ = coef;
    for (Index l = 0; l < d_; ++l) {
      if (curvature_(l) == 0.0) coef_(l) = 0.0;
      active_[l] = coef_(l) != 0.0;
    }
    refresh_exact();
  }

  const VectorXd& coef() const { return coef_; }

  // Runs until the exact KKT residual is below tol or the sweep budget is
  // spent. Returns true on convergence.
  bool run(double lambda, double tol, Index max_sweeps, Index& sweeps) {
    lambda_ = lambda;
    sweeps = 0;
    while (sweeps < max_sweeps) {
      sweep_all();
      ++sweeps;
      Index inner = 0;
      while (sweeps < max_sweeps && active_kkt() > 0.5 * tol) {
        if (gram_ && inner % kNewtonEvery == kNewtonEvery - 1) newton_step();
        sweep_active();
        ++sweeps;
        ++inner;
      }
      sync_gradient();
      if (full_kkt() > 0.5 * tol) continue;
      refresh_exact();
      if (full_kkt() <= tol) return true;
    }
    refresh_exact();
    return full_kkt() <= tol;
  }

  // Fraction of the null deviance explained; valid right after run().
  double deviance_ratio() const {
    const double null_dev = y_.squaredNorm();
    return null_dev > 0.0 ? 1.0 - resid_.squaredNorm() / null_dev : 0.0;
  }

  Index nonzeros() const { return static_cast<Index>((coef_.array() != 0.0).count()); }

 private:
  double penalty(Index l) const { return lambda_ * w_(l); }

  double kkt_at(Index l) const {
    if (curvature_(l) == 0.0) return 0.0;
    const double g = grad_(l);
    const double b = coef_(l);
    if (b == 0.0) return std::max(0.0, std::abs(g) - penalty(l));
    return std::abs(g - std::copysign(penalty(l), b));
  }

  double full_kkt() const {
    double worst = 0.0;
    for (Index l = 0; l < d_; ++l) worst = std::max(worst, kkt_at(l));
    return worst;
  }

  double active_kkt() const {
    double worst = 0.0;
    for (Index l : active_list_) worst = std::max(worst, kkt_at(l));
    return worst;
  }

  // Full update: keeps the gradient exact on every coordinate.
  void update(Index l) {
    const double a = curvature_(l);
    if (a == 0.0) return;
    if (!gram_) grad_(l) = X_.col(l).dot(resid_) / n_;
    const double old = coef_(l);
    const double fresh = soft_threshold(grad_(l) + a * old, penalty(l)) / a;
    if (fresh == old) return;
    const double delta = fresh - old;
    coef_(l) = fresh;
    if (gram_) {
      grad_.noalias() -= (delta / n_) * gram_->column(l);
    } else {
      resid_.noalias() -= delta * X_.col(l);
      grad_(l) = X_.col(l).dot(resid_) / n_;
    }
    if (!active_[l]) {
      active_[l] = 1;
      active_list_.push_back(l);
    }
  }

  // Active-set update: with Gram columns only the active gradient entries
  // are kept current; inactive entries are refreshed by sync_gradient().
  void update_active(Index l) {
    if (!gram_) {
      update(l);
      return;
    }
    const double a = curvature_(l);
    const double old = coef_(l);
    const double fresh = soft_threshold(grad_(l) + a * old, penalty(l)) / a;
    if (fresh == old) return;
    const double delta = fresh - old;
    coef_(l) = fresh;
    const VectorXd& col = gram_->column(l);
    const double scale = delta / n_;
    for (Index k : active_list_) grad_(k) -= scale * col(k);
    stale_ = true;
  }

  // Exact minimizer of the objective restricted to the current sign
  // pattern, reached by a step that stops at the first sign change. The
  // objective is a convex quadratic on the orthant, so the step never
  // increases it.
  void newton_step() {
    std::vector<Index> support;
    for (Index k : active_list_)
      if (coef_(k) != 0.0) support.push_back(k);
    const auto s = static_cast<Index>(support.size());
    if (s == 0 || s >= X_.rows()) return;
    MatrixXd M(s, s);
    VectorXd rhs(s), current(s);
    for (Index c = 0; c < s; ++c) {
      const VectorXd& col = gram_->column(support[c]);
      for (Index r = 0; r < s; ++r) M(r, c) = col(support[r]) / n_;
      const Index l = support[c];
      current(c) = coef_(l);
      rhs(c) = grad0_(l) - std::copysign(penalty(l), coef_(l));
    }
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) return;
    const VectorXd target = llt.solve(rhs);
    if (!target.allFinite()) return;

    double step = 1.0;
    Index crossing = -1;
    for (Index c = 0; c < s; ++c) {
      if (target(c) * current(c) <= 0.0) {
        const double t = current(c) / (current(c) - target(c));
        if (t < step) {
          step = t;
          crossing = c;
        }
      }
    }
    for (Index c = 0; c < s; ++c) coef_(support[c]) = current(c) + step * (target(c) - current(c));
    if (crossing >= 0) coef_(support[crossing]) = 0.0;
    stale_ = true;
    sync_gradient();
  }

  void sync_gradient() {
    if (!gram_ || !stale_) return;
    grad_.noalias() = grad0_;
    for (Index k : active_list_)
      if (coef_(k) != 0.0) grad_.noalias() -= (coef_(k) / n_) * gram_->column(k);
    stale_ = false;
  }

  void sweep_all() {
    sync_gradient();
    for (Index l = 0; l < d_; ++l) update(l);
    rebuild_active_list();
  }

  void sweep_active() {
    for (Index l : active_list_) update_active(l);
  }

  void rebuild_active_list() {
    active_list_.clear();
    for (Index l = 0; l < d_; ++l)
      if (active_[l]) active_list_.push_back(l);
  }

  // Recompute residual and gradient from scratch to shed accumulated drift.
  void refresh_exact() {
    resid_ = y_;
    for (Index l = 0; l < d_; ++l)
      if (coef_(l) != 0.0) resid_.noalias() -= coef_(l) * X_.col(l);
    grad_.noalias() = X_.transpose() * resid_ / n_;
    stale_ = false;
    rebuild_active_list();
  }

  Eigen::Ref<const MatrixXd> X_;
  Eigen::Ref<const VectorXd> y_;
  Eigen::Ref<const VectorXd> w_;
  GramView* gram_;
  double n_;
  Index d_;
  double lambda_ = 0.0;
  VectorXd curvature_;
  VectorXd coef_;
  VectorXd grad0_;  // X^T y / n
  VectorXd grad_;
  VectorXd resid_;
  bool stale_ = false;
  std::vector<char> active_;
  std::vector<Index> active_list_;
};

bool use_covariance(const SolverOptions& options, Index d) {
  switch (options.mode) {
    case UpdateMode::Covariance: return true;
    case UpdateMode::Naive: return false;
    case UpdateMode::Auto: break;
  }
  return d <= options.covariance_max_columns;
}

Index sweep_budget(const SolverOptions& options, Index d) {
  return options.max_iter > 0 ? options.max_iter : std::max<Index>(10 * d, 100);
}

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i]))
      throw Error(ErrorKind::InvalidArgument, "lambda grid values must be finite and >= 0");
    if (i > 0 && !(grid[i] < grid[i - 1]))
      throw Error(ErrorKind::InvalidArgument, "lambda grid must be strictly decreasing");
  }
}

PathFit run_path(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                 const Eigen::Ref<const VectorXd>& weights, std::span<const double> grid,
                 const SolverOptions& options, Index last, GramView* gram) {
  CoordinateDescent cd(X, y, weights, gram);
  PathFit path;
  const Index budget = sweep_budget(options, X.cols());
  double previous_ratio = 0.0;
  for (Index i = 0; i <= last; ++i) {
    Index sweeps = 0;
    const bool ok = cd.run(grid[i], options.tol, budget, sweeps);
    path.lambdas.push_back(grid[i]);
    path.coefs.push_back(cd.coef());
    path.converged.push_back(ok);
    path.total_sweeps += sweeps;
    if (!options.early_stop || i == last) continue;
    const double ratio = cd.deviance_ratio();
    if (ratio > options.max_deviance_ratio || cd.nonzeros() >= X.rows() ||
        (i > 0 && ratio - previous_ratio < options.min_deviance_gain * ratio)) {
      path.saturated = true;
      break;
    }
    previous_ratio = ratio;
  }
  return path;
}

}  // namespace

VectorXd column_weights(const Eigen::Ref<const MatrixXd>& X) {
  if (X.rows() == 0) return VectorXd::Zero(X.cols());
  return (X.colwise().norm() / std::sqrt(static_cast<double>(X.rows()))).transpose();
}

double objective(const LassoProblem& problem, const Eigen::Ref<const VectorXd>& coef) {
  const double n = static_cast<double>(problem.design.rows());
  const VectorXd r = problem.response - problem.design * coef;
  return r.squaredNorm() / (2.0 * n) + problem.lambda * problem.weights.cwiseProduct(coef).cwiseAbs().sum();
}

double kkt_violation(const LassoProblem& problem, const Eigen::Ref<const VectorXd>& coef) {
  const double n = static_cast<double>(problem.design.rows());
  const VectorXd g = problem.design.transpose() * (problem.response - problem.design * coef) / n;
  double worst = 0.0;
  for (Index l = 0; l < coef.size(); ++l) {
    const double pen = problem.lambda * problem.weights(l);
    const double v = coef(l) == 0.0 ? std::max(0.0, std::abs(g(l)) - pen)
                                    : std::abs(g(l) - std::copysign(pen, coef(l)));
    worst = std::max(worst, v);
  }
  return worst;
}

LassoFit solve(const LassoProblem& problem, const SolverOptions& options,
               std::optional<Eigen::Ref<const VectorXd>> warm_start) {
  validate(problem);
  if (!(options.tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "solver tolerance must be positive");
  const auto& X = problem.design;

  std::optional<GramCache> cache;
  std::optional<GramView> view;
  if (use_covariance(options, X.cols())) {
    cache.emplace(X);
    view.emplace(*cache, MatrixXd(0, X.cols()));
  }
  CoordinateDescent cd(X, problem.response, problem.weights, view ? &*view : nullptr);
  if (warm_start) {
    if (warm_start->size() != X.cols()) throw Error(ErrorKind::DimensionMismatch, "warm start length");
    cd.warm_start(*warm_start);
  }

  LassoFit fit;
  fit.lambda_used = problem.lambda;
  fit.converged = cd.run(problem.lambda, options.tol, sweep_budget(options, X.cols()), fit.iterations);
  fit.coef = cd.coef();
  fit.kkt_violation = kkt_violation(problem, fit.coef);
  fit.objective = objective(problem, fit.coef);
  if (!fit.coef.allFinite()) throw Error(ErrorKind::NonFinite, "coordinate descent diverged");
  return fit;
}

LassoFit prox_grad_reference(const LassoProblem& problem, double tol, Index max_iter) {
  validate(problem);
  const auto& X = problem.design;
  const auto& y = problem.response;
  const double n = static_cast<double>(X.rows());
  const Index d = X.cols();
  const VectorXd pen = problem.lambda * problem.weights;

  auto smooth = [&](const VectorXd& b) { return (y - X * b).squaredNorm() / (2.0 * n); };
  auto gradient = [&](const VectorXd& b) -> VectorXd { return -X.transpose() * (y - X * b) / n; };

  VectorXd b = VectorXd::Zero(d);
  double step_inv = 1.0;
  LassoFit fit;
  fit.lambda_used = problem.lambda;
  for (Index it = 0; it < max_iter; ++it) {
    if (kkt_violation(problem, b) <= tol) {
      fit.converged = true;
      fit.iterations = it;
      break;
    }
    const VectorXd g = gradient(b);
    const double f = smooth(b);
    VectorXd next(d);
    for (;;) {
      for (Index l = 0; l < d; ++l) next(l) = soft_threshold(b(l) - g(l) / step_inv, pen(l) / step_inv);
      const VectorXd diff = next - b;
      if (smooth(next) <= f + g.dot(diff) + 0.5 * step_inv * diff.squaredNorm() + 1e-15 * std::abs(f)) break;
      step_inv *= 2.0;
    }
    if (next == b) {
      // Step fell below double resolution; accept the current iterate.
      fit.iterations = it;
      fit.converged = kkt_violation(problem, b) <= tol;
      break;
    }
    b = next;
    fit.iterations = it + 1;
  }
  fit.coef = b;
  fit.objective = objective(problem, b);
  fit.kkt_violation = kkt_violation(problem, b);
  if (!fit.converged) throw Error(ErrorKind::MaxIterExceeded, "proximal gradient did not reach tolerance");
  return fit;
}

double lambda_max(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                  const Eigen::Ref<const VectorXd>& weights) {
  if (X.rows() != y.size() || X.cols() != weights.size())
    throw Error(ErrorKind::DimensionMismatch, "lambda_max inputs disagree in size");
  const double n = static_cast<double>(X.rows());
  const VectorXd g = X.transpose() * y / n;
  double out = 0.0;
  for (Index l = 0; l < g.size(); ++l)
    if (weights(l) > 0.0) out = std::max(out, std::abs(g(l)) / weights(l));
  return out;
}

std::vector<double> lambda_grid(double lmax, Index count, double ratio) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "grid needs at least one value");
  if (!(lmax > 0.0) || !std::isfinite(lmax))
    throw Error(ErrorKind::InvalidArgument, "lambda_max must be positive and finite");
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::InvalidArgument, "grid ratio must lie in (0, 1)");
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lmax;
    return grid;
  }
  const double lo = std::log(ratio);
  for (Index i = 0; i < count; ++i)
    grid[i] = lmax * std::exp(lo * static_cast<double>(i) / static_cast<double>(count - 1));
  return grid;
}

PathFit solve_path(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const VectorXd>& weights, std::span<const double> grid,
                   const SolverOptions& options, std::optional<Index> stop_after) {
  check_grid(grid);
  validate(LassoProblem{X, y, weights, grid.front()});
  const Index last = stop_after ? std::min<Index>(*stop_after, static_cast<Index>(grid.size()) - 1)
                                : static_cast<Index>(grid.size()) - 1;
  std::optional<GramCache> cache;
  std::optional<GramView> view;
  if (use_covariance(options, X.cols())) {
    cache.emplace(X);
    view.emplace(*cache, MatrixXd(0, X.cols()));
  }
  return run_path(X, y, weights, grid, options, last, view ? &*view : nullptr);
}

std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::InvalidArgument, "cross-validation needs at least two folds");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Engine engine = make_engine(derive_seed(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(folds)}));
  // Fisher-Yates with an explicit draw so the permutation does not depend
  // on the standard library's shuffle implementation.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(engine() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<int> label(static_cast<std::size_t>(n));
  for (Index pos = 0; pos < n; ++pos) label[order[pos]] = static_cast<int>(pos % folds);
  return label;
}

CvResult cv_lambda(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const VectorXd>& weights, int folds, std::span<const double> grid,
                   std::uint64_t seed, const SolverOptions& options) {
  check_grid(grid);
  validate(LassoProblem{X, y, weights, grid.front()});
  const Index n = X.rows();
  const Index d = X.cols();
  const auto labels = fold_assignment(n, folds, seed);

  std::vector<std::vector<Index>> members(static_cast<std::size_t>(folds));
  for (Index i = 0; i < n; ++i) members[labels[i]].push_back(i);
  for (int f = 0; f < folds; ++f)
    if (members[f].empty() || static_cast<Index>(members[f].size()) == n)
      throw Error(ErrorKind::DegenerateFolds, "fold " + std::to_string(f) + " is empty or holds every row");

  CvResult out;
  out.grid.assign(grid.begin(), grid.end());
  out.cv_error.assign(grid.size(), std::numeric_limits<double>::infinity());

  const bool covariance = use_covariance(options, d);
  std::optional<GramCache> cache;
  if (covariance) cache.emplace(X);

  if (grid.size() == 1) {
    out.cv_error[0] = 0.0;
  } else {
    // All folds advance along the grid together so the scan can stop once
    // the cross-validation curve has turned upward.
    struct Fold {
      MatrixXd X_train, X_out;
      VectorXd y_train, y_out;
      std::optional<GramView> view;
      std::optional<CoordinateDescent> cd;
      double previous_ratio = 0.0;
    };
    std::vector<std::unique_ptr<Fold>> state;
    for (int f = 0; f < folds; ++f) {
      auto fold = std::make_unique<Fold>();
      std::vector<char> held(static_cast<std::size_t>(n), 0);
      for (Index i : members[f]) held[i] = 1;
      const Index n_out = static_cast<Index>(members[f].size());
      fold->X_train.resize(n - n_out, d);
      fold->X_out.resize(n_out, d);
      fold->y_train.resize(n - n_out);
      fold->y_out.resize(n_out);
      for (Index i = 0, a = 0, b = 0; i < n; ++i) {
        if (held[i]) {
          fold->X_out.row(b) = X.row(i);
          fold->y_out(b++) = y(i);
        } else {
          fold->X_train.row(a) = X.row(i);
          fold->y_train(a++) = y(i);
        }
      }
      if (covariance) fold->view.emplace(*cache, fold->X_out);
      fold->cd.emplace(fold->X_train, fold->y_train, weights, fold->view ? &*fold->view : nullptr);
      state.push_back(std::move(fold));
    }

    const Index budget = sweep_budget(options, d);
    Index best = 0;
    for (Index k = 0; k < static_cast<Index>(grid.size()); ++k) {
      bool saturated = false;
      double total = 0.0;
      for (int f = 0; f < folds; ++f) {
        Fold& fold = *state[f];
        Index sweeps = 0;
        fold.cd->run(grid[k], options.tol, budget, sweeps);
        total += (fold.y_out - fold.X_out * fold.cd->coef()).squaredNorm();
        const double ratio = fold.cd->deviance_ratio();
        if (options.early_stop &&
            (ratio > options.max_deviance_ratio || fold.cd->nonzeros() >= fold.X_train.rows() ||
             (k > 0 && ratio - fold.previous_ratio < options.min_deviance_gain * ratio)))
          saturated = true;
        fold.previous_ratio = ratio;
      }
      out.cv_error[k] = total / static_cast<double>(n);
      if (out.cv_error[k] < out.cv_error[best]) best = k;
      if (saturated) break;
      if (options.cv_patience > 0 && k - best >= options.cv_patience) break;
    }
    out.index = best;
  }
  out.lambda = grid[out.index];

  std::optional<GramView> full_view;
  if (covariance) full_view.emplace(*cache, MatrixXd(0, d));
  SolverOptions full_options = options;
  full_options.early_stop = false;
  out.path = run_path(X, y, weights, grid, full_options, out.index, full_view ? &*full_view : nullptr);
  return out;
}

InflationResult inflate_lambda_for_variance(std::span<const double> grid, std::span<const double> variance,
                                            Index cv_index, double target) {
  if (grid.size() != variance.size())
    throw Error(ErrorKind::DimensionMismatch, "variance curve length differs from grid length");
  if (cv_index < 0 || cv_index >= static_cast<Index>(grid.size()))
    throw Error(ErrorKind::IndexOutOfRange, "cross-validated index outside the grid");
  if (!(target >= 1.0)) throw Error(ErrorKind::InvalidArgument, "variance inflation target must be >= 1");

  // Baseline: v at the cross-validated value, or the nearest larger lambda
  // with a usable denominator.
  Index base = cv_index;
  while (base >= 0 && !std::isfinite(variance[base])) --base;
  if (base < 0) throw Error(ErrorKind::DegenerateDenominator, "variance functional undefined along the grid");

  // Variance grows as lambda decreases, so the search runs from the
  // cross-validated value toward the small end of the grid.
  const double want = target * variance[base];
  for (Index i = base; i < static_cast<Index>(grid.size()); ++i) {
    if (std::isfinite(variance[i]) && variance[i] >= want) {
      return InflationResult{grid[i], i, variance[i] / variance[base], true};
    }
  }
  return InflationResult{grid[base], base, 1.0, false};
}

}  // namespace ddlasso::lasso
