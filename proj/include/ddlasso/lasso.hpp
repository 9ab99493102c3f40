#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ddlasso::lasso {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Weighted Lasso problem
///
///   minimize (1/2n) ||y - X b||^2 + lambda * sum_l w_l |b_l|
///
/// Columns with zero norm must carry weight 0; their coefficients are
/// pinned to 0. Every other weight must be strictly positive.
struct LassoProblem {
  Eigen::Ref<const MatrixXd> design;
  Eigen::Ref<const VectorXd> response;
  Eigen::Ref<const VectorXd> weights;
  double lambda = 0.0;
};

struct LassoFit {
  VectorXd coef;
  double objective = 0.0;
  Index iterations = 0;  // coordinate sweeps (or proximal steps for the reference solver)
  double kkt_violation = 0.0;
  double lambda_used = 0.0;
  bool converged = false;
};

enum class UpdateMode { Auto, Covariance, Naive };

struct SolverOptions {
  double tol = 1e-7;
  Index max_iter = 0;  // 0 means 10 * d sweeps per penalty level
  UpdateMode mode = UpdateMode::Auto;
  // Auto switches from covariance to naive updates above this many columns.
  Index covariance_max_columns = 5000;
  // Path fits stop once the fit saturates: deviance ratio above
  // max_deviance_ratio, at least n nonzeros, or a relative deviance gain
  // below min_deviance_gain between consecutive grid values.
  bool early_stop = true;
  double max_deviance_ratio = 0.999;
  double min_deviance_gain = 1e-5;
  // Cross-validation stops scanning the grid after this many consecutive
  // values without a new minimum; 0 scans the whole grid.
  Index cv_patience = 10;
};

/// Per-column weights ||X_l||_2 / sqrt(n).
VectorXd column_weights(const Eigen::Ref<const MatrixXd>& X);

double objective(const LassoProblem& problem, const Eigen::Ref<const VectorXd>& coef);

/// Largest KKT residual of coef for problem, measured on the gradient
/// (1/n) X^T (y - X coef).
double kkt_violation(const LassoProblem& problem, const Eigen::Ref<const VectorXd>& coef);

/// Coordinate descent. A fit that runs out of sweeps comes back with
/// converged = false instead of throwing.
LassoFit solve(const LassoProblem& problem, const SolverOptions& options = {},
               std::optional<Eigen::Ref<const VectorXd>> warm_start = std::nullopt);

/// Proximal gradient (ISTA with backtracking). Slow; meant as a test oracle.
/// Throws MaxIterExceeded when tol is not reached.
LassoFit prox_grad_reference(const LassoProblem& problem, double tol = 1e-12, Index max_iter = 5'000'000);

/// lambda_max = max_l |X_l^T y / n| / w_l over columns with w_l > 0.
double lambda_max(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                  const Eigen::Ref<const VectorXd>& weights);

/// count log-spaced values from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, Index count = 100, double ratio = 1e-3);

struct PathFit {
  std::vector<double> lambdas;
  std::vector<VectorXd> coefs;
  std::vector<bool> converged;
  Index total_sweeps = 0;
  bool saturated = false;  // stopped before the end of the grid

  Index size() const { return static_cast<Index>(coefs.size()); }
};

/// Warm-started fits along a strictly decreasing grid. Fitting stops after
/// the entry at index stop_after (inclusive) when one is given, or earlier
/// when the saturation rules in SolverOptions fire.
PathFit solve_path(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const VectorXd>& weights, std::span<const double> grid,
                   const SolverOptions& options = {}, std::optional<Index> stop_after = std::nullopt);

/// Fold labels in [0, folds) for n rows; a pure function of (n, folds, seed).
std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed);

struct CvResult {
  double lambda = 0.0;
  Index index = 0;
  std::vector<double> grid;
  std::vector<double> cv_error;  // mean held-out squared error per grid value
  PathFit path;                  // full-data fits from grid[0] through grid[index]
};

/// K-fold cross-validation over a strictly decreasing grid.
/// Held-out errors are aggregated by fold index, so the result does not
/// depend on the order in which folds are fitted.
CvResult cv_lambda(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                   const Eigen::Ref<const VectorXd>& weights, int folds, std::span<const double> grid,
                   std::uint64_t seed, const SolverOptions& options = {});

struct InflationResult {
  double lambda = 0.0;
  Index index = 0;
  double ratio = 1.0;     // v(lambda) / v(lambda_cv)
  bool reached = true;    // false when no grid value attains the target
};

/// Pick the largest grid value lambda <= grid[cv_index] whose variance
/// functional satisfies v(lambda) >= target * v(grid[cv_index]).
///
/// grid is strictly decreasing and variance[i] = v(grid[i]); entries that
/// are not finite mark grid points that were not evaluated or have a
/// degenerate denominator. The variance functional grows as lambda
/// shrinks, so the move is toward smaller penalties. When no grid value
/// reaches the target the cross-validated value is returned with
/// reached = false. Throws DegenerateDenominator when every entry from
/// index 0 to cv_index is degenerate.
InflationResult inflate_lambda_for_variance(std::span<const double> grid, std::span<const double> variance,
                                            Index cv_index, double target = 1.25);

}  // namespace ddlasso::lasso
