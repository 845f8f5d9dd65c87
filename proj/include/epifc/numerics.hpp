#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

namespace epifc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Correlation and scoring

struct PearsonResult {
  double rho = 0.0;
  bool degenerate = false;  // one side had zero variance; rho is 0
};

/// Pearson product-moment correlation with the L-1 covariance denominator.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);
PearsonResult pearson(const Vector& x, const Vector& y);

/// Pairwise correlation of the columns of X, parallelized over column pairs.
/// Zero-variance columns get 0 off the diagonal; the diagonal is always 1.
Matrix correlation_matrix(const Matrix& X);

/// Serial reference for correlation_matrix: one pearson() call per pair.
Matrix correlation_matrix_serial(const Matrix& X);

/// 1 - SS_res / SS_tot. Throws ZeroVariance when y_true is constant.
double r2_score(const Vector& y_true, const Vector& y_pred);

// ---------------------------------------------------------------------------
// Linear least squares

struct LinearFit {
  Vector weights;
  double intercept = 0.0;

  Vector predict(const Matrix& X) const { return (X * weights).array() + intercept; }
};

/// Minimizes ||y - Xw - b||^2. The intercept is absorbed by centering and the
/// weights come from a complete orthogonal decomposition, so rank-deficient
/// designs resolve to the minimum-norm solution.
LinearFit least_squares(const Matrix& X, const Vector& y);

// ---------------------------------------------------------------------------
// Lasso

double soft_threshold(double z, double lambda);

/// (1/(2L)) ||y - Xw||^2 + lambda ||w||_1 over standardized X and centered y.
struct LassoProblem {
  const Matrix& X;
  const Vector& y;
  double lambda = 0.0;
};

/// Residual updates touch every row per coordinate step; covariance updates
/// work on the n x n Gram matrix instead and win when L > n. Both run the
/// same iteration.
enum class LassoUpdate { Auto, Residual, Covariance };

struct LassoOptions {
  double tol = 1e-6;
  int max_iter = 10000;
  LassoUpdate update = LassoUpdate::Auto;
};

/// Sufficient statistics for covariance updates: X^T X / L, X^T y / L and
/// y^T y / L.
struct LassoGram {
  Matrix gram;
  Vector xty;
  double yty = 0.0;

  static LassoGram make(const Matrix& X, const Vector& y);
};

struct LassoResult {
  Vector weights;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective;  // after each sweep
};

double lasso_objective(const LassoProblem& problem, const Vector& w);

/// Largest violation of the Lasso optimality conditions at w.
double lasso_kkt_residual(const LassoProblem& problem, const Vector& w);

/// max_j |x_j^T y| / L: the smallest lambda with an all-zero solution.
double lambda_max(const Matrix& X, const Vector& y);

/// Cyclic coordinate descent; stops once the largest coefficient change in a
/// sweep is below tol. `warm_start` seeds the iterate when given.
LassoResult lasso_cd(const LassoProblem& problem, const LassoOptions& options = {},
                     const Vector* warm_start = nullptr);

/// Coordinate descent with covariance updates from precomputed statistics,
/// so one Gram matrix can serve a whole lambda path.
LassoResult lasso_cd_gram(const LassoGram& stats, double lambda, const LassoOptions& options = {},
                          const Vector* warm_start = nullptr);

/// `count` geometrically spaced values from lambda_max down to
/// `ratio` * lambda_max.
std::vector<double> lambda_path(const Matrix& X, const Vector& y, int count = 100,
                                double ratio = 1e-3);

// ---------------------------------------------------------------------------
// Optimization

struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Vector m, v;
  long step = 0;

  explicit AdamState(Eigen::Index size = 0) : m(Vector::Zero(size)), v(Vector::Zero(size)) {}
};

/// One bias-corrected ADAM update of `params` in place.
void adam_step(Vector& params, const Vector& grads, AdamState& state);

/// Max over coordinates of |g_fd - g_an| / max(1, |g_fd| + |g_an|) with
/// central differences of width 2 * step.
double grad_check(const std::function<double(const Vector&)>& f, const Vector& analytic_grad,
                  const Vector& theta0, double step = 1e-5);

}  // namespace epifc
