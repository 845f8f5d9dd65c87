#include "epifc/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "epifc/error.hpp"

namespace epifc {

namespace {

template <class V>
bool all_equal(const V& x, Eigen::Index n) {
  for (Eigen::Index i = 1; i < n; ++i) {
    if (x[i] != x[0]) return false;
  }
  return true;
}

}  // namespace

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "pearson: length mismatch");
  if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "pearson: need at least 2 samples");
  const auto n = static_cast<Eigen::Index>(x.size());
  if (all_equal(x, n) || all_equal(y, n)) return {0.0, true};
  const double L = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    mx += x[s];
    my += y[s];
  }
  mx /= L;
  my /= L;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    const double dx = x[s] - mx, dy = y[s] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double cov = sxy / (L - 1.0);
  const double sx = std::sqrt(sxx / (L - 1.0));
  const double sy = std::sqrt(syy / (L - 1.0));
  return {std::clamp(cov / (sx * sy), -1.0, 1.0), false};
}

PearsonResult pearson(const Vector& x, const Vector& y) {
  return pearson(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                 std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

Matrix correlation_matrix_serial(const Matrix& X) {
  const auto n = X.cols();
  Matrix C = Matrix::Identity(n, n);
  if (n == 1) return C;
  if (X.rows() < 2) throw Error(ErrorCode::InvalidArgument, "correlation_matrix: need L >= 2");
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xi = X.col(i);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Vector xj = X.col(j);
      C(i, j) = C(j, i) = pearson(xi, xj).rho;
    }
  }
  return C;
}

Matrix correlation_matrix(const Matrix& X) {
  const auto n = X.cols();
  const auto L = X.rows();
  Matrix C = Matrix::Identity(n, n);
  if (n == 1) return C;
  if (L < 2) throw Error(ErrorCode::InvalidArgument, "correlation_matrix: need L >= 2");

  // Unit-norm centered columns; constant columns stay zero.
  Matrix Z(L, n);
  std::vector<char> constant(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto col = X.col(j);
    constant[static_cast<std::size_t>(j)] = all_equal(col, L);
    if (constant[static_cast<std::size_t>(j)]) {
      Z.col(j).setZero();
      continue;
    }
    const double mean = col.sum() / static_cast<double>(L);
    Z.col(j) = col.array() - mean;
    Z.col(j) /= Z.col(j).norm();
  }

#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double rho = std::clamp(Z.col(i).dot(Z.col(j)), -1.0, 1.0);
      C(i, j) = rho;
      C(j, i) = rho;
    }
  }
  return C;
}

double r2_score(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorCode::ShapeMismatch, "r2_score: length mismatch");
  if (y_true.size() < 2) throw Error(ErrorCode::InvalidArgument, "r2_score: need at least 2 samples");
  if (all_equal(y_true, y_true.size())) throw Error(ErrorCode::ZeroVariance, "r2_score: constant y_true");
  const double mean = y_true.mean();
  const double ss_tot = (y_true.array() - mean).square().sum();
  const double ss_res = (y_true - y_pred).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

LinearFit least_squares(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw Error(ErrorCode::ShapeMismatch, "least_squares: row mismatch");
  if (X.rows() < 1) throw Error(ErrorCode::InvalidArgument, "least_squares: no rows");
  LinearFit fit;
  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const double y_mean = y.mean();
  if (X.cols() == 0) {
    fit.weights = Vector::Zero(0);
    fit.intercept = y_mean;
    return fit;
  }
  const Matrix Xc = X.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Xc);
  fit.weights = cod.solve(yc);
  fit.intercept = y_mean - x_mean.dot(fit.weights);
  return fit;
}

double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

double lasso_objective(const LassoProblem& p, const Vector& w) {
  const double L = static_cast<double>(p.X.rows());
  return (p.y - p.X * w).squaredNorm() / (2.0 * L) + p.lambda * w.lpNorm<1>();
}

double lasso_kkt_residual(const LassoProblem& p, const Vector& w) {
  const double L = static_cast<double>(p.X.rows());
  const Vector g = p.X.transpose() * (p.y - p.X * w) / L;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    const double v = w[j] != 0.0 ? std::abs(g[j] - p.lambda * (w[j] > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g[j]) - p.lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

double lambda_max(const Matrix& X, const Vector& y) {
  if (X.cols() == 0 || X.rows() == 0) return 0.0;
  return (X.transpose() * y).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

LassoGram LassoGram::make(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw Error(ErrorCode::ShapeMismatch, "lasso: row mismatch");
  const double L = static_cast<double>(X.rows());
  LassoGram g;
  g.gram = X.transpose() * X / L;
  g.xty = X.transpose() * y / L;
  g.yty = y.squaredNorm() / L;
  return g;
}

namespace {

void check_lasso_args(double lambda, const LassoOptions& options) {
  if (lambda < 0.0) throw Error(ErrorCode::InvalidArgument, "lasso: lambda must be >= 0");
  if (options.tol <= 0.0) throw Error(ErrorCode::InvalidArgument, "lasso: tol must be > 0");
}

Vector initial_weights(Eigen::Index n, const Vector* warm_start) {
  Vector w = warm_start ? *warm_start : Vector::Zero(n);
  if (w.size() != n) throw Error(ErrorCode::ShapeMismatch, "lasso: warm start size");
  return w;
}

LassoResult lasso_cd_residual(const LassoProblem& p, const LassoOptions& options, const Vector* warm_start) {
  const auto n = p.X.cols();
  const double L = static_cast<double>(p.X.rows());

  LassoResult out;
  out.weights = initial_weights(n, warm_start);
  const Vector col_sq = p.X.colwise().squaredNorm().transpose() / L;
  Vector residual = p.y - p.X * out.weights;

  for (out.sweeps = 0; out.sweeps < options.max_iter;) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (col_sq[j] == 0.0) {
        out.weights[j] = 0.0;
        continue;
      }
      const double old = out.weights[j];
      const double rho = p.X.col(j).dot(residual) / L + col_sq[j] * old;
      const double updated = soft_threshold(rho, p.lambda) / col_sq[j];
      if (updated != old) {
        residual -= (updated - old) * p.X.col(j);
        out.weights[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    ++out.sweeps;
    out.objective.push_back(residual.squaredNorm() / (2.0 * L) + p.lambda * out.weights.lpNorm<1>());
    if (max_change < options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

LassoResult lasso_cd_gram(const LassoGram& s, double lambda, const LassoOptions& options,
                          const Vector* warm_start) {
  check_lasso_args(lambda, options);
  const auto n = s.gram.cols();
  LassoResult out;
  out.weights = initial_weights(n, warm_start);
  // c = X^T (y - X w) / L, kept current after every coordinate step.
  Vector c = s.xty - s.gram * out.weights;

  for (out.sweeps = 0; out.sweeps < options.max_iter;) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double gjj = s.gram(j, j);
      if (gjj == 0.0) {
        out.weights[j] = 0.0;
        continue;
      }
      const double old = out.weights[j];
      const double updated = soft_threshold(c[j] + gjj * old, lambda) / gjj;
      if (updated != old) {
        c -= (updated - old) * s.gram.col(j);
        out.weights[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    ++out.sweeps;
    // ||y - Xw||^2 / L = y^T y / L - 2 w^T X^T y / L + w^T G w = y^T y / L - w^T (xty + c).
    const double rss = s.yty - out.weights.dot(s.xty + c);
    out.objective.push_back(rss / 2.0 + lambda * out.weights.lpNorm<1>());
    if (max_change < options.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

LassoResult lasso_cd(const LassoProblem& p, const LassoOptions& options, const Vector* warm_start) {
  check_lasso_args(p.lambda, options);
  if (p.X.rows() != p.y.size()) throw Error(ErrorCode::ShapeMismatch, "lasso: row mismatch");
  const bool covariance = options.update == LassoUpdate::Covariance ||
                          (options.update == LassoUpdate::Auto && p.X.rows() > p.X.cols());
  if (covariance) return lasso_cd_gram(LassoGram::make(p.X, p.y), p.lambda, options, warm_start);
  return lasso_cd_residual(p, options, warm_start);
}

std::vector<double> lambda_path(const Matrix& X, const Vector& y, int count, double ratio) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "lambda_path: count must be >= 1");
  const double top = lambda_max(X, y);
  std::vector<double> path(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    path[static_cast<std::size_t>(i)] = top * std::pow(ratio, frac);
  }
  if (count > 1) path.back() = top * ratio;
  return path;
}

void adam_step(Vector& params, const Vector& grads, AdamState& s) {
  if (params.size() != grads.size()) throw Error(ErrorCode::ShapeMismatch, "adam: grad size");
  if (s.m.size() != params.size()) {
    s.m = Vector::Zero(params.size());
    s.v = Vector::Zero(params.size());
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.epsilon);
}

double grad_check(const std::function<double(const Vector&)>& f, const Vector& analytic,
                  const Vector& theta0, double step) {
  if (analytic.size() != theta0.size()) throw Error(ErrorCode::ShapeMismatch, "grad_check: size");
  Vector theta = theta0;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + step;
    const double fp = f(theta);
    theta[i] = orig - step;
    const double fm = f(theta);
    theta[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    const double err = std::abs(fd - analytic[i]) / std::max(1.0, std::abs(fd) + std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace epifc
