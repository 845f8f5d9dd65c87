#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "epifc/mask.hpp"
#include "epifc/numerics.hpp"
#include "epifc/samples.hpp"

namespace epifc {

/// Mean cross-validated test r^2 of the downstream forecaster restricted to a
/// mask; nullopt when every repetition failed. Must be safe to call
/// concurrently.
using MaskScorer = std::function<std::optional<double>(const SelectionMask&)>;

/// One evaluated point of a selection search (p for PCorr, N for RFS).
struct SearchPoint {
  double parameter = 0.0;
  std::size_t mask_size = 0;
  std::optional<double> score;
};

struct SelectionSearch {
  SelectionMask mask;
  std::vector<SearchPoint> points;
};

SelectionMask no_fs(const FeatureSpec& spec);

// ---------------------------------------------------------------------------
// Pairwise-correlation elimination

/// 0.50, 0.51, ..., 0.99.
std::vector<double> pcorr_thresholds();

/// Visits pairs with |rho| > p in ascending (i, j) order. When both members
/// are still retained, drops the one with the larger mean |rho| to the other
/// retained features (the larger index on ties).
SelectionMask pcorr_eliminate(const Matrix& corr, double p);

/// Scores the mask of every threshold and keeps the best (ties go to the
/// larger p). Thresholds producing an identical mask are scored once.
SelectionSearch pcorr_select(const Matrix& corr, const MaskScorer& score);

// ---------------------------------------------------------------------------
// Recursive feature selection

/// Features by descending |LR coefficient| (ascending index on ties), fitted
/// on standardized inputs.
std::vector<std::size_t> rfs_rank(const Matrix& X_standardized, const Vector& y);

/// The `n` top-ranked features as a (sorted) mask.
SelectionMask rfs_prefix(std::span<const std::size_t> ranking, std::size_t n);

/// Scores every prefix size 1..N; N* is the best (ties go to the smaller N).
SelectionSearch rfs_select(std::span<const std::size_t> ranking, const MaskScorer& score);

// ---------------------------------------------------------------------------
// Lasso support

struct LassoSelectOptions {
  int folds = 5;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  int path_length = 100;
  double path_ratio = 1e-3;
  LassoOptions solver;
  /// Replaces the per-fold lambda path when non-empty (lambda_max multiples).
  std::vector<double> path_override;
};

struct LassoFoldResult {
  double lambda = 0.0;
  double test_r2 = 0.0;
  std::size_t nonzero = 0;
};

struct LassoSelection {
  SelectionMask mask;
  std::vector<LassoFoldResult> folds;
};

/// Each fold is an independent random split. Within a fold the lambda path is
/// fitted on the training rows (standardized there) and scored on the test
/// rows; the single best (fold, lambda) model across folds supplies the
/// nonzero support. An all-zero winner falls back to the feature with the
/// largest |x^T y| and sets `mask.fallback`.
LassoSelection lasso_select(const SampleSet& samples, int k, const LassoSelectOptions& options = {});

}  // namespace epifc
