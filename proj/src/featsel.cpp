#include "epifc/featsel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "epifc/error.hpp"
#include "epifc/rng.hpp"

namespace epifc {

SelectionMask no_fs(const FeatureSpec& spec) {
  SelectionMask mask;
  mask.method = SelectionMethod::NoFS;
  mask.indices.resize(spec.size());
  std::iota(mask.indices.begin(), mask.indices.end(), std::size_t{0});
  return mask;
}

std::vector<double> pcorr_thresholds() {
  std::vector<double> out;
  for (int i = 50; i <= 99; ++i) out.push_back(i / 100.0);
  return out;
}

SelectionMask pcorr_eliminate(const Matrix& corr, double p) {
  if (corr.rows() != corr.cols()) throw Error(ErrorCode::ShapeMismatch, "correlation matrix not square");
  if (!(p >= 0.5 && p <= 0.99 + 1e-12)) throw Error(ErrorCode::InvalidArgument, "threshold outside [0.5, 0.99]");
  const auto n = corr.rows();
  std::vector<char> retained(static_cast<std::size_t>(n), 1);
  auto mean_abs = [&](Eigen::Index i) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || !retained[static_cast<std::size_t>(j)]) continue;
      sum += std::abs(corr(i, j));
      ++count;
    }
    return count ? sum / count : 0.0;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (!(std::abs(corr(i, j)) > p)) continue;
      if (!retained[static_cast<std::size_t>(i)] || !retained[static_cast<std::size_t>(j)]) continue;
      const double mi = mean_abs(i), mj = mean_abs(j);
      retained[static_cast<std::size_t>(mi > mj ? i : j)] = 0;
    }
  }
  SelectionMask mask;
  mask.method = SelectionMethod::PCorr;
  mask.threshold = p;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (retained[static_cast<std::size_t>(i)]) mask.indices.push_back(static_cast<std::size_t>(i));
  }
  // Each elimination leaves the other pair member in place.
  if (mask.indices.empty() && n > 0) throw Error(ErrorCode::InvalidArgument, "AllEliminated");
  return mask;
}

namespace {

// Evaluates each distinct mask once; work items run in parallel and are
// merged by position.
std::vector<std::optional<double>> score_unique(const std::vector<SelectionMask>& masks,
                                                const MaskScorer& score) {
  std::map<std::vector<std::size_t>, std::size_t> first_seen;
  std::vector<std::size_t> unique, owner(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    auto [it, inserted] = first_seen.emplace(masks[i].indices, unique.size());
    if (inserted) unique.push_back(i);
    owner[i] = it->second;
  }
  std::vector<std::optional<double>> unique_scores(unique.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t u = 0; u < unique.size(); ++u) {
    unique_scores[u] = score(masks[unique[u]]);
  }
  std::vector<std::optional<double>> out(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) out[i] = unique_scores[owner[i]];
  return out;
}

}  // namespace

SelectionSearch pcorr_select(const Matrix& corr, const MaskScorer& score) {
  std::vector<SelectionMask> masks;
  for (double p : pcorr_thresholds()) masks.push_back(pcorr_eliminate(corr, p));
  const auto scores = score_unique(masks, score);

  SelectionSearch out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    out.points.push_back({*masks[i].threshold, masks[i].size(), scores[i]});
    if (!scores[i]) continue;
    if (!best || *scores[i] >= *scores[*best]) best = i;  // later p wins ties
  }
  if (!best) throw Error(ErrorCode::AllCellsFailed, "PCorr: no threshold could be scored");
  out.mask = masks[*best];
  return out;
}

std::vector<std::size_t> rfs_rank(const Matrix& X, const Vector& y) {
  const auto fit = least_squares(X, y);
  std::vector<std::size_t> order(static_cast<std::size_t>(X.cols()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(fit.weights[static_cast<Eigen::Index>(a)]) >
           std::abs(fit.weights[static_cast<Eigen::Index>(b)]);
  });
  return order;
}

SelectionMask rfs_prefix(std::span<const std::size_t> ranking, std::size_t n) {
  if (n < 1 || n > ranking.size()) throw Error(ErrorCode::InvalidArgument, "RFS prefix size out of range");
  SelectionMask mask;
  mask.method = SelectionMethod::RFS;
  mask.prefix_size = n;
  mask.indices.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

SelectionSearch rfs_select(std::span<const std::size_t> ranking, const MaskScorer& score) {
  std::vector<SelectionMask> masks;
  for (std::size_t n = 1; n <= ranking.size(); ++n) masks.push_back(rfs_prefix(ranking, n));
  const auto scores = score_unique(masks, score);

  SelectionSearch out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    out.points.push_back({static_cast<double>(i + 1), masks[i].size(), scores[i]});
    if (!scores[i]) continue;
    if (!best || *scores[i] > *scores[*best]) best = i;  // smaller N wins ties
  }
  if (!best) throw Error(ErrorCode::AllCellsFailed, "RFS: no prefix size could be scored");
  out.mask = masks[*best];
  return out;
}

namespace {

struct FoldFit {
  LassoFoldResult summary;
  Vector weights;
  Eigen::Index fallback_feature = 0;
};

FoldFit lasso_fold(const SampleSet& samples, const Vector& y, int fold, const LassoSelectOptions& opt) {
  const auto L = samples.rows();
  std::vector<std::size_t> rows(L);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(derive_seed(opt.seed, 0x1a55, static_cast<std::uint64_t>(fold)));
  rng.shuffle(rows);
  const auto n_train = static_cast<std::size_t>(std::llround(opt.train_fraction * static_cast<double>(L)));
  std::span<const std::size_t> train(rows.data(), n_train);
  std::span<const std::size_t> test(rows.data() + n_train, L - n_train);

  const auto scaler = fit_scaler(samples, train);
  const Matrix Ztr = transform(samples, scaler, train);
  const Matrix Zte = transform(samples, scaler, test);
  const Vector ytr = gather(y, train);
  const Vector yte = gather(y, test);
  // The path is relative to lambda_max, so scaling y leaves every support
  // unchanged; unit scale keeps the solver tolerance meaningful.
  const double y_mean = ytr.mean();
  double y_scale = std::sqrt((ytr.array() - y_mean).square().sum() / static_cast<double>(ytr.size()));
  if (!(y_scale > 0.0)) y_scale = 1.0;
  const Vector yc = (ytr.array() - y_mean) / y_scale;

  std::vector<double> path;
  if (opt.path_override.empty()) {
    path = lambda_path(Ztr, yc, opt.path_length, opt.path_ratio);
  } else {
    const double top = lambda_max(Ztr, yc);
    for (double m : opt.path_override) path.push_back(m * top);
  }

  FoldFit best;
  best.summary.test_r2 = -std::numeric_limits<double>::infinity();
  Vector w = Vector::Zero(Ztr.cols());
  const bool covariance = opt.solver.update == LassoUpdate::Covariance ||
                          (opt.solver.update == LassoUpdate::Auto && Ztr.rows() > Ztr.cols());
  std::optional<LassoGram> stats;
  if (covariance) stats = LassoGram::make(Ztr, yc);
  for (double lambda : path) {
    auto res = stats ? lasso_cd_gram(*stats, lambda, opt.solver, &w)
                     : lasso_cd(LassoProblem{Ztr, yc, lambda}, opt.solver, &w);
    w = res.weights;
    const Vector pred = (Zte * w).array() * y_scale + y_mean;
    const double r2 = r2_score(yte, pred);
    if (r2 > best.summary.test_r2) {
      best.summary = {lambda, r2, static_cast<std::size_t>((w.array() != 0.0).count())};
      best.weights = w;
    }
  }
  (Ztr.transpose() * yc).cwiseAbs().maxCoeff(&best.fallback_feature);
  return best;
}

}  // namespace

LassoSelection lasso_select(const SampleSet& samples, int k, const LassoSelectOptions& opt) {
  if (samples.rows() < 10) throw Error(ErrorCode::InvalidArgument, "lasso_select needs at least 10 rows");
  if (opt.folds < 1) throw Error(ErrorCode::InvalidArgument, "lasso_select needs at least one fold");
  const Vector& y = samples.target(k);

  std::vector<FoldFit> fits(static_cast<std::size_t>(opt.folds));
#pragma omp parallel for schedule(dynamic, 1)
  for (int f = 0; f < opt.folds; ++f) fits[static_cast<std::size_t>(f)] = lasso_fold(samples, y, f, opt);

  LassoSelection out;
  std::size_t winner = 0;
  for (std::size_t f = 0; f < fits.size(); ++f) {
    out.folds.push_back(fits[f].summary);
    if (fits[f].summary.test_r2 > fits[winner].summary.test_r2) winner = f;
  }
  const auto& w = fits[winner].weights;
  auto& mask = out.mask;
  mask.method = SelectionMethod::Lasso;
  mask.lambda = fits[winner].summary.lambda;
  mask.fold = static_cast<int>(winner);
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w[j] != 0.0) mask.indices.push_back(static_cast<std::size_t>(j));
  }
  if (mask.indices.empty()) {
    mask.indices.push_back(static_cast<std::size_t>(fits[winner].fallback_feature));
    mask.fallback = true;
  }
  return out;
}

}  // namespace epifc
