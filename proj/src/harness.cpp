#include "epifc/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "epifc/error.hpp"
#include "epifc/rng.hpp"
#include "text_io.hpp"

namespace epifc {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Cross-validation

CvSplit make_split(const SampleSet& samples, const CvProtocol& protocol, int repetition) {
  const auto L = samples.rows();
  const auto target = static_cast<std::size_t>(
      std::llround(protocol.train_fraction * static_cast<double>(L)));
  Rng rng(protocol.seed + static_cast<std::uint64_t>(repetition));
  CvSplit split;
  if (!protocol.group_by_country) {
    std::vector<std::size_t> rows(L);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    rng.shuffle(rows);
    split.train.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(target));
    split.test.assign(rows.begin() + static_cast<std::ptrdiff_t>(target), rows.end());
  } else {
    std::vector<std::size_t> countries;
    for (const auto& o : samples.origins) {
      if (std::find(countries.begin(), countries.end(), o.country) == countries.end()) {
        countries.push_back(o.country);
      }
    }
    std::sort(countries.begin(), countries.end());
    rng.shuffle(countries);
    std::vector<char> in_train(samples.countries.size(), 0);
    std::size_t taken = 0;
    for (std::size_t i = 0; i + 1 < countries.size() && taken < target; ++i) {
      in_train[countries[i]] = 1;
      for (const auto& o : samples.origins) taken += o.country == countries[i];
    }
    for (std::size_t s = 0; s < L; ++s) {
      (in_train[samples.origins[s].country] ? split.train : split.test).push_back(s);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

int CvReport::failed() const {
  return static_cast<int>(std::count_if(failures.begin(), failures.end(),
                                        [](const std::string& f) { return !f.empty(); }));
}

bool CvReport::valid() const {
  return succeeded() >= 1 && failed() * 2 <= static_cast<int>(failures.size());
}

void CvReport::summarize() {
  auto stats = [&](const std::vector<double>& v, double& mean, double& sd) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (failures[i].empty()) {
        sum += v[i];
        ++n;
      }
    }
    mean = n ? sum / n : std::numeric_limits<double>::quiet_NaN();
    double ss = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (failures[i].empty()) ss += (v[i] - mean) * (v[i] - mean);
    }
    sd = n > 1 ? std::sqrt(ss / (n - 1)) : (n == 1 ? 0.0 : std::numeric_limits<double>::quiet_NaN());
  };
  stats(train_r2, train_mean, train_sd);
  stats(test_r2, test_mean, test_sd);
}

namespace {

// Chooses the architecture for one repetition from its training rows.
using ConfigChooser = std::function<ForecasterConfig(const SampleSet& training_rows, const SelectionMask&)>;

bool is_constant(const Vector& y) {
  return (y.array() == y[0]).all();
}

struct RepetitionOutcome {
  double train_r2 = 0.0, test_r2 = 0.0;
};

RepetitionOutcome evaluate_split(const SampleSet& samples, const SelectionMask& mask,
                                 const ForecasterConfig& config, int k,
                                 std::span<const std::size_t> train, std::span<const std::size_t> test) {
  mask.validate(samples.spec.size());
  if (train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "empty training split");
  const Vector& y = samples.target(k);
  const Vector ytr = gather(y, train);
  const Vector yte = gather(y, test);
  if (is_constant(ytr)) throw Error(ErrorCode::DegenerateTarget, "constant training target");

  Matrix Xtr = gather(samples.X, train, mask.indices);
  Matrix Xte = gather(samples.X, test, mask.indices);
  Vector ytr_fit = ytr;
  const bool standardized = uses_standardized_data(config);
  Scaler scaler;
  if (standardized) {
    scaler = fit_scaler(samples, train);
    Xtr = scaler.transform(Xtr, mask.indices);
    Xte = scaler.transform(Xte, mask.indices);
    ytr_fit = scaler.transform_target(k, ytr);
  }
  const auto model = fit(config, Xtr, ytr_fit, mask, samples.spec);
  Vector ptr = predict(model, Xtr);
  Vector pte = predict(model, Xte);
  if (standardized) {
    ptr = scaler.inverse_target(k, ptr);
    pte = scaler.inverse_target(k, pte);
  }
  RepetitionOutcome out{r2_score(ytr, ptr), r2_score(yte, pte)};
  if (!std::isfinite(out.train_r2) || !std::isfinite(out.test_r2)) {
    throw Error(ErrorCode::NonFiniteLoss, "non-finite score");
  }
  return out;
}

CvReport run_cv(const SampleSet& samples, const SelectionMask* fixed_mask, const MaskProvider* provider,
                const ForecasterConfig& config, const ConfigChooser* chooser, int k,
                const CvProtocol& protocol, CvTrace* trace) {
  if (protocol.repetitions < 1) throw Error(ErrorCode::InvalidArgument, "need at least one repetition");
  samples.target(k);
  const auto reps = static_cast<std::size_t>(protocol.repetitions);
  CvReport report;
  report.train_r2.assign(reps, std::numeric_limits<double>::quiet_NaN());
  report.test_r2.assign(reps, std::numeric_limits<double>::quiet_NaN());
  report.failures.assign(reps, {});
  for (std::size_t r = 0; r < reps; ++r) {
    report.seeds.push_back(protocol.seed + r);
    auto split = make_split(samples, protocol, static_cast<int>(r));
    try {
      std::optional<SampleSet> training;
      auto training_rows = [&]() -> const SampleSet& {
        if (!training) training = samples.subset(split.train);
        return *training;
      };
      const SelectionMask mask = fixed_mask ? *fixed_mask : (*provider)(training_rows());
      if (trace) trace->masks.push_back(mask);
      auto cfg = chooser ? (*chooser)(training_rows(), mask) : config;
      cfg.seed = derive_seed(config.seed, r);
      const auto out = evaluate_split(samples, mask, cfg, k, split.train, split.test);
      report.train_r2[r] = out.train_r2;
      report.test_r2[r] = out.test_r2;
    } catch (const Error& e) {
      report.failures[r] = e.what();
      if (report.failures[r].empty()) report.failures[r] = "failed";
    }
    if (trace) trace->splits.push_back(std::move(split));
  }
  report.summarize();
  return report;
}

}  // namespace

CvReport mc_cv(const SampleSet& samples, const SelectionMask& mask, const ForecasterConfig& config,
               int k, const CvProtocol& protocol, CvTrace* trace) {
  return run_cv(samples, &mask, nullptr, config, nullptr, k, protocol, trace);
}

CvReport mc_cv(const SampleSet& samples, const MaskProvider& mask_for, const ForecasterConfig& config,
               int k, const CvProtocol& protocol, CvTrace* trace) {
  return run_cv(samples, nullptr, &mask_for, config, nullptr, k, protocol, trace);
}

// ---------------------------------------------------------------------------
// Sweep

std::string_view to_string(Mode mode) {
  return mode == Mode::Paper ? "paper" : "strict_nested";
}

std::vector<int> fast_horizons() { return {1, 3, 5, 10, 15, 30}; }

SweepConfig SweepConfig::resolved() const {
  SweepConfig c = *this;
  if (c.fast) {
    if (c.horizons.empty()) c.horizons = fast_horizons();
    c.max_epochs = std::min(c.max_epochs, 100);
    c.surrogate_lr = true;
  }
  if (c.horizons.empty()) {
    for (int k = 1; k <= 30; ++k) c.horizons.push_back(k);
  }
  if (c.models.empty() || c.methods.empty()) {
    throw Error(ErrorCode::InvalidArgument, "sweep needs at least one model and one method");
  }
  for (int k : c.horizons) {
    if (k < 1 || k > 30) throw Error(ErrorCode::InvalidArgument, "horizons must lie in 1..30");
  }
  std::sort(c.horizons.begin(), c.horizons.end());
  c.horizons.erase(std::unique(c.horizons.begin(), c.horizons.end()), c.horizons.end());
  return c;
}

std::string CellKey::name() const {
  return std::string(to_string(model)) + "_" + std::string(to_string(method)) + "_K" + std::to_string(k);
}

namespace {

ForecasterConfig base_config(const SweepConfig& c, ModelKind kind, int k) {
  ForecasterConfig f;
  f.kind = kind;
  f.batch = c.batch;
  f.max_epochs = c.max_epochs;
  f.patience = c.patience;
  f.seed = derive_seed(c.cv.seed, static_cast<std::uint64_t>(kind) + 1, static_cast<std::uint64_t>(k));
  return f;
}

MaskScorer make_scorer(const SampleSet& samples, const ForecasterConfig& config, int k,
                       const CvProtocol& protocol) {
  return [&samples, config, k, protocol](const SelectionMask& mask) -> std::optional<double> {
    const auto report = mc_cv(samples, mask, config, k, protocol);
    if (!report.valid()) return std::nullopt;
    return report.test_mean;
  };
}

// Selection artifacts that depend only on the horizon (and the scoring
// forecaster), shared by every cell of that horizon.
struct HorizonCache {
  std::optional<SelectionSearch> pcorr_lr, rfs_lr;
  std::optional<std::vector<std::size_t>> ranking;
  std::optional<SelectionMask> lasso;
};

struct SweepCache {
  std::optional<Matrix> corr;
  std::map<int, HorizonCache> horizons;
};

std::vector<std::size_t> standardized_ranking(const SampleSet& samples, int k) {
  std::vector<std::size_t> all(samples.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto scaler = fit_scaler(samples, all);
  return rfs_rank(transform(samples, scaler, all), scaler.transform_target(k, samples.target(k)));
}

LassoSelectOptions lasso_options(const SweepConfig& c, int k) {
  LassoSelectOptions opt;
  opt.seed = derive_seed(c.cv.seed, 0x1a55, static_cast<std::uint64_t>(k));
  return opt;
}

ForecasterConfig scoring_config(const SweepConfig& c, ModelKind kind, int k) {
  // Candidate masks are scored before the architecture search, so neural
  // models use the smallest architecture of their grid.
  return base_config(c, c.surrogate_lr ? ModelKind::LR : kind, k);
}

struct MaskOutcome {
  SelectionMask mask;
  std::vector<SearchPoint> points;
};

MaskOutcome compute_mask(const SweepConfig& c, const SampleSet& samples, const CellKey& key,
                         const SweepCache* cache) {
  const HorizonCache* hc = nullptr;
  if (cache) {
    if (auto it = cache->horizons.find(key.k); it != cache->horizons.end()) hc = &it->second;
  }
  const auto scorer_cfg = scoring_config(c, key.model, key.k);
  const bool lr_scored = scorer_cfg.kind == ModelKind::LR;
  switch (key.method) {
    case SelectionMethod::NoFS:
      return {no_fs(samples.spec), {}};
    case SelectionMethod::PCorr: {
      if (hc && lr_scored && hc->pcorr_lr) return {hc->pcorr_lr->mask, hc->pcorr_lr->points};
      const Matrix corr = cache && cache->corr ? *cache->corr : correlation_matrix(samples.X);
      auto s = pcorr_select(corr, make_scorer(samples, scorer_cfg, key.k, c.cv));
      return {s.mask, s.points};
    }
    case SelectionMethod::RFS: {
      if (hc && lr_scored && hc->rfs_lr) return {hc->rfs_lr->mask, hc->rfs_lr->points};
      const auto ranking = hc && hc->ranking ? *hc->ranking : standardized_ranking(samples, key.k);
      auto s = rfs_select(ranking, make_scorer(samples, scorer_cfg, key.k, c.cv));
      return {s.mask, s.points};
    }
    case SelectionMethod::Lasso:
      if (hc && hc->lasso) return {*hc->lasso, {}};
      return {lasso_select(samples, key.k, lasso_options(c, key.k)).mask, {}};
  }
  return {};
}

// Strict mode: pick the architecture on a validation split carved from the
// training rows of the repetition.
ForecasterConfig choose_on_validation(const std::vector<ForecasterConfig>& grid, const SampleSet& training,
                                      const SelectionMask& mask, int k, std::uint64_t seed) {
  if (grid.size() == 1) return grid.front();
  CvProtocol inner;
  inner.seed = seed;
  const auto split = make_split(training, inner, 0);
  const auto layout = InputLayout::make(training.spec, mask);
  auto result = grid_search(grid, layout, [&](const ForecasterConfig& cfg) -> std::optional<double> {
    try {
      return evaluate_split(training, mask, cfg, k, split.train, split.test).test_r2;
    } catch (const Error&) {
      return std::nullopt;
    }
  });
  return result.best;
}

CellResult compute_cell(const SweepConfig& c, const SampleSet& samples, const CellKey& key,
                        const SweepCache* cache) {
  CellResult cell;
  cell.key = key;
  const auto base = base_config(c, key.model, key.k);
  const auto grid = architecture_grid(base, c.fast);
  cell.config = grid.front();
  try {
    if (c.mode == Mode::StrictNested) {
      const MaskProvider provider = [&](const SampleSet& training) {
        return compute_mask(c, training, key, nullptr).mask;
      };
      const std::uint64_t inner_seed = derive_seed(c.cv.seed, 0x5e1, static_cast<std::uint64_t>(key.k));
      const ConfigChooser chooser = [&](const SampleSet& training, const SelectionMask& mask) {
        return choose_on_validation(grid, training, mask, key.k, inner_seed);
      };
      CvTrace trace;
      cell.report = run_cv(samples, nullptr, &provider, base, &chooser, key.k, c.cv, &trace);
      if (!trace.masks.empty()) cell.mask = trace.masks.front();
      return cell;
    }

    auto mask = compute_mask(c, samples, key, cache);
    cell.mask = std::move(mask.mask);
    cell.selection = std::move(mask.points);
    if (grid.size() == 1) {
      cell.report = mc_cv(samples, cell.mask, cell.config, key.k, c.cv);
      return cell;
    }
    // Paper mode scores every architecture with the full outer CV and the
    // cell reports the winner's CV directly. Fast mode scores architectures
    // on the protocol's first repetition, then runs the full CV once.
    CvProtocol scoring = c.cv;
    if (c.fast) scoring.repetitions = 1;
    std::vector<CvReport> reports(grid.size());
    std::size_t idx = 0;
    const auto layout = InputLayout::make(samples.spec, cell.mask);
    auto search = grid_search(grid, layout, [&](const ForecasterConfig& cfg) -> std::optional<double> {
      auto& rep = reports[idx++];
      rep = mc_cv(samples, cell.mask, cfg, key.k, scoring);
      if (!rep.valid()) return std::nullopt;
      return rep.test_mean;
    });
    cell.grid = search.scores;
    cell.config = search.best;
    if (c.fast) {
      cell.report = mc_cv(samples, cell.mask, cell.config, key.k, c.cv);
    } else {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] == search.best) cell.report = reports[i];
      }
    }
  } catch (const Error& e) {
    cell.error = e.what();
  }
  return cell;
}

std::vector<CellKey> all_keys(const SweepConfig& c) {
  std::vector<CellKey> keys;
  for (auto m : c.models) {
    for (auto s : c.methods) {
      for (int k : c.horizons) keys.push_back({m, s, k});
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

SweepCache build_cache(const SweepConfig& c, const SampleSet& samples) {
  SweepCache cache;
  const bool pcorr = std::count(c.methods.begin(), c.methods.end(), SelectionMethod::PCorr) > 0;
  const bool rfs = std::count(c.methods.begin(), c.methods.end(), SelectionMethod::RFS) > 0;
  const bool lasso = std::count(c.methods.begin(), c.methods.end(), SelectionMethod::Lasso) > 0;
  const bool lr_scoring = c.surrogate_lr ||
                          std::count(c.models.begin(), c.models.end(), ModelKind::LR) > 0;
  if (pcorr) cache.corr = correlation_matrix(samples.X);
  for (int k : c.horizons) cache.horizons[k];

  // Work items: (horizon, artifact).
  std::vector<std::pair<int, int>> items;
  for (int k : c.horizons) {
    if (lasso) items.emplace_back(k, 0);
    if (rfs) items.emplace_back(k, 1);
    if (pcorr && lr_scoring) items.emplace_back(k, 2);
  }
  std::vector<std::string> errors(items.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, c.workers))
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto [k, what] = items[i];
    auto& hc = cache.horizons.at(k);
    try {
      if (what == 0) {
        hc.lasso = lasso_select(samples, k, lasso_options(c, k)).mask;
      } else if (what == 1) {
        hc.ranking = standardized_ranking(samples, k);
        if (lr_scoring) {
          hc.rfs_lr = rfs_select(*hc.ranking, make_scorer(samples, base_config(c, ModelKind::LR, k), k, c.cv));
        }
      } else {
        hc.pcorr_lr = pcorr_select(*cache.corr, make_scorer(samples, base_config(c, ModelKind::LR, k), k, c.cv));
      }
    } catch (const Error& e) {
      errors[i] = e.what();  // the affected cells recompute and record the failure
    }
  }
  return cache;
}

std::optional<CellResult> load_stored(const SweepConfig& c, const CellKey& key, const std::string& hash) {
  if (!c.store) return std::nullopt;
  const auto path = *c.store / (key.name() + ".json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    std::string stored_hash;
    auto cell = cell_from_json(detail::read_text_file(path), &stored_hash);
    if (stored_hash != hash || cell.key != key) return std::nullopt;
    return cell;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void fill_best(SweepResult& result) {
  for (auto m : result.config.models) {
    for (int k : result.config.horizons) {
      try {
        result.best[{m, k}] = best_method(result, m, k).first;
      } catch (const Error&) {
      }
    }
  }
}

SweepResult sweep_impl(const SweepConfig& config, const SampleSet& samples, bool parallel) {
  SweepResult result;
  result.config = config.resolved();
  const auto& c = result.config;
  result.config_hash = sweep_hash(c, samples);
  const auto keys = all_keys(c);

  std::vector<std::optional<CellResult>> cells(keys.size());
  bool pending = false;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    cells[i] = load_stored(c, keys[i], result.config_hash);
    pending = pending || !cells[i];
  }
  if (c.store) fs::create_directories(*c.store);

  if (pending) {
    if (parallel) {
      const auto cache = build_cache(c, samples);
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, c.workers))
      for (std::size_t i = 0; i < keys.size(); ++i) {
        if (cells[i]) continue;
        cells[i] = compute_cell(c, samples, keys[i], &cache);
        if (c.store) {
          detail::write_text_file(*c.store / (keys[i].name() + ".json"),
                                  cell_to_json(*cells[i], result.config_hash));
        }
      }
    } else {
      const int saved = omp_get_max_threads();
      omp_set_num_threads(1);
      for (std::size_t i = 0; i < keys.size(); ++i) {
        if (cells[i]) continue;
        cells[i] = compute_cell(c, samples, keys[i], nullptr);
        if (c.store) {
          detail::write_text_file(*c.store / (keys[i].name() + ".json"),
                                  cell_to_json(*cells[i], result.config_hash));
        }
      }
      omp_set_num_threads(saved);
    }
  }
  for (std::size_t i = 0; i < keys.size(); ++i) result.cells.emplace(keys[i], std::move(*cells[i]));
  fill_best(result);
  return result;
}

}  // namespace

CellResult run_cell(const SweepConfig& config, const SampleSet& samples, const CellKey& key) {
  return compute_cell(config.resolved(), samples, key, nullptr);
}

SweepResult run_sweep(const SweepConfig& config, const SampleSet& samples) {
  return sweep_impl(config, samples, true);
}

SweepResult run_sweep_serial(const SweepConfig& config, const SampleSet& samples) {
  return sweep_impl(config, samples, false);
}

std::pair<SelectionMethod, const CvReport*> best_method(const SweepResult& result, ModelKind model, int k) {
  std::optional<SelectionMethod> best;
  const CvReport* best_report = nullptr;
  for (auto m : kAllMethods) {
    if (std::find(result.config.methods.begin(), result.config.methods.end(), m) ==
        result.config.methods.end()) {
      continue;
    }
    auto it = result.cells.find({model, m, k});
    if (it == result.cells.end()) {
      throw Error(ErrorCode::MissingCells, "missing cell " + CellKey{model, m, k}.name());
    }
    const auto& rep = it->second.report;
    if (!it->second.error.empty() || !rep.valid() || !std::isfinite(rep.test_mean)) continue;
    if (!best || rep.test_mean > best_report->test_mean) {
      best = m;
      best_report = &rep;
    }
  }
  if (!best) {
    throw Error(ErrorCode::AllCellsFailed, "no valid cell for " + std::string(to_string(model)) +
                                               " at K=" + std::to_string(k));
  }
  return {*best, best_report};
}

// ---------------------------------------------------------------------------
// Cell documents

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double null_or_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json config_json(const ForecasterConfig& c) {
  return {{"kind", to_string(c.kind)}, {"n1", c.n1}, {"n2", c.n2}, {"h_lstm", c.h_lstm},
          {"h1", c.h1}, {"h2", c.h2}, {"batch", c.batch}, {"max_epochs", c.max_epochs},
          {"patience", c.patience}, {"seed", c.seed}};
}

ForecasterConfig config_from(const json& j) {
  ForecasterConfig c;
  c.kind = *parse_model_kind(j.at("kind").get<std::string>());
  c.n1 = j.at("n1");
  c.n2 = j.at("n2");
  c.h_lstm = j.at("h_lstm");
  c.h1 = j.at("h1");
  c.h2 = j.at("h2");
  c.batch = j.at("batch");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

std::string cell_to_json(const CellResult& cell, const std::string& config_hash) {
  json j;
  j["format"] = "epifc-cell";
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["model"] = to_string(cell.key.model);
  j["method"] = to_string(cell.key.method);
  j["K"] = cell.key.k;
  j["error"] = cell.error;
  json mask = {{"method", to_string(cell.mask.method)}, {"indices", cell.mask.indices},
               {"count", cell.mask.size()}, {"fallback", cell.mask.fallback}};
  if (cell.mask.threshold) mask["threshold"] = *cell.mask.threshold;
  if (cell.mask.prefix_size) mask["prefix_size"] = *cell.mask.prefix_size;
  if (cell.mask.lambda) mask["lambda"] = *cell.mask.lambda;
  if (cell.mask.fold) mask["fold"] = *cell.mask.fold;
  j["mask"] = mask;
  json points = json::array();
  for (const auto& p : cell.selection) {
    points.push_back({{"parameter", p.parameter}, {"mask_size", p.mask_size},
                      {"score", p.score ? number_or_null(*p.score) : json(nullptr)}});
  }
  j["selection"] = points;
  j["config"] = config_json(cell.config);
  json grid = json::array();
  for (const auto& [cfg, score] : cell.grid) {
    grid.push_back({{"architecture", cfg.architecture()}, {"config", config_json(cfg)},
                    {"score", score ? number_or_null(*score) : json(nullptr)}});
  }
  j["grid"] = grid;
  const auto& r = cell.report;
  json train = json::array(), test = json::array();
  for (std::size_t i = 0; i < r.train_r2.size(); ++i) {
    train.push_back(number_or_null(r.train_r2[i]));
    test.push_back(number_or_null(r.test_r2[i]));
  }
  j["report"] = {{"train_r2", train}, {"test_r2", test}, {"seeds", r.seeds}, {"failures", r.failures},
                 {"train_mean", number_or_null(r.train_mean)}, {"train_sd", number_or_null(r.train_sd)},
                 {"test_mean", number_or_null(r.test_mean)}, {"test_sd", number_or_null(r.test_sd)},
                 {"valid", r.valid()}};
  return j.dump(1) + "\n";
}

CellResult cell_from_json(std::string_view text, std::string* config_hash) {
  try {
    const auto j = json::parse(text);
    if (j.at("format") != "epifc-cell") throw Error(ErrorCode::InvalidArgument, "not a cell document");
    CellResult cell;
    auto model = parse_model_kind(j.at("model").get<std::string>());
    auto method = parse_selection_method(j.at("method").get<std::string>());
    if (!model || !method) throw Error(ErrorCode::InvalidArgument, "bad cell key");
    cell.key = {*model, *method, j.at("K").get<int>()};
    cell.error = j.at("error");
    const auto& m = j.at("mask");
    cell.mask.method = *parse_selection_method(m.at("method").get<std::string>());
    cell.mask.indices = m.at("indices").get<std::vector<std::size_t>>();
    cell.mask.fallback = m.at("fallback");
    if (m.contains("threshold")) cell.mask.threshold = m["threshold"].get<double>();
    if (m.contains("prefix_size")) cell.mask.prefix_size = m["prefix_size"].get<std::size_t>();
    if (m.contains("lambda")) cell.mask.lambda = m["lambda"].get<double>();
    if (m.contains("fold")) cell.mask.fold = m["fold"].get<int>();
    for (const auto& p : j.at("selection")) {
      SearchPoint sp{p.at("parameter").get<double>(), p.at("mask_size").get<std::size_t>(), std::nullopt};
      if (!p.at("score").is_null()) sp.score = p["score"].get<double>();
      cell.selection.push_back(sp);
    }
    cell.config = config_from(j.at("config"));
    for (const auto& g : j.at("grid")) {
      std::optional<double> s;
      if (!g.at("score").is_null()) s = g["score"].get<double>();
      cell.grid.emplace_back(config_from(g.at("config")), s);
    }
    const auto& r = j.at("report");
    for (const auto& v : r.at("train_r2")) cell.report.train_r2.push_back(null_or_number(v));
    for (const auto& v : r.at("test_r2")) cell.report.test_r2.push_back(null_or_number(v));
    cell.report.seeds = r.at("seeds").get<std::vector<std::uint64_t>>();
    cell.report.failures = r.at("failures").get<std::vector<std::string>>();
    cell.report.train_mean = null_or_number(r.at("train_mean"));
    cell.report.train_sd = null_or_number(r.at("train_sd"));
    cell.report.test_mean = null_or_number(r.at("test_mean"));
    cell.report.test_sd = null_or_number(r.at("test_sd"));
    if (config_hash) *config_hash = j.at("config_hash");
    return cell;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("cell document: ") + e.what());
  }
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  void text(std::string_view s) { bytes(s.data(), s.size()); }
};

}  // namespace

std::string sweep_hash(const SweepConfig& config, const SampleSet& samples) {
  const auto c = config.resolved();
  std::string canon = "models=";
  for (auto m : c.models) canon += std::string(to_string(m)) + ",";
  canon += ";methods=";
  for (auto m : c.methods) canon += std::string(to_string(m)) + ",";
  canon += ";horizons=";
  for (int k : c.horizons) canon += std::to_string(k) + ",";
  canon += ";reps=" + std::to_string(c.cv.repetitions) + ";train=" + detail::format_double(c.cv.train_fraction) +
           ";seed=" + std::to_string(c.cv.seed) + ";group=" + std::to_string(c.cv.group_by_country) +
           ";mode=" + std::string(to_string(c.mode)) + ";fast=" + std::to_string(c.fast) +
           ";surrogate=" + std::to_string(c.surrogate_lr) + ";epochs=" + std::to_string(c.max_epochs) +
           ";batch=" + std::to_string(c.batch) + ";patience=" + std::to_string(c.patience) +
           ";window=" + std::to_string(samples.spec.window) + ";rows=" + std::to_string(samples.rows()) +
           ";cols=" + std::to_string(samples.X.cols()) + ";K_max=" + std::to_string(samples.max_horizon);
  Fnv1a h;
  h.text(canon);
  h.bytes(samples.X.data(), static_cast<std::size_t>(samples.X.size()) * sizeof(double));
  for (const auto& y : samples.targets) h.bytes(y.data(), static_cast<std::size_t>(y.size()) * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.h));
  return buf;
}

// ---------------------------------------------------------------------------
// Traces

TraceResult country_trace(const Panel& panel, std::string_view country, int k,
                          const std::vector<TraceModel>& models, int window) {
  const auto c = panel.country_index(country);
  if (!c) throw Error(ErrorCode::UnknownCountry, "unknown country '" + std::string(country) + "'");
  const auto T = static_cast<long>(panel.num_days());
  const long first = window - 1, last = T - 1 - k;
  if (last < first) {
    throw Error(ErrorCode::InsufficientHistory, std::string(country) + " has " + std::to_string(T) +
                                                    " days; need " + std::to_string(window + k));
  }

  const auto samples = build_samples(panel, k, window);
  std::vector<std::size_t> all(samples.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto scaler = fit_scaler(samples, all);

  TraceResult out;
  out.country = std::string(country);
  out.k = k;
  Matrix rows(last - first + 1, static_cast<Eigen::Index>(samples.spec.size()));
  for (long t = first; t <= last; ++t) {
    const auto anchor = static_cast<std::size_t>(t);
    rows.row(t - first) = feature_row(panel, samples.spec, *c, anchor).transpose();
    out.anchor_dates.push_back(panel.dates[anchor]);
    out.dates.push_back(panel.dates[anchor + static_cast<std::size_t>(k)]);
    out.truth.push_back(panel.series[*c].active[anchor + static_cast<std::size_t>(k)]);
  }
  std::vector<std::size_t> trace_rows(static_cast<std::size_t>(rows.rows()));
  std::iota(trace_rows.begin(), trace_rows.end(), std::size_t{0});

  for (const auto& m : models) {
    m.mask.validate(samples.spec.size());
    Matrix X = gather(samples.X, all, m.mask.indices);
    Vector y = samples.target(k);
    Matrix Xq = gather(rows, trace_rows, m.mask.indices);
    const bool standardized = uses_standardized_data(m.config);
    if (standardized) {
      X = scaler.transform(X, m.mask.indices);
      y = scaler.transform_target(k, y);
      Xq = scaler.transform(Xq, m.mask.indices);
    }
    const auto model = fit(m.config, X, y, m.mask, samples.spec);
    Vector pred = predict(model, Xq);
    if (standardized) pred = scaler.inverse_target(k, pred);
    out.predictions.emplace_back(m.label, std::vector<double>(pred.data(), pred.data() + pred.size()));
  }
  return out;
}

}  // namespace epifc
