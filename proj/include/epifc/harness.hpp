#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "epifc/featsel.hpp"
#include "epifc/ingest.hpp"
#include "epifc/models.hpp"
#include "epifc/samples.hpp"

namespace epifc {

/// Monte-Carlo cross-validation: `repetitions` independent random splits
/// (not a partitioned k-fold). Repetition r shuffles with seed + r.
struct CvProtocol {
  int repetitions = 10;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool group_by_country = false;  // split whole countries instead of rows
};

struct CvSplit {
  std::vector<std::size_t> train, test;
};

CvSplit make_split(const SampleSet& samples, const CvProtocol& protocol, int repetition);

struct CvReport {
  std::vector<double> train_r2, test_r2;  // NaN where the repetition failed
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> failures;      // empty string = success
  double train_mean = 0.0, train_sd = 0.0;
  double test_mean = 0.0, test_sd = 0.0;

  int failed() const;
  int succeeded() const { return static_cast<int>(failures.size()) - failed(); }
  /// At least one success and no more than half of the repetitions failed.
  bool valid() const;
  /// Recomputes the summary statistics from the per-repetition entries.
  void summarize();
};

/// Receives the training subset of a repetition and returns the mask to use
/// there; it never sees test rows.
using MaskProvider = std::function<SelectionMask(const SampleSet& training_rows)>;

/// Optional bookkeeping of what each repetition touched.
struct CvTrace {
  std::vector<CvSplit> splits;
  std::vector<SelectionMask> masks;
};

/// Per repetition: split, fit the scaler on the training rows, train, and
/// score r^2 on the original target scale for both sides.
CvReport mc_cv(const SampleSet& samples, const SelectionMask& mask, const ForecasterConfig& config,
               int k, const CvProtocol& protocol, CvTrace* trace = nullptr);

CvReport mc_cv(const SampleSet& samples, const MaskProvider& mask_for, const ForecasterConfig& config,
               int k, const CvProtocol& protocol, CvTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Experiment grid

enum class Mode { Paper, StrictNested };

std::string_view to_string(Mode mode);

struct SweepConfig {
  std::vector<ModelKind> models{std::begin(kAllModels), std::end(kAllModels)};
  std::vector<SelectionMethod> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<int> horizons;  // defaults to 1..30 when empty
  CvProtocol cv;
  Mode mode = Mode::Paper;
  bool fast = false;          // tie LSTM dense sizes, 100 epochs, LR-scored selection,
                              // architectures scored on one repetition
  bool surrogate_lr = false;  // score PCorr/RFS candidates with LR
  int workers = 1;
  int max_epochs = 600;
  int batch = 200;
  int patience = 30;
  std::optional<std::filesystem::path> store;  // per-cell result documents

  /// Applies the fast-mode overrides and fills default horizons.
  SweepConfig resolved() const;
};

std::vector<int> fast_horizons();

struct CellKey {
  ModelKind model = ModelKind::LR;
  SelectionMethod method = SelectionMethod::NoFS;
  int k = 1;

  auto operator<=>(const CellKey&) const = default;
  /// `<model>_<method>_K<k>`, the result-store file stem.
  std::string name() const;
};

struct CellResult {
  CellKey key;
  SelectionMask mask;
  std::vector<SearchPoint> selection;   // PCorr / RFS search curve
  ForecasterConfig config;              // chosen architecture
  std::vector<std::pair<ForecasterConfig, std::optional<double>>> grid;
  CvReport report;
  std::string error;                    // non-empty when the cell failed outright
};

struct SweepResult {
  SweepConfig config;
  std::map<CellKey, CellResult> cells;
  std::map<std::pair<ModelKind, int>, SelectionMethod> best;
  std::string config_hash;
};

/// Runs every (model, method, horizon) cell. Cells execute on `workers`
/// OpenMP threads and merge by key, so the result does not depend on the
/// execution order. With a store directory, finished cells are written as
/// they complete and cells already on disk with a matching config hash are
/// loaded instead of recomputed.
SweepResult run_sweep(const SweepConfig& config, const SampleSet& samples);

/// Same grid evaluated one cell at a time in key order: the serial reference
/// for run_sweep.
SweepResult run_sweep_serial(const SweepConfig& config, const SampleSet& samples);

CellResult run_cell(const SweepConfig& config, const SampleSet& samples, const CellKey& key);

/// Highest mean test r^2 among valid cells for (model, K); ties follow the
/// method order NoFS < PCorr < RFS < Lasso. Raises MissingCells when a
/// configured method has no cell and AllCellsFailed when none is valid.
std::pair<SelectionMethod, const CvReport*> best_method(const SweepResult& result, ModelKind model, int k);

std::string cell_to_json(const CellResult& cell, const std::string& config_hash);
CellResult cell_from_json(std::string_view text, std::string* config_hash = nullptr);

/// Stable fingerprint of the sweep settings and the sample data.
std::string sweep_hash(const SweepConfig& config, const SampleSet& samples);

// ---------------------------------------------------------------------------
// Country traces

struct TraceModel {
  std::string label;
  ForecasterConfig config;
  SelectionMask mask;
};

struct TraceResult {
  std::string country;
  int k = 1;
  std::vector<Date> dates;         // predicted dates
  std::vector<Date> anchor_dates;  // dates[i] - anchor_dates[i] = k days
  std::vector<double> truth;
  std::vector<std::pair<std::string, std::vector<double>>> predictions;
};

/// Trains each model once on the pooled horizon-k samples of every country,
/// then slides a one-day window over the chosen country. Raises
/// UnknownCountry or InsufficientHistory.
TraceResult country_trace(const Panel& panel, std::string_view country, int k,
                          const std::vector<TraceModel>& models, int window = kDefaultWindow);

}  // namespace epifc
