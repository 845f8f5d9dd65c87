#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epifc/mask.hpp"
#include "epifc/nets.hpp"
#include "epifc/samples.hpp"

namespace epifc {

enum class ModelKind { LR = 0, MLP = 1, LSTM = 2 };

inline constexpr ModelKind kAllModels[] = {ModelKind::LR, ModelKind::MLP, ModelKind::LSTM};

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

/// Hidden sizes admitted by the architecture grids.
inline constexpr int kHiddenSizes[] = {4, 8, 16, 32};

struct ForecasterConfig {
  ModelKind kind = ModelKind::LR;
  int n1 = 4, n2 = 4;                 // MLP hidden layers
  int h_lstm = 4, h1 = 4, h2 = 4;     // LSTM units and dense layers
  int batch = 200;
  int max_epochs = 600;
  int patience = 30;
  std::uint64_t seed = 0;
  bool standardize_lr = false;  // LR on standardized features (coefficient ranking)

  /// Throws InvalidArgument for sizes outside {4, 8, 16, 32} or bad training settings.
  void validate() const;
  std::string architecture() const;  // e.g. "n1=8,n2=4"

  bool operator==(const ForecasterConfig&) const = default;
};

/// Whether the harness feeds this model standardized inputs and targets.
bool uses_standardized_data(const ForecasterConfig& config);

/// Where each selected column goes in the network input. Temporal columns map
/// to a (step, channel) slot of the sequence, oldest step first; statics are
/// numbered in mask order.
struct InputLayout {
  int steps = 0;
  int channels = kNumChannels;
  std::vector<int> slot;  // per mask column: step * channels + channel, or -1 - static_index
  int num_static = 0;

  static InputLayout make(const FeatureSpec& spec, const SelectionMask& mask);
};

nets::SequenceBatch to_sequences(const InputLayout& layout, const Matrix& X,
                                 std::span<const Eigen::Index> rows = {});

struct TrainedForecaster {
  ForecasterConfig config;
  SelectionMask mask;
  InputLayout layout;
  std::optional<Scaler> scaler;  // attached by the harness
  Vector params;
  std::vector<double> loss_curve;  // per-epoch training MSE (MLP/LSTM)

  std::size_t epochs_run() const { return loss_curve.size(); }
};

Eigen::Index parameter_count(const ForecasterConfig& config, const InputLayout& layout);

/// Trains on X (columns = mask features, scaled as uses_standardized_data says).
/// Raises NonFiniteLoss if MLP/LSTM training diverges.
TrainedForecaster fit(const ForecasterConfig& config, const Matrix& X_train, const Vector& y_train,
                      const SelectionMask& mask, const FeatureSpec& spec);

/// Raises MaskMismatch when X does not have one column per mask feature.
Vector predict(const TrainedForecaster& model, const Matrix& X);

// ---------------------------------------------------------------------------
// Architecture search

/// Every admissible architecture for `kind` (one LR entry; 16 MLP; 64 LSTM,
/// or 16 with `tie_dense` forcing h1 = h2). Training fields copy `base`.
std::vector<ForecasterConfig> architecture_grid(const ForecasterConfig& base, bool tie_dense);

struct GridSearchResult {
  ForecasterConfig best;
  std::vector<std::pair<ForecasterConfig, std::optional<double>>> scores;  // nullopt = failed
};

/// Highest score wins; ties go to fewer parameters, then the lexicographically
/// smaller architecture. Raises AllCellsFailed when no config scores.
GridSearchResult grid_search(std::span<const ForecasterConfig> grid, const InputLayout& layout,
                             const std::function<std::optional<double>(const ForecasterConfig&)>& score);

// ---------------------------------------------------------------------------
// Serialization: versioned JSON with config, mask, scaler and flat parameters.

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const TrainedForecaster& model);
TrainedForecaster deserialize_model(std::string_view text);
void save_model(const TrainedForecaster& model, const std::filesystem::path& path);
TrainedForecaster load_model(const std::filesystem::path& path);

}  // namespace epifc
