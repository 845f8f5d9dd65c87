#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "epifc/ingest.hpp"

namespace epifc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Channel { Active = 0, DeathsDaily = 1, RecoveredDaily = 2 };
inline constexpr int kNumChannels = 3;
inline constexpr int kDefaultWindow = 14;

std::string_view to_string(Channel channel);

struct FeatureDescriptor {
  bool temporal = true;
  Channel channel = Channel::Active;  // temporal only
  int lag = 0;                        // temporal only; value at day t - lag
  std::string static_name;            // static only

  std::string name() const;
};

/// Fixed feature layout: `window` lags of each channel (channel-major, lag
/// ascending) followed by the panel's static features in canonical order.
/// With the default window and all 36 statics this is 42 + 36 = 78 features.
struct FeatureSpec {
  int window = kDefaultWindow;
  std::vector<FeatureDescriptor> features;

  static FeatureSpec make(int window, const std::vector<std::string>& static_names);

  std::size_t size() const { return features.size(); }
  std::size_t num_temporal() const { return static_cast<std::size_t>(kNumChannels * window); }
  std::size_t temporal_index(Channel channel, int lag) const {
    return static_cast<std::size_t>(static_cast<int>(channel) * window + lag);
  }
  std::vector<std::string> names() const;
};

struct RowOrigin {
  std::size_t country = 0;  // index into SampleSet::countries
  std::size_t anchor = 0;   // index into the panel date axis
  Date anchor_date{};
};

/// Pooled design matrix with one target vector per horizon 1..max_horizon.
struct SampleSet {
  FeatureSpec spec;
  int max_horizon = 1;
  Matrix X;                          // L x n
  std::vector<Vector> targets;       // targets[k-1][s] = active[t_s + k]
  std::vector<RowOrigin> origins;    // per row
  std::vector<std::string> countries;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  const Vector& target(int k) const;

  /// Copy restricted to `rows`, in the given order.
  SampleSet subset(std::span<const std::size_t> rows) const;
};

struct BuildReport {
  std::vector<std::string> dropped_countries;
};

/// Anchors t range over [window-1, T-1-max_horizon] per country; rows are
/// ordered by country then anchor. Countries that are too short are dropped
/// and SeriesTooShort is raised only if every country drops.
SampleSet build_samples(const Panel& panel, int max_horizon, int window = kDefaultWindow,
                        BuildReport* report = nullptr);

/// Feature row for one (country, anchor) straight from the panel.
Vector feature_row(const Panel& panel, const FeatureSpec& spec, std::size_t country,
                   std::size_t anchor);

/// Columnar export: `country,anchor_date,f0..f{n-1},y1..yK`.
void write_samples_csv(const SampleSet& samples, const std::filesystem::path& path);

/// Standardization statistics fitted on training rows only. Standard
/// deviations use the n-1 denominator; a column with zero spread (or a single
/// training row) gets sd = 1 so it maps to 0.
struct Scaler {
  Vector feature_mean, feature_sd;
  std::vector<double> target_mean, target_sd;  // per horizon, index k-1

  Matrix transform(const Matrix& X) const;
  /// Same, for a matrix whose columns are the features listed in `columns`.
  Matrix transform(const Matrix& X, std::span<const std::size_t> columns) const;
  Vector transform_target(int k, const Vector& y) const;
  Vector inverse_target(int k, const Vector& z) const;
};

Scaler fit_scaler(const SampleSet& samples, std::span<const std::size_t> train_rows);

/// Standardized rows of `samples` (all features).
Matrix transform(const SampleSet& samples, const Scaler& scaler, std::span<const std::size_t> rows);

/// Gathers `rows` x `columns` from a matrix.
Matrix gather(const Matrix& X, std::span<const std::size_t> rows, std::span<const std::size_t> columns);
Vector gather(const Vector& y, std::span<const std::size_t> rows);

}  // namespace epifc
