#include "epifc/samples.hpp"

#include <cmath>

#include "epifc/error.hpp"
#include "text_io.hpp"

namespace epifc {

std::string_view to_string(Channel channel) {
  switch (channel) {
    case Channel::Active: return "active";
    case Channel::DeathsDaily: return "deaths_daily";
    case Channel::RecoveredDaily: return "recovered_daily";
  }
  return "unknown";
}

std::string FeatureDescriptor::name() const {
  if (!temporal) return static_name;
  return std::string(to_string(channel)) + "_lag" + std::to_string(lag);
}

FeatureSpec FeatureSpec::make(int window, const std::vector<std::string>& static_names) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "window must be >= 1");
  FeatureSpec spec;
  spec.window = window;
  for (int c = 0; c < kNumChannels; ++c) {
    for (int lag = 0; lag < window; ++lag) {
      spec.features.push_back({true, static_cast<Channel>(c), lag, {}});
    }
  }
  for (const auto& name : static_names) spec.features.push_back({false, Channel::Active, 0, name});
  return spec;
}

std::vector<std::string> FeatureSpec::names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name());
  return out;
}

const Vector& SampleSet::target(int k) const {
  if (k < 1 || k > max_horizon) {
    throw Error(ErrorCode::InvalidArgument, "horizon " + std::to_string(k) + " outside 1.." +
                                                std::to_string(max_horizon));
  }
  return targets[static_cast<std::size_t>(k - 1)];
}

SampleSet SampleSet::subset(std::span<const std::size_t> rows) const {
  SampleSet out;
  out.spec = spec;
  out.max_horizon = max_horizon;
  out.countries = countries;
  std::vector<std::size_t> all(X.cols());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  out.X = gather(X, rows, all);
  for (const auto& y : targets) out.targets.push_back(gather(y, rows));
  for (auto r : rows) out.origins.push_back(origins[r]);
  return out;
}

Vector feature_row(const Panel& panel, const FeatureSpec& spec, std::size_t country,
                   std::size_t anchor) {
  const auto& s = panel.series[country];
  Vector row(static_cast<Eigen::Index>(spec.size()));
  const std::vector<double>* channels[kNumChannels] = {&s.active, &s.deaths_daily,
                                                       &s.recovered_daily};
  Eigen::Index j = 0;
  for (int c = 0; c < kNumChannels; ++c) {
    for (int lag = 0; lag < spec.window; ++lag) {
      row[j++] = (*channels[c])[anchor - static_cast<std::size_t>(lag)];
    }
  }
  for (double v : panel.statics[country]) row[j++] = v;
  return row;
}

SampleSet build_samples(const Panel& panel, int max_horizon, int window, BuildReport* report) {
  if (max_horizon < 1) throw Error(ErrorCode::InvalidArgument, "max_horizon must be >= 1");
  SampleSet out;
  out.spec = FeatureSpec::make(window, panel.static_names);
  out.max_horizon = max_horizon;
  out.countries = panel.countries;

  const auto T = static_cast<long>(panel.num_days());
  const long first = window - 1;
  const long last = T - 1 - max_horizon;
  std::size_t L = 0;
  for (std::size_t c = 0; c < panel.countries.size(); ++c) {
    if (last >= first) L += static_cast<std::size_t>(last - first + 1);
    else if (report) report->dropped_countries.push_back(panel.countries[c]);
  }
  if (L == 0) {
    throw Error(ErrorCode::SeriesTooShort,
                "every country needs at least " + std::to_string(window + max_horizon) +
                    " days; have " + std::to_string(T));
  }

  out.X.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(out.spec.size()));
  out.targets.assign(static_cast<std::size_t>(max_horizon), Vector(static_cast<Eigen::Index>(L)));
  out.origins.reserve(L);
  Eigen::Index s = 0;
  for (std::size_t c = 0; c < panel.countries.size(); ++c) {
    for (long t = first; t <= last; ++t, ++s) {
      const auto anchor = static_cast<std::size_t>(t);
      out.X.row(s) = feature_row(panel, out.spec, c, anchor).transpose();
      for (int k = 1; k <= max_horizon; ++k) {
        out.targets[static_cast<std::size_t>(k - 1)][s] =
            panel.series[c].active[anchor + static_cast<std::size_t>(k)];
      }
      out.origins.push_back({c, anchor, panel.dates[anchor]});
    }
  }
  return out;
}

void write_samples_csv(const SampleSet& samples, const std::filesystem::path& path) {
  std::string body = "country,anchor_date";
  for (std::size_t j = 0; j < samples.spec.size(); ++j) body += ",f" + std::to_string(j);
  for (int k = 1; k <= samples.max_horizon; ++k) body += ",y" + std::to_string(k);
  body += "\n";
  for (std::size_t s = 0; s < samples.rows(); ++s) {
    const auto& o = samples.origins[s];
    body += detail::csv_field(samples.countries[o.country]) + "," + format_iso_date(o.anchor_date);
    const auto row = static_cast<Eigen::Index>(s);
    for (Eigen::Index j = 0; j < samples.X.cols(); ++j) {
      body += "," + detail::format_double(samples.X(row, j));
    }
    for (const auto& y : samples.targets) body += "," + detail::format_double(y[row]);
    body += "\n";
  }
  detail::write_text_file(path, body);
}

namespace {

std::pair<double, double> mean_sd(const auto& column, std::span<const std::size_t> rows) {
  const auto n = static_cast<double>(rows.size());
  const double first = column[static_cast<Eigen::Index>(rows[0])];
  bool constant = true;
  double mean = 0.0;
  for (auto r : rows) {
    const double v = column[static_cast<Eigen::Index>(r)];
    constant = constant && v == first;
    mean += v;
  }
  // Summation rounding would leave a constant column with a tiny spurious spread.
  if (constant) return {first, 1.0};
  mean /= n;
  double ss = 0.0;
  for (auto r : rows) {
    const double d = column[static_cast<Eigen::Index>(r)] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, sd > 0.0 ? sd : 1.0};
}

}  // namespace

Scaler fit_scaler(const SampleSet& samples, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training rows");
  Scaler sc;
  const auto n = samples.X.cols();
  sc.feature_mean.resize(n);
  sc.feature_sd.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    auto [m, sd] = mean_sd(samples.X.col(j), train_rows);
    sc.feature_mean[j] = m;
    sc.feature_sd[j] = sd;
  }
  for (const auto& y : samples.targets) {
    auto [m, sd] = mean_sd(y, train_rows);
    sc.target_mean.push_back(m);
    sc.target_sd.push_back(sd);
  }
  return sc;
}

Matrix Scaler::transform(const Matrix& X) const {
  if (X.cols() != feature_mean.size()) {
    throw Error(ErrorCode::ShapeMismatch, "scaler expects " + std::to_string(feature_mean.size()) +
                                              " columns, got " + std::to_string(X.cols()));
  }
  return (X.rowwise() - feature_mean.transpose()).array().rowwise() /
         feature_sd.transpose().array();
}

Matrix Scaler::transform(const Matrix& X, std::span<const std::size_t> columns) const {
  if (static_cast<std::size_t>(X.cols()) != columns.size()) {
    throw Error(ErrorCode::ShapeMismatch, "column list does not match matrix width");
  }
  Matrix Z(X.rows(), X.cols());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(columns[j]);
    if (c >= feature_mean.size()) throw Error(ErrorCode::ShapeMismatch, "feature index out of range");
    Z.col(static_cast<Eigen::Index>(j)) =
        (X.col(static_cast<Eigen::Index>(j)).array() - feature_mean[c]) / feature_sd[c];
  }
  return Z;
}

Vector Scaler::transform_target(int k, const Vector& y) const {
  const auto i = static_cast<std::size_t>(k - 1);
  if (k < 1 || i >= target_mean.size()) throw Error(ErrorCode::ShapeMismatch, "horizon out of range");
  return (y.array() - target_mean[i]) / target_sd[i];
}

Vector Scaler::inverse_target(int k, const Vector& z) const {
  const auto i = static_cast<std::size_t>(k - 1);
  if (k < 1 || i >= target_mean.size()) throw Error(ErrorCode::ShapeMismatch, "horizon out of range");
  return z.array() * target_sd[i] + target_mean[i];
}

Matrix transform(const SampleSet& samples, const Scaler& scaler, std::span<const std::size_t> rows) {
  std::vector<std::size_t> all(static_cast<std::size_t>(samples.X.cols()));
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  return scaler.transform(gather(samples.X, rows, all));
}

Matrix gather(const Matrix& X, std::span<const std::size_t> rows, std::span<const std::size_t> columns) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(columns[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          X(static_cast<Eigen::Index>(rows[i]), c);
    }
  }
  return out;
}

Vector gather(const Vector& y, std::span<const std::size_t> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
  }
  return out;
}

}  // namespace epifc
