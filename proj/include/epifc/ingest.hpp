#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epifc {

using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DD`; nullopt on anything else.
std::optional<Date> parse_iso_date(std::string_view text);
std::string format_iso_date(Date d);

enum class SeriesKind { Confirmed, Deaths, Recovered };

std::string_view to_string(SeriesKind kind);

/// Cumulative counts for one series kind, one row per country.
struct RawSeriesTable {
  SeriesKind kind = SeriesKind::Confirmed;
  std::vector<std::string> countries;
  std::vector<Date> dates;
  std::vector<std::vector<std::int64_t>> counts;  // [country][date]
};

/// The 36 country-level features, in their fixed canonical order.
const std::vector<std::string>& canonical_static_names();

/// Maps a header to its canonical static feature name using the alias table.
/// Matching ignores case and every non-alphanumeric character except `%` and
/// `+`. Returns nullopt when the header has no canonical equivalent.
std::optional<std::string> canonical_static_name(std::string_view header);

/// Maps a country name through the alias table ("US" -> "United States").
std::string canonical_country(std::string_view name);

struct StaticFeatureTable {
  std::vector<std::string> countries;
  std::vector<std::string> columns;                    // canonical names
  std::vector<std::vector<std::optional<double>>> cells;  // [country][column]
  std::vector<std::string> warnings;
};

RawSeriesTable load_timeseries_csv(const std::filesystem::path& path, SeriesKind kind);

/// With `strict` set, an unknown header raises UnmappableHeader instead of
/// being dropped with a warning.
StaticFeatureTable load_static_csv(const std::filesystem::path& path, bool strict = false);

/// Per-country derived series on a shared date axis.
///
/// `deaths_daily[0]` and `recovered_daily[0]` hold the first cumulative value
/// (the difference against an implicit zero before the series starts), so the
/// cumulative series are recovered exactly by a running sum.
struct CountrySeries {
  std::vector<double> active;
  std::vector<double> deaths_daily;
  std::vector<double> recovered_daily;
  bool operator==(const CountrySeries&) const = default;
};

struct Panel {
  std::vector<std::string> countries;  // lexicographic
  std::vector<Date> dates;
  std::vector<CountrySeries> series;            // parallel to countries
  std::vector<std::string> static_names;        // subset of canonical order
  std::vector<std::vector<double>> statics;     // [country][static]

  std::size_t num_days() const { return dates.size(); }
  std::optional<std::size_t> country_index(std::string_view name) const;

  bool operator==(const Panel&) const = default;
};

struct DateRange {
  std::optional<Date> from;
  std::optional<Date> to;
};

struct MergeReport {
  std::vector<std::string> dropped_countries;
  std::vector<std::string> dropped_features;
  std::vector<std::string> warnings;
};

/// Intersects countries across all inputs, keeps the static columns available
/// for every retained country and derives active/daily series.
Panel merge_and_clean(const RawSeriesTable& confirmed, const RawSeriesTable& deaths,
                      const RawSeriesTable& recovered,
                      const std::vector<StaticFeatureTable>& statics, const DateRange& range = {},
                      MergeReport* report = nullptr);

/// One `<country>.csv` per country (`date,active,deaths_daily,recovered_daily`)
/// plus `statics.csv`, whose row order defines the country order.
void write_panel(const Panel& panel, const std::filesystem::path& dir);
Panel read_panel(const std::filesystem::path& dir);

/// File stem used for a country's export; characters outside [A-Za-z0-9 _-]
/// become '_'.
std::string country_file_stem(std::string_view country);

/// Rebuilds cumulative tables from a panel (inverse of the derivation step).
struct RawTables {
  RawSeriesTable confirmed, deaths, recovered;
  StaticFeatureTable statics;
};
RawTables to_raw_tables(const Panel& panel);

void write_timeseries_csv(const RawSeriesTable& table, const std::filesystem::path& path);
void write_static_csv(const StaticFeatureTable& table, const std::filesystem::path& path);

}  // namespace epifc
