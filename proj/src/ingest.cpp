#include "epifc/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "epifc/error.hpp"
#include "text_io.hpp"

namespace epifc {

namespace fs = std::filesystem;
using namespace std::chrono;

std::optional<Date> parse_iso_date(std::string_view text) {
  text = detail::trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  auto y = num(0, 4), m = num(5, 2), d = num(8, 2);
  if (!y || !m || !d) return std::nullopt;
  const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*m)},
                           day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

std::string format_iso_date(Date d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string_view to_string(SeriesKind kind) {
  switch (kind) {
    case SeriesKind::Confirmed: return "confirmed";
    case SeriesKind::Deaths: return "deaths";
    case SeriesKind::Recovered: return "recovered";
  }
  return "unknown";
}

const std::vector<std::string>& canonical_static_names() {
  static const std::vector<std::string> names = {
      "latitude",          "longitude",
      "population",        "Density",
      "Urban-Pop",         "Fertility",
      "Median-Age",        "Avg-Temperature",
      "Avg-Humidity",      "Male-Birth",
      "MF",                "MF-14",
      "MF-25",             "MF-54",
      "MF-64",             "MF-65+",
      "Smokers",           "Bed-Capacity",
      "% Female-Lung",     "% Male-Lung",
      "% Lung",            "Pneumonia-Death-100K",
      "H1N1-Underestimate", "H1N1-Confirmed",
      "H1N1-Deaths",       "Annual-Precipitation",
      "Property-Affordability", "Health-Care",
      "GDP-2019",          "Health-Expenses",
      "Health-Expenses-1M", "Gathering-Limit",
      "Nonessential-Close-Days", "Gathering-Limit-Days",
      "School-Close-Days", "PublicPlace-Close-Days",
  };
  return names;
}

namespace {

std::string header_key(std::string_view text) {
  std::string key;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) key.push_back(static_cast<char>(std::tolower(u)));
    else if (c == '%' || c == '+') key.push_back(c);
  }
  return key;
}

// Header spellings seen in the public country-info datasets, keyed by
// header_key() of the source column.
const std::map<std::string, std::string>& static_aliases() {
  static const std::map<std::string, std::string> table = [] {
    std::map<std::string, std::string> t;
    for (const auto& name : canonical_static_names()) t[header_key(name)] = name;
    const std::pair<const char*, const char*> extra[] = {
        {"lat", "latitude"},
        {"long", "longitude"},
        {"lng", "longitude"},
        {"lon", "longitude"},
        {"pop", "population"},
        {"urbanpopulation", "Urban-Pop"},
        {"avgtemp", "Avg-Temperature"},
        {"averagetemperature", "Avg-Temperature"},
        {"averagehumidity", "Avg-Humidity"},
        {"sex0", "Male-Birth"},
        {"sexratio", "MF"},
        {"sex14", "MF-14"},
        {"sex25", "MF-25"},
        {"sex54", "MF-54"},
        {"sex64", "MF-64"},
        {"sex65plus", "MF-65+"},
        {"mf65plus", "MF-65+"},
        {"hospibed", "Bed-Capacity"},
        {"hospitalbeds", "Bed-Capacity"},
        {"femalelung", "% Female-Lung"},
        {"malelung", "% Male-Lung"},
        {"lung", "% Lung"},
        {"gdp", "GDP-2019"},
        {"healthexp", "Health-Expenses"},
        {"healthperpop", "Health-Expenses-1M"},
        {"gathering", "Gathering-Limit"},
        {"healthcareindex", "Health-Care"},
        {"precipitation", "Annual-Precipitation"},
    };
    for (const auto& [from, to] : extra) t[from] = to;
    return t;
  }();
  return table;
}

}  // namespace

std::optional<std::string> canonical_static_name(std::string_view header) {
  const auto& table = static_aliases();
  if (auto it = table.find(header_key(header)); it != table.end()) return it->second;
  return std::nullopt;
}

std::string canonical_country(std::string_view name) {
  static const std::map<std::string, std::string, std::less<>> aliases = {
      {"US", "United States"},
      {"USA", "United States"},
      {"United States of America", "United States"},
      {"Korea, South", "South Korea"},
      {"Republic of Korea", "South Korea"},
      {"Czechia", "Czech Republic"},
      {"Taiwan*", "Taiwan"},
      {"Burma", "Myanmar"},
      {"UK", "United Kingdom"},
      {"Russian Federation", "Russia"},
      {"Iran (Islamic Republic of)", "Iran"},
      {"Viet Nam", "Vietnam"},
      {"Mainland China", "China"},
      {"North Macedonia", "Macedonia"},
      {"Cote d'Ivoire", "Ivory Coast"},
      {"Congo (Kinshasa)", "Democratic Republic of the Congo"},
      {"Congo (Brazzaville)", "Republic of the Congo"},
  };
  const auto trimmed = detail::trim(name);
  if (auto it = aliases.find(trimmed); it != aliases.end()) return it->second;
  return std::string(trimmed);
}

namespace {

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

bool is_country_header(std::string_view h) {
  const auto key = header_key(h);
  return key == "country" || key == "countryregion";
}

}  // namespace

RawSeriesTable load_timeseries_csv(const fs::path& path, SeriesKind kind) {
  const auto rows = detail::read_csv(path);
  if (rows.empty()) throw Error(ErrorCode::MalformedCsv, path.string() + ": empty file");
  const auto& header = rows.front();
  if (header.fields.size() < 2 || !is_country_header(header.fields[0])) {
    throw Error(ErrorCode::MalformedCsv,
                where(path, header.line) + ": expected `Country` followed by date columns");
  }

  RawSeriesTable table;
  table.kind = kind;
  for (std::size_t c = 1; c < header.fields.size(); ++c) {
    auto d = parse_iso_date(header.fields[c]);
    if (!d) {
      throw Error(ErrorCode::MalformedCsv,
                  where(path, header.line) + ": bad date header '" + header.fields[c] + "'");
    }
    if (!table.dates.empty()) {
      const auto step = (*d - table.dates.back()).count();
      if (step <= 0) {
        throw Error(ErrorCode::MalformedCsv,
                    where(path, header.line) + ": dates not increasing at " + header.fields[c]);
      }
      if (step > 1) {
        throw Error(ErrorCode::GapInDates, where(path, header.line) + ": missing day(s) before " +
                                               header.fields[c]);
      }
    }
    table.dates.push_back(*d);
  }

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.fields.size()) {
      throw Error(ErrorCode::MalformedCsv,
                  where(path, row.line) + ": expected " + std::to_string(header.fields.size()) +
                      " fields, got " + std::to_string(row.fields.size()));
    }
    table.countries.emplace_back(detail::trim(row.fields[0]));
    std::vector<std::int64_t> values;
    values.reserve(table.dates.size());
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      const auto cell = detail::trim(row.fields[c]);
      // ASCII '-' or U+2212 MINUS SIGN
      if (cell.starts_with('-') || cell.starts_with("\xE2\x88\x92")) {
        throw Error(ErrorCode::NegativeCumulative,
                    where(path, row.line) + ": negative count '" + std::string(cell) + "'");
      }
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error(ErrorCode::MalformedCsv,
                    where(path, row.line) + ": bad count '" + std::string(cell) + "'");
      }
      values.push_back(v);
    }
    table.counts.push_back(std::move(values));
  }
  return table;
}

StaticFeatureTable load_static_csv(const fs::path& path, bool strict) {
  const auto rows = detail::read_csv(path);
  if (rows.empty()) throw Error(ErrorCode::MalformedCsv, path.string() + ": empty file");
  const auto& header = rows.front();
  if (header.fields.empty() || !is_country_header(header.fields[0])) {
    throw Error(ErrorCode::MalformedCsv, where(path, header.line) + ": expected `Country` column");
  }

  StaticFeatureTable table;
  std::vector<std::optional<std::size_t>> source_to_column(header.fields.size());
  for (std::size_t c = 1; c < header.fields.size(); ++c) {
    auto name = canonical_static_name(header.fields[c]);
    if (!name) {
      if (strict) {
        throw Error(ErrorCode::UnmappableHeader,
                    where(path, header.line) + ": unknown column '" + header.fields[c] + "'");
      }
      table.warnings.push_back(path.string() + ": dropped unknown column '" + header.fields[c] + "'");
      continue;
    }
    if (std::find(table.columns.begin(), table.columns.end(), *name) != table.columns.end()) {
      table.warnings.push_back(path.string() + ": duplicate column for '" + *name + "' ignored");
      continue;
    }
    source_to_column[c] = table.columns.size();
    table.columns.push_back(*name);
  }

  const auto h1n1 = std::find(table.columns.begin(), table.columns.end(), "H1N1-Underestimate");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.fields.size()) {
      throw Error(ErrorCode::MalformedCsv, where(path, row.line) + ": field count mismatch");
    }
    table.countries.emplace_back(detail::trim(row.fields[0]));
    std::vector<std::optional<double>> cells(table.columns.size());
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      if (!source_to_column[c]) continue;
      const auto text = detail::trim(row.fields[c]);
      if (text.empty() || text == "NA" || text == "nan" || text == "NaN") continue;
      auto v = detail::parse_double(text);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedCsv,
                    where(path, row.line) + ": bad number '" + std::string(text) + "'");
      }
      cells[*source_to_column[c]] = *v;
    }
    if (h1n1 != table.columns.end()) {
      const auto& flag = cells[static_cast<std::size_t>(h1n1 - table.columns.begin())];
      if (flag && *flag != 0.0 && *flag != 1.0) {
        throw Error(ErrorCode::MalformedCsv, where(path, row.line) + ": H1N1-Underestimate not 0/1");
      }
    }
    table.cells.push_back(std::move(cells));
  }
  return table;
}

std::optional<std::size_t> Panel::country_index(std::string_view name) const {
  auto it = std::find(countries.begin(), countries.end(), name);
  if (it == countries.end()) return std::nullopt;
  return static_cast<std::size_t>(it - countries.begin());
}

namespace {

struct ClippedSeries {
  std::vector<Date> dates;
  std::map<std::string, std::vector<std::int64_t>> rows;
};

ClippedSeries clip(const RawSeriesTable& t, const DateRange& range) {
  if (t.countries.empty() || t.dates.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "empty " + std::string(to_string(t.kind)) + " series table");
  }
  std::size_t lo = 0, hi = t.dates.size();
  while (lo < hi && range.from && t.dates[lo] < *range.from) ++lo;
  while (hi > lo && range.to && t.dates[hi - 1] > *range.to) --hi;
  ClippedSeries out;
  out.dates.assign(t.dates.begin() + static_cast<std::ptrdiff_t>(lo),
                   t.dates.begin() + static_cast<std::ptrdiff_t>(hi));
  for (std::size_t r = 0; r < t.countries.size(); ++r) {
    auto name = canonical_country(t.countries[r]);
    if (out.rows.contains(name)) {
      throw Error(ErrorCode::MalformedCsv, "duplicate country '" + name + "' in " +
                                               std::string(to_string(t.kind)) + " series");
    }
    out.rows[name].assign(t.counts[r].begin() + static_cast<std::ptrdiff_t>(lo),
                          t.counts[r].begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

std::vector<double> daily_from_cumulative(const std::vector<std::int64_t>& cum,
                                          const std::string& label,
                                          std::vector<std::string>& warnings) {
  std::vector<double> out(cum.size());
  for (std::size_t t = 0; t < cum.size(); ++t) {
    const std::int64_t prev = t == 0 ? 0 : cum[t - 1];
    std::int64_t diff = cum[t] - prev;
    if (diff < 0) {
      warnings.push_back(label + ": negative daily difference " + std::to_string(diff) +
                         " at index " + std::to_string(t) + " clamped to 0");
      diff = 0;
    }
    out[t] = static_cast<double>(diff);
  }
  return out;
}

}  // namespace

Panel merge_and_clean(const RawSeriesTable& confirmed, const RawSeriesTable& deaths,
                      const RawSeriesTable& recovered,
                      const std::vector<StaticFeatureTable>& statics, const DateRange& range,
                      MergeReport* report) {
  MergeReport local;
  MergeReport& rep = report ? *report : local;

  const auto c = clip(confirmed, range);
  const auto d = clip(deaths, range);
  const auto r = clip(recovered, range);
  if (c.dates != d.dates || c.dates != r.dates) {
    throw Error(ErrorCode::SeriesLengthMismatch,
                "confirmed/deaths/recovered tables do not share a date axis");
  }
  if (c.dates.empty()) throw Error(ErrorCode::SeriesLengthMismatch, "date range selects no days");

  // Canonicalized static tables, country -> row.
  std::vector<std::map<std::string, std::size_t>> static_rows(statics.size());
  for (std::size_t s = 0; s < statics.size(); ++s) {
    for (std::size_t i = 0; i < statics[s].countries.size(); ++i) {
      static_rows[s][canonical_country(statics[s].countries[i])] = i;
    }
    rep.warnings.insert(rep.warnings.end(), statics[s].warnings.begin(), statics[s].warnings.end());
  }

  std::set<std::string> all;
  for (const auto* src : {&c, &d, &r}) {
    for (const auto& [name, _] : src->rows) all.insert(name);
  }
  for (const auto& m : static_rows) {
    for (const auto& [name, _] : m) all.insert(name);
  }

  Panel panel;
  panel.dates = c.dates;
  for (const auto& name : all) {
    bool keep = d.rows.contains(name) && r.rows.contains(name) && c.rows.contains(name);
    for (const auto& m : static_rows) keep = keep && m.contains(name);
    if (keep) panel.countries.push_back(name);
    else rep.dropped_countries.push_back(name);
  }
  if (panel.countries.empty()) {
    throw Error(ErrorCode::EmptyIntersection, "no country is present in every input");
  }

  // A static column survives when every retained country has a value in some table.
  auto lookup = [&](const std::string& country, const std::string& column) -> std::optional<double> {
    for (std::size_t s = 0; s < statics.size(); ++s) {
      const auto& tab = statics[s];
      auto col = std::find(tab.columns.begin(), tab.columns.end(), column);
      if (col == tab.columns.end()) continue;
      const auto& cell = tab.cells[static_rows[s].at(country)][static_cast<std::size_t>(col - tab.columns.begin())];
      if (cell) return cell;
    }
    return std::nullopt;
  };
  std::set<std::string> offered;
  for (const auto& tab : statics) offered.insert(tab.columns.begin(), tab.columns.end());
  std::vector<std::vector<double>> static_values(panel.countries.size());
  for (const auto& column : canonical_static_names()) {
    if (!offered.contains(column)) continue;
    std::vector<double> values;
    for (const auto& country : panel.countries) {
      auto v = lookup(country, column);
      if (!v) break;
      values.push_back(*v);
    }
    if (values.size() != panel.countries.size()) {
      rep.dropped_features.push_back(column);
      continue;
    }
    panel.static_names.push_back(column);
    for (std::size_t i = 0; i < values.size(); ++i) static_values[i].push_back(values[i]);
  }
  panel.statics = std::move(static_values);

  for (const auto& name : panel.countries) {
    const auto& cc = c.rows.at(name);
    const auto& dc = d.rows.at(name);
    const auto& rc = r.rows.at(name);
    CountrySeries s;
    s.active.resize(cc.size());
    for (std::size_t t = 0; t < cc.size(); ++t) {
      s.active[t] = static_cast<double>(cc[t] - dc[t] - rc[t]);
    }
    if (std::any_of(s.active.begin(), s.active.end(), [](double a) { return a < 0; })) {
      rep.warnings.push_back(name + ": negative active count (deaths + recoveries exceed confirmed)");
    }
    s.deaths_daily = daily_from_cumulative(dc, name + " deaths", rep.warnings);
    s.recovered_daily = daily_from_cumulative(rc, name + " recovered", rep.warnings);
    panel.series.push_back(std::move(s));
  }
  return panel;
}

std::string country_file_stem(std::string_view country) {
  std::string out;
  for (char ch : country) {
    const auto u = static_cast<unsigned char>(ch);
    out.push_back(std::isalnum(u) || ch == ' ' || ch == '_' || ch == '-' ? ch : '_');
  }
  return out;
}

void write_panel(const Panel& panel, const fs::path& dir) {
  fs::create_directories(dir);
  std::string statics = "Country";
  for (const auto& name : panel.static_names) statics += "," + detail::csv_field(name);
  statics += "\n";
  for (std::size_t i = 0; i < panel.countries.size(); ++i) {
    statics += detail::csv_field(panel.countries[i]);
    for (double v : panel.statics[i]) statics += "," + detail::format_double(v);
    statics += "\n";

    std::string body = "date,active,deaths_daily,recovered_daily\n";
    const auto& s = panel.series[i];
    for (std::size_t t = 0; t < panel.dates.size(); ++t) {
      body += format_iso_date(panel.dates[t]) + "," + detail::format_double(s.active[t]) + "," +
              detail::format_double(s.deaths_daily[t]) + "," +
              detail::format_double(s.recovered_daily[t]) + "\n";
    }
    detail::write_text_file(dir / (country_file_stem(panel.countries[i]) + ".csv"), body);
  }
  detail::write_text_file(dir / "statics.csv", statics);
}

Panel read_panel(const fs::path& dir) {
  const auto statics_path = dir / "statics.csv";
  const auto rows = detail::read_csv(statics_path);
  if (rows.empty() || rows.front().fields.empty()) {
    throw Error(ErrorCode::MalformedCsv, statics_path.string() + ": missing header");
  }
  Panel panel;
  panel.static_names.assign(rows.front().fields.begin() + 1, rows.front().fields.end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != rows.front().fields.size()) {
      throw Error(ErrorCode::MalformedCsv, where(statics_path, row.line) + ": field count mismatch");
    }
    panel.countries.push_back(row.fields[0]);
    std::vector<double> values;
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      auto v = detail::parse_double(row.fields[c]);
      if (!v) throw Error(ErrorCode::MalformedCsv, where(statics_path, row.line) + ": bad number");
      values.push_back(*v);
    }
    panel.statics.push_back(std::move(values));
  }

  for (std::size_t i = 0; i < panel.countries.size(); ++i) {
    const auto path = dir / (country_file_stem(panel.countries[i]) + ".csv");
    const auto series_rows = detail::read_csv(path);
    CountrySeries s;
    std::vector<Date> dates;
    for (std::size_t r = 1; r < series_rows.size(); ++r) {
      const auto& f = series_rows[r].fields;
      auto date = f.size() == 4 ? parse_iso_date(f[0]) : std::nullopt;
      auto a = f.size() == 4 ? detail::parse_double(f[1]) : std::nullopt;
      auto dd = f.size() == 4 ? detail::parse_double(f[2]) : std::nullopt;
      auto rd = f.size() == 4 ? detail::parse_double(f[3]) : std::nullopt;
      if (!date || !a || !dd || !rd) {
        throw Error(ErrorCode::MalformedCsv, where(path, series_rows[r].line) + ": bad panel row");
      }
      dates.push_back(*date);
      s.active.push_back(*a);
      s.deaths_daily.push_back(*dd);
      s.recovered_daily.push_back(*rd);
    }
    if (i == 0) panel.dates = dates;
    else if (dates != panel.dates) {
      throw Error(ErrorCode::SeriesLengthMismatch, path.string() + ": date axis differs");
    }
    panel.series.push_back(std::move(s));
  }
  return panel;
}

RawTables to_raw_tables(const Panel& panel) {
  RawTables out;
  out.confirmed.kind = SeriesKind::Confirmed;
  out.deaths.kind = SeriesKind::Deaths;
  out.recovered.kind = SeriesKind::Recovered;
  for (auto* t : {&out.confirmed, &out.deaths, &out.recovered}) {
    t->countries = panel.countries;
    t->dates = panel.dates;
  }
  for (const auto& s : panel.series) {
    std::vector<std::int64_t> c(s.active.size()), d(s.active.size()), r(s.active.size());
    std::int64_t dcum = 0, rcum = 0;
    for (std::size_t t = 0; t < s.active.size(); ++t) {
      dcum += std::llround(s.deaths_daily[t]);
      rcum += std::llround(s.recovered_daily[t]);
      d[t] = dcum;
      r[t] = rcum;
      c[t] = std::llround(s.active[t]) + dcum + rcum;
    }
    out.confirmed.counts.push_back(std::move(c));
    out.deaths.counts.push_back(std::move(d));
    out.recovered.counts.push_back(std::move(r));
  }
  out.statics.countries = panel.countries;
  out.statics.columns = panel.static_names;
  for (const auto& row : panel.statics) {
    out.statics.cells.emplace_back(row.begin(), row.end());
  }
  return out;
}

void write_timeseries_csv(const RawSeriesTable& table, const fs::path& path) {
  std::string body = "Country";
  for (auto d : table.dates) body += "," + format_iso_date(d);
  body += "\n";
  for (std::size_t i = 0; i < table.countries.size(); ++i) {
    body += detail::csv_field(table.countries[i]);
    for (auto v : table.counts[i]) body += "," + std::to_string(v);
    body += "\n";
  }
  detail::write_text_file(path, body);
}

void write_static_csv(const StaticFeatureTable& table, const fs::path& path) {
  std::string body = "Country";
  for (const auto& c : table.columns) body += "," + detail::csv_field(c);
  body += "\n";
  for (std::size_t i = 0; i < table.countries.size(); ++i) {
    body += detail::csv_field(table.countries[i]);
    for (const auto& cell : table.cells[i]) body += "," + (cell ? detail::format_double(*cell) : "");
    body += "\n";
  }
  detail::write_text_file(path, body);
}

}  // namespace epifc
