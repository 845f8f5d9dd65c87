#include "epifc/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "epifc/error.hpp"
#include "text_io.hpp"

namespace epifc {

namespace {

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(ErrorCode::InvalidArgument,
              "config key '" + std::string(key) + "': " + std::string(why) + " ('" + std::string(value) + "')");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    auto item = detail::trim(text.substr(start, end - start));
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad(key, value, "expected an integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad(key, value, "expected true or false");
}

std::string join_paths(const std::vector<std::filesystem::path>& paths) {
  std::string out;
  for (std::size_t i = 0; i < paths.size(); ++i) out += (i ? "," : "") + paths[i].string();
  return out;
}

std::string format_int_set(const std::vector<int>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) out += (i ? "," : "") + std::to_string(ks[i]);
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"confirmed", "cumulative confirmed-cases CSV", false},
      {"deaths", "cumulative deaths CSV", false},
      {"recovered", "cumulative recoveries CSV", false},
      {"statics", "comma-separated static-feature CSVs", false},
      {"date_from", "first date kept (YYYY-MM-DD)", false},
      {"date_to", "last date kept (YYYY-MM-DD)", false},
      {"k_set", "forecasting horizons, e.g. 1-30 or 1,3,5", false},
      {"models", "comma-separated subset of LR,MLP,LSTM", false},
      {"methods", "comma-separated subset of NoFS,PCorr,RFS,Lasso", false},
      {"seed", "base seed", false},
      {"mode", "paper or strict_nested", false},
      {"fast", "fast sweep: K in {1,3,5,10,15,30}, tied LSTM sizes, 100 epochs", true},
      {"out", "output directory", false},
      {"workers", "worker threads", false},
      {"group_by_country", "split whole countries instead of rows", true},
      {"surrogate_lr", "score PCorr/RFS candidates with LR", true},
      {"statics_only", "heatmap over the static features only", true},
      {"strict_headers", "reject unknown static columns", true},
      {"repetitions", "cross-validation repetitions", false},
      {"window", "input window length in days", false},
      {"max_epochs", "training epoch cap", false},
      {"batch", "mini-batch size", false},
      {"patience", "early-stopping patience in epochs", false},
      {"country", "country for the trace command", false},
      {"trace_k", "horizon for the trace command", false},
  };
  return keys;
}

std::vector<int> parse_int_set(std::string_view text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_integer<int>("k_set", item));
      continue;
    }
    const int lo = parse_integer<int>("k_set", detail::trim(std::string_view(item).substr(0, dash)));
    const int hi = parse_integer<int>("k_set", detail::trim(std::string_view(item).substr(dash + 1)));
    if (hi < lo) bad("k_set", item, "descending range");
    for (int k = lo; k <= hi; ++k) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void set_config_value(RunConfig& c, std::string_view key, std::string_view raw) {
  const auto value = detail::trim(raw);
  auto date = [&]() {
    auto d = parse_iso_date(value);
    if (!d) bad(key, value, "expected YYYY-MM-DD");
    return *d;
  };
  if (key == "confirmed") {
    c.confirmed = std::string(value);
  } else if (key == "deaths") {
    c.deaths = std::string(value);
  } else if (key == "recovered") {
    c.recovered = std::string(value);
  } else if (key == "statics") {
    c.statics.clear();
    for (const auto& p : split_list(value)) c.statics.emplace_back(p);
  } else if (key == "date_from") {
    c.date_from = value.empty() ? std::nullopt : std::optional<Date>(date());
  } else if (key == "date_to") {
    c.date_to = value.empty() ? std::nullopt : std::optional<Date>(date());
  } else if (key == "k_set") {
    c.k_set = parse_int_set(value);
  } else if (key == "models") {
    c.models.clear();
    for (const auto& m : split_list(value)) {
      auto kind = parse_model_kind(m);
      if (!kind) bad(key, m, "unknown model");
      if (std::find(c.models.begin(), c.models.end(), *kind) == c.models.end()) c.models.push_back(*kind);
    }
    std::sort(c.models.begin(), c.models.end());
  } else if (key == "methods") {
    c.methods.clear();
    for (const auto& m : split_list(value)) {
      auto method = parse_selection_method(m);
      if (!method) bad(key, m, "unknown selection method");
      if (std::find(c.methods.begin(), c.methods.end(), *method) == c.methods.end()) c.methods.push_back(*method);
    }
    std::sort(c.methods.begin(), c.methods.end());
  } else if (key == "seed") {
    c.seed = parse_integer<std::uint64_t>(key, value);
  } else if (key == "mode") {
    if (value == "paper") {
      c.mode = Mode::Paper;
    } else if (value == "strict_nested") {
      c.mode = Mode::StrictNested;
    } else {
      bad(key, value, "expected paper or strict_nested");
    }
  } else if (key == "fast") {
    c.fast = parse_bool(key, value);
  } else if (key == "out") {
    c.out = std::string(value);
  } else if (key == "workers") {
    c.workers = parse_integer<int>(key, value);
  } else if (key == "group_by_country") {
    c.group_by_country = parse_bool(key, value);
  } else if (key == "surrogate_lr") {
    c.surrogate_lr = parse_bool(key, value);
  } else if (key == "statics_only") {
    c.statics_only = parse_bool(key, value);
  } else if (key == "strict_headers") {
    c.strict_headers = parse_bool(key, value);
  } else if (key == "repetitions") {
    c.repetitions = parse_integer<int>(key, value);
  } else if (key == "window") {
    c.window = parse_integer<int>(key, value);
  } else if (key == "max_epochs") {
    c.max_epochs = parse_integer<int>(key, value);
  } else if (key == "batch") {
    c.batch = parse_integer<int>(key, value);
  } else if (key == "patience") {
    c.patience = parse_integer<int>(key, value);
  } else if (key == "country") {
    c.country = std::string(value);
  } else if (key == "trace_k") {
    c.trace_k = parse_integer<int>(key, value);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown config key '" + std::string(key) + "'");
  }
}

void RunConfig::validate() const {
  for (int k : k_set) {
    if (k < 1 || k > 30) throw Error(ErrorCode::InvalidArgument, "k_set values must lie in 1..30");
  }
  if (models.empty()) throw Error(ErrorCode::InvalidArgument, "models must not be empty");
  if (methods.empty()) throw Error(ErrorCode::InvalidArgument, "methods must not be empty");
  if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be at least 1");
  if (repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions must be at least 1");
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "window must be at least 1");
  if (max_epochs < 1 || batch < 1 || patience < 1) {
    throw Error(ErrorCode::InvalidArgument, "max_epochs, batch and patience must be positive");
  }
  if (trace_k < 1 || trace_k > 30) throw Error(ErrorCode::InvalidArgument, "trace_k must lie in 1..30");
  if (date_from && date_to && *date_to < *date_from) {
    throw Error(ErrorCode::InvalidArgument, "date_to precedes date_from");
  }
}

SweepConfig RunConfig::sweep_config() const {
  SweepConfig s;
  s.models = models;
  s.methods = methods;
  s.horizons = k_set;
  s.cv.repetitions = repetitions;
  s.cv.seed = seed;
  s.cv.group_by_country = group_by_country;
  s.mode = mode;
  s.fast = fast;
  s.surrogate_lr = surrogate_lr;
  s.workers = workers;
  s.max_epochs = max_epochs;
  s.batch = batch;
  s.patience = patience;
  return s;
}

std::string RunConfig::to_text(bool include_execution) const {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::string model_list, method_list;
  for (auto m : models) model_list += (model_list.empty() ? "" : ",") + std::string(to_string(m));
  for (auto m : methods) method_list += (method_list.empty() ? "" : ",") + std::string(to_string(m));
  os << "confirmed = " << confirmed.string() << "\n"
     << "deaths = " << deaths.string() << "\n"
     << "recovered = " << recovered.string() << "\n"
     << "statics = " << join_paths(statics) << "\n"
     << "date_from = " << (date_from ? format_iso_date(*date_from) : "") << "\n"
     << "date_to = " << (date_to ? format_iso_date(*date_to) : "") << "\n"
     << "k_set = " << format_int_set(k_set) << "\n"
     << "models = " << model_list << "\n"
     << "methods = " << method_list << "\n"
     << "seed = " << seed << "\n"
     << "mode = " << to_string(mode) << "\n"
     << "fast = " << b(fast) << "\n";
  if (include_execution) os << "out = " << out.string() << "\n" << "workers = " << workers << "\n";
  os
     << "group_by_country = " << b(group_by_country) << "\n"
     << "surrogate_lr = " << b(surrogate_lr) << "\n"
     << "statics_only = " << b(statics_only) << "\n"
     << "strict_headers = " << b(strict_headers) << "\n"
     << "repetitions = " << repetitions << "\n"
     << "window = " << window << "\n"
     << "max_epochs = " << max_epochs << "\n"
     << "batch = " << batch << "\n"
     << "patience = " << patience << "\n"
     << "country = " << country << "\n"
     << "trace_k = " << trace_k << "\n";
  return os.str();
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  return parse_config_text(detail::read_text_file(path), std::move(base));
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace epifc
