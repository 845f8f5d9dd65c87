#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epifc/harness.hpp"
#include "epifc/ingest.hpp"

namespace epifc {

/// Run configuration. The text form is a flat `key = value` document (one
/// key per line, `#` starts a comment); see `config_keys()` for the key set.
/// Every key also has a command-line flag (`--key-name`), and the precedence
/// is flag > file > default.
struct RunConfig {
  std::filesystem::path confirmed, deaths, recovered;
  std::vector<std::filesystem::path> statics;
  std::optional<Date> date_from, date_to;
  std::vector<int> k_set;  // empty = 1..30 (or the fast set)
  std::vector<ModelKind> models{std::begin(kAllModels), std::end(kAllModels)};
  std::vector<SelectionMethod> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::uint64_t seed = 0;
  Mode mode = Mode::Paper;
  bool fast = false;
  std::filesystem::path out = "out";
  int workers = 1;
  bool group_by_country = false;
  bool surrogate_lr = false;
  bool statics_only = true;
  bool strict_headers = false;
  int repetitions = 10;
  int window = kDefaultWindow;
  int max_epochs = 600;
  int batch = 200;
  int patience = 30;
  std::string country = "Turkey";
  int trace_k = 1;

  /// Raises InvalidArgument on out-of-range values.
  void validate() const;
  SweepConfig sweep_config() const;
  /// Canonical text form; parsing it yields an equal configuration. Without
  /// `include_execution` the output directory and worker count (which never
  /// change results) are left out, giving the snapshot used in reports.
  std::string to_text(bool include_execution = true) const;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
  bool boolean;
};

const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text value; raises InvalidArgument on an unknown key
/// or a malformed value.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Applies a configuration document on top of `base`.
RunConfig parse_config_text(std::string_view text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

/// "1-5,10,15" -> {1, 2, 3, 4, 5, 10, 15}.
std::vector<int> parse_int_set(std::string_view text);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace epifc
