#pragma once

// Small CSV and number-formatting helpers shared by the library sources.

#include <charconv>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epifc::detail {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
/// Returns nullopt on an unterminated quote.
std::optional<std::vector<std::string>> split_csv_line(std::string_view line);

/// Reads every non-blank record; throws Error(MalformedCsv) with the path and
/// line on a quoting error and Error(Io) when the file cannot be opened.
std::vector<CsvRow> read_csv(const std::filesystem::path& path);

std::string csv_field(std::string_view text);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view text);

/// ASCII case-insensitive equality.
bool iequals(std::string_view a, std::string_view b);

/// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace epifc::detail
