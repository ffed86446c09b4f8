#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skilltrace::io {

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Splits one delimited record. Double-quoted fields may contain the delimiter;
/// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split_record(std::string_view line, char delimiter);

/// Tab if the header line contains one, otherwise comma.
char sniff_delimiter(std::string_view header);

std::string_view trim(std::string_view s);

std::optional<double> parse_double(std::string_view s);

/// "YYYY-MM-DD HH:MM:SS[.fff]" (or with a 'T') to days since the Unix epoch, UTC.
std::optional<double> parse_datetime_days(std::string_view s);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal that round-trips the double.
std::string format_double(double value);

}  // namespace skilltrace::io
