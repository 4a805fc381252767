#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqmeta {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see a torn file.
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// FNV-1a 64 of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace seqmeta
