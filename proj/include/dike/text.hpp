#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dike::text {

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string trim(std::string_view s);
// Collapses every whitespace run to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);
// Writes to a sibling temp file and renames over the target, so readers see
// either the old or the new content.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace dike::text
