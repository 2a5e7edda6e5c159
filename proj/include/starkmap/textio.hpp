#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace starkmap {

/// Creates parent directories; IoError when the file cannot be opened.
std::ofstream open_out(const std::filesystem::path& path);
/// Flushes and reports a failed stream as IoError.
void finish(std::ofstream& os, const std::filesystem::path& path);

/// Exact-text number parsing; ParseError (with `line`) on trailing garbage.
double parse_number(std::string_view tok, int line);
int parse_int(std::string_view tok, int line);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

/// Text after `# ` of every leading comment line of a file.
std::vector<std::string> read_header_lines(const std::filesystem::path& path);

}  // namespace starkmap
