#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace miwv {

// Shortest round-trip decimal for a finite double, laid out like Python's
// repr(): fixed notation for decimal exponents in [-4, 16), otherwise
// d.ddde±XX. Integral values keep a trailing ".0".
std::string format_double(double value);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string_view trim(std::string_view text);

}  // namespace miwv
