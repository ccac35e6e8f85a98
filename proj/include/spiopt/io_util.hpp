#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace spiopt {

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_text_file(const std::filesystem::path& path);

// Shortest text form that round-trips a double exactly.
std::string format_double(double v);

}  // namespace spiopt
