#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace thinkstop {

// Whole-file read. Throws DataError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partial file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace thinkstop
