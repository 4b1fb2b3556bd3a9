#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace logrep::io {

/// Whole file as bytes; IoError if it cannot be opened or read.
std::string read_file(const std::filesystem::path& path);

/// Writes `bytes` to a temporary sibling and renames it over `path`, so a
/// reader never sees a half-written artifact. Creates parent directories.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace logrep::io
