#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace iterforge {

// Whole-file helpers. All throw Error(kIo) on failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Writes to a sibling temp file then renames over |path|, so readers see
// either the old or the new content.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Recursive copy; |to| is created if missing. Regular files only.
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

std::string zero_padded(std::uint64_t value, int width);

}  // namespace iterforge
