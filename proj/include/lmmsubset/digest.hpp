#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace lmmsubset {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Write to `path` via a sibling temp file and rename, so readers never see a
// partially written output.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace lmmsubset
