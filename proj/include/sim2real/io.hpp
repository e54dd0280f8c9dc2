#pragma once

#include <filesystem>
#include <string>

#include "sim2real/digest.hpp"

namespace sim2real {

Bytes read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> data);
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view text) {
  write_file_atomic(path, as_bytes(text));
}

}  // namespace sim2real
