#pragma once

// Shared container layout for survey and checkpoint files:
//   magic bytes | u64 LE header length | UTF-8 JSON header | f64 LE payload

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace impz::io {

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const nlohmann::json& header,
                     std::span<const double> payload);

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

/// Reads the whole file. The payload must be a whole number of float64
/// values; callers validate its length against the header.
Container read_container(const std::filesystem::path& path,
                         std::string_view magic);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace impz::io
