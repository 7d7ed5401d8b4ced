#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "spdelab/common.hpp"

namespace spdelab::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.3.0";

/// Shortest round-trip decimal form; keeps reruns byte-identical.
std::string format_double(double value);

/// Write-then-rename so readers never observe a half-written file.
void atomic_write(const std::string& path, const std::string& content);

/// Provenance stamp every output embeds.
Json provenance(std::uint64_t config_hash, std::uint64_t seed, const std::string& grid_desc);

/// Serialize rows to CSV (first row = header).
std::string to_csv(const std::vector<std::vector<std::string>>& rows);

}  // namespace spdelab::cli
