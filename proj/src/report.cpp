#include "spdelab/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace spdelab::cli {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw numerical_error("atomic_write: cannot open " + tmp.string());
    out << content;
    if (!out) throw numerical_error("atomic_write: short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

Json provenance(std::uint64_t config_hash, std::uint64_t seed, const std::string& grid_desc) {
  Json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["grid"] = grid_desc;
  j["code_version"] = kVersion;
  return j;
}

std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace spdelab::cli
