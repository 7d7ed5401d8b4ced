#pragma once

#include <map>
#include <optional>
#include <string>

#include "spdelab/common.hpp"

namespace spdelab::cli {

/// Sectioned key = value experiment configuration. Parsing keeps the raw
/// text so the provenance hash covers exactly what the user wrote.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const;
  int get_int_or(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  /// FNV-1a over the canonicalized (sorted) section/key/value triples.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace spdelab::cli
