#pragma once
// Flat key = value run configuration.
//
// One setting per line, '#' starts a comment, unknown keys are rejected so
// typos fail loudly.  Every key has a schema entry with a default and a help
// string; the CLI mirrors the schema as --key options layered on top of an
// optional config file.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "keyrl/env.hpp"
#include "keyrl/harness.hpp"

namespace keyrl::config {

struct SchemaEntry {
  const char* key;
  const char* default_value;
  const char* help;
};

std::span<const SchemaEntry> schema();

class Config {
 public:
  // All schema defaults filled in.
  static Config defaults();
  // Defaults overlaid with the file's assignments.  Throws std::runtime_error
  // with a line number on parse errors or unknown keys.
  static Config from_file(const std::string& path);

  // Throws std::invalid_argument for keys not in the schema.
  void set(const std::string& key, const std::string& value);
  const std::string& raw(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  // Comma-separated.
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  env::EnvConfig env_config() const;
  harness::TrainConfig train_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace keyrl::config
