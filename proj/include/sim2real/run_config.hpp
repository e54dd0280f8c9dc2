#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sim2real/pipeline.hpp"

namespace sim2real {

// Minimal TOML subset used by run configs:
//   key = "string" | 'literal' | 123 | 1.5 | true | false
//   [table]          named table
//   [[array]]        appends a table to an array of tables
//   # comments, blank lines
using ConfigValue = std::variant<std::string, std::int64_t, double, bool>;

struct ConfigTable {
  struct Item {
    ConfigValue value;
    int line = 0;
  };
  std::map<std::string, Item> items;
  int line = 0;  // header line, 0 for the root table
};

struct ConfigDocument {
  ConfigTable root;
  std::map<std::string, ConfigTable> tables;
  std::map<std::string, std::vector<ConfigTable>> arrays;
};

// Throws ParseError formatted "<source>:<line>:<column>: <message>".
ConfigDocument parse_config(std::string_view text, std::string_view source = "<config>");

struct RunSettings {
  PipelineConfig pipeline;
  std::filesystem::path dataset;  // manifest path
  std::optional<std::filesystem::path> export_dir;
};

// Relative paths resolve against `base_dir`. Unknown keys and wrongly typed
// values are ParseErrors that name the line.
RunSettings run_settings_from_config(const ConfigDocument& doc,
                                     const std::filesystem::path& base_dir,
                                     std::string_view source = "<config>");
// Prompt text with one trailing line break removed.
std::string read_prompt_file(const std::filesystem::path& path);

RunSettings load_run_settings(const std::filesystem::path& path);

}  // namespace sim2real
