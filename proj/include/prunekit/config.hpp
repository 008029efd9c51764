#pragma once

#include <map>
#include <string>
#include <vector>

#include "prunekit/trainer.hpp"

namespace prunekit {

// Flat view of a TOML-style config: "[section]" plus "key = value" lines
// become "section.key" entries. Values keep their literal text.
struct ConfigMap {
  std::map<std::string, std::string> values;
};

ConfigMap parse_toml(const std::string& text);
ConfigMap parse_toml_file(const std::string& path);

// "key=value" from --set; bare keys resolve against the schema when the last
// component is unique (e.g. "ratio" -> "prune.ratio").
void apply_override(ConfigMap& map, const std::string& assignment);

// Throws ConfigError listing every unknown key.
TrainConfig config_from_map(const ConfigMap& map);

// Fully-resolved echo (defaults + file + overrides); reproduces the run.
std::string config_to_toml(const TrainConfig& cfg);

}  // namespace prunekit
