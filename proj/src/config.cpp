#include "prunekit/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace prunekit {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// The full key schema, used for unknown-key detection and bare-name
// resolution of --set overrides.
const std::vector<std::string>& schema() {
  static const std::vector<std::string> keys = {
      "data.dataset",        "data.root",          "data.limit_per_class",
      "data.val_fraction",   "model.arch",         "model.vgg_config",
      "model.width",         "model.mid_channels", "model.num_classes",
      "train.stage1_epochs", "train.finetune_epochs", "train.batch_size",
      "train.lr",            "train.momentum",     "train.weight_decay",
      "train.decay_bn_params", "train.augment",    "train.seed",
      "prune.p",             "prune.ratio",        "prune.delta_lambda",
      "prune.constant_lambda", "prune.rule",       "prune.metric",
      "prune.norm",          "prune.bias_absorb",  "prune.scratch_retrain",
  };
  return keys;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' wants a boolean, got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, T (*conv)(const std::string&)) {
  try {
    return conv(value);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' has a malformed number '" + value + "'");
  }
}

int to_int(const std::string& s) { return std::stoi(s); }
float to_float(const std::string& s) { return std::stof(s); }
double to_double(const std::string& s) { return std::stod(s); }
unsigned to_unsigned(const std::string& s) { return static_cast<unsigned>(std::stoul(s)); }

}  // namespace

ConfigMap parse_toml(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: unterminated section header at line " +
                          std::to_string(line_no));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw ConfigError("config: empty key at line " + std::to_string(line_no));
    }
    map.values[section.empty() ? key : section + "." + key] = value;
  }
  return map;
}

ConfigMap parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

void apply_override(ConfigMap& map, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set wants key=value, got '" + assignment + "'");
  }
  std::string key = trim(assignment.substr(0, eq));
  const std::string value = unquote(trim(assignment.substr(eq + 1)));

  const auto& keys = schema();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    // Resolve a bare name against unique last components: "ratio" etc.
    std::vector<std::string> hits;
    for (const auto& k : keys) {
      if (k.substr(k.find('.') + 1) == key) hits.push_back(k);
    }
    if (hits.size() == 1) {
      key = hits[0];
    } else if (hits.empty()) {
      throw ConfigError("--set: unknown key '" + key + "'");
    } else {
      std::string msg = "--set: ambiguous key '" + key + "' (matches";
      for (const auto& h : hits) msg += " " + h;
      throw ConfigError(msg + ")");
    }
  }
  map.values[key] = value;
}

TrainConfig config_from_map(const ConfigMap& map) {
  std::vector<std::string> unknown;
  const auto& keys = schema();
  for (const auto& [k, v] : map.values) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }

  TrainConfig cfg;
  auto get = [&](const char* key) -> const std::string* {
    auto it = map.values.find(key);
    return it == map.values.end() ? nullptr : &it->second;
  };

  if (auto* v = get("data.dataset")) cfg.dataset = *v;
  if (auto* v = get("data.root")) cfg.data_root = *v;
  if (auto* v = get("data.limit_per_class")) {
    cfg.limit_per_class = parse_number("data.limit_per_class", *v, to_int);
  }
  if (auto* v = get("data.val_fraction")) {
    cfg.val_fraction = parse_number("data.val_fraction", *v, to_float);
  }
  if (auto* v = get("model.arch")) cfg.arch = *v;
  if (auto* v = get("model.vgg_config")) cfg.vgg_config = *v;
  if (auto* v = get("model.width")) cfg.width = parse_number("model.width", *v, to_int);
  if (auto* v = get("model.mid_channels")) {
    cfg.mid_channels = parse_number("model.mid_channels", *v, to_int);
  }
  if (auto* v = get("model.num_classes")) {
    cfg.num_classes = parse_number("model.num_classes", *v, to_int);
  }
  if (auto* v = get("train.stage1_epochs")) {
    cfg.stage1_epochs = parse_number("train.stage1_epochs", *v, to_int);
  }
  if (auto* v = get("train.finetune_epochs")) {
    cfg.finetune_epochs = parse_number("train.finetune_epochs", *v, to_int);
  }
  if (auto* v = get("train.batch_size")) {
    cfg.batch_size = parse_number("train.batch_size", *v, to_int);
  }
  if (auto* v = get("train.lr")) cfg.lr = parse_number("train.lr", *v, to_float);
  if (auto* v = get("train.momentum")) {
    cfg.momentum = parse_number("train.momentum", *v, to_float);
  }
  if (auto* v = get("train.weight_decay")) {
    cfg.weight_decay = parse_number("train.weight_decay", *v, to_float);
  }
  if (auto* v = get("train.decay_bn_params")) {
    cfg.decay_bn_params = parse_bool("train.decay_bn_params", *v);
  }
  if (auto* v = get("train.augment")) cfg.augment = parse_bool("train.augment", *v);
  if (auto* v = get("train.seed")) cfg.seed = parse_number("train.seed", *v, to_unsigned);
  if (auto* v = get("prune.p")) cfg.threshold_p = parse_number("prune.p", *v, to_float);
  if (auto* v = get("prune.ratio")) cfg.ratio_r = parse_number("prune.ratio", *v, to_float);
  if (auto* v = get("prune.delta_lambda")) {
    cfg.delta_lambda = parse_number("prune.delta_lambda", *v, to_double);
  }
  if (auto* v = get("prune.constant_lambda")) {
    cfg.constant_lambda = parse_number("prune.constant_lambda", *v, to_double);
  }
  if (auto* v = get("prune.rule")) cfg.rule = *v;
  if (auto* v = get("prune.metric")) cfg.metric = *v;
  if (auto* v = get("prune.norm")) cfg.norm = *v;
  if (auto* v = get("prune.bias_absorb")) {
    cfg.bias_absorb = parse_bool("prune.bias_absorb", *v);
  }
  if (auto* v = get("prune.scratch_retrain")) {
    cfg.scratch_retrain = parse_bool("prune.scratch_retrain", *v);
  }

  cfg.validate();
  return cfg;
}

std::string config_to_toml(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "[data]\n";
  os << "dataset = \"" << cfg.dataset << "\"\n";
  os << "root = \"" << cfg.data_root << "\"\n";
  os << "limit_per_class = " << cfg.limit_per_class << "\n";
  os << "val_fraction = " << cfg.val_fraction << "\n\n";
  os << "[model]\n";
  os << "arch = \"" << cfg.arch << "\"\n";
  os << "vgg_config = \"" << cfg.vgg_config << "\"\n";
  os << "width = " << cfg.width << "\n";
  os << "mid_channels = " << cfg.mid_channels << "\n";
  os << "num_classes = " << cfg.num_classes << "\n\n";
  os << "[train]\n";
  os << "stage1_epochs = " << cfg.stage1_epochs << "\n";
  os << "finetune_epochs = " << cfg.finetune_epochs << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "lr = " << cfg.lr << "\n";
  os << "momentum = " << cfg.momentum << "\n";
  os << "weight_decay = " << cfg.weight_decay << "\n";
  os << "decay_bn_params = " << (cfg.decay_bn_params ? "true" : "false") << "\n";
  os << "augment = " << (cfg.augment ? "true" : "false") << "\n";
  os << "seed = " << cfg.seed << "\n\n";
  os << "[prune]\n";
  os << "p = " << cfg.threshold_p << "\n";
  os << "ratio = " << cfg.ratio_r << "\n";
  os << "delta_lambda = " << cfg.delta_lambda << "\n";
  os << "constant_lambda = " << cfg.constant_lambda << "\n";
  os << "rule = \"" << cfg.rule << "\"\n";
  os << "metric = \"" << cfg.metric << "\"\n";
  os << "norm = \"" << cfg.norm << "\"\n";
  os << "bias_absorb = " << (cfg.bias_absorb ? "true" : "false") << "\n";
  os << "scratch_retrain = " << (cfg.scratch_retrain ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace prunekit
