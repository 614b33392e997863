#include "imdcl/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>

namespace imdcl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  if (pos != s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

std::size_t to_size(const std::string& s) {
  const double v = to_double(s);
  if (v < 0 || v != std::floor(v)) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct KeyDef {
  const char* section;
  const char* name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::size_t hidden_width_of(const ExperimentConfig& c) {
  return c.hidden.empty() ? 64 : c.hidden.front();
}

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> keys = {
      // [domain]
      {"domain", "input_dim", [](const ExperimentConfig& c) { return std::to_string(c.domain.input_dim); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.input_dim = to_size(v); }},
      {"domain", "source_classes", [](const ExperimentConfig& c) { return std::to_string(c.domain.source_classes); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.source_classes = to_size(v); }},
      {"domain", "target_classes", [](const ExperimentConfig& c) { return std::to_string(c.domain.target_classes); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.target_classes = to_size(v); }},
      {"domain", "source_samples_per_class", [](const ExperimentConfig& c) { return std::to_string(c.domain.source_samples_per_class); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.source_samples_per_class = to_size(v); }},
      {"domain", "target_samples_per_class", [](const ExperimentConfig& c) { return std::to_string(c.domain.target_samples_per_class); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.target_samples_per_class = to_size(v); }},
      {"domain", "class_mean_scale", [](const ExperimentConfig& c) { return format_double(c.domain.class_mean_scale); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.class_mean_scale = to_double(v); }},
      {"domain", "class_cov_scale", [](const ExperimentConfig& c) { return format_double(c.domain.class_cov_scale); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.class_cov_scale = to_double(v); }},
      {"domain", "shift_severity", [](const ExperimentConfig& c) { return format_double(c.domain.shift_severity); },
       [](ExperimentConfig& c, const std::string& v) { c.domain.shift_severity = to_double(v); }},

      // [model]
      {"model", "hidden_layers", [](const ExperimentConfig& c) { return std::to_string(c.hidden.size()); },
       [](ExperimentConfig& c, const std::string& v) {
         c.hidden.assign(to_size(v), hidden_width_of(c));
       }},
      {"model", "hidden_width", [](const ExperimentConfig& c) { return std::to_string(hidden_width_of(c)); },
       [](ExperimentConfig& c, const std::string& v) {
         const std::size_t w = to_size(v);
         for (auto& h : c.hidden) h = w;
       }},
      {"model", "feature_dim", [](const ExperimentConfig& c) { return std::to_string(c.feature_dim); },
       [](ExperimentConfig& c, const std::string& v) { c.feature_dim = to_size(v); }},
      {"model", "pretrain_epochs", [](const ExperimentConfig& c) { return std::to_string(c.pretrain.epochs); },
       [](ExperimentConfig& c, const std::string& v) { c.pretrain.epochs = to_size(v); }},
      {"model", "pretrain_lr", [](const ExperimentConfig& c) { return format_double(c.pretrain.lr); },
       [](ExperimentConfig& c, const std::string& v) { c.pretrain.lr = to_double(v); }},
      {"model", "pretrain_momentum", [](const ExperimentConfig& c) { return format_double(c.pretrain.momentum); },
       [](ExperimentConfig& c, const std::string& v) { c.pretrain.momentum = to_double(v); }},
      {"model", "pretrain_weight_decay", [](const ExperimentConfig& c) { return format_double(c.pretrain.weight_decay); },
       [](ExperimentConfig& c, const std::string& v) { c.pretrain.weight_decay = to_double(v); }},

      // [adapt]
      {"adapt", "epochs", [](const ExperimentConfig& c) { return std::to_string(c.adapt.epochs); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.epochs = to_size(v); }},
      {"adapt", "lr", [](const ExperimentConfig& c) { return format_double(c.adapt.lr); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.lr = to_double(v); }},
      {"adapt", "momentum", [](const ExperimentConfig& c) { return format_double(c.adapt.momentum); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.momentum = to_double(v); }},
      {"adapt", "weight_decay", [](const ExperimentConfig& c) { return format_double(c.adapt.weight_decay); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.weight_decay = to_double(v); }},
      {"adapt", "lambda_div", [](const ExperimentConfig& c) { return format_double(c.adapt.weights.lambda_div); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.weights.lambda_div = to_double(v); }},
      {"adapt", "lambda_im", [](const ExperimentConfig& c) { return format_double(c.adapt.weights.lambda_im); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.weights.lambda_im = to_double(v); }},
      {"adapt", "lambda_dcl", [](const ExperimentConfig& c) { return format_double(c.adapt.weights.lambda_dcl); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.weights.lambda_dcl = to_double(v); }},
      {"adapt", "method", [](const ExperimentConfig& c) { return to_string(c.adapt.method); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.method = parse_method(v); }},
      {"adapt", "scheme", [](const ExperimentConfig& c) { return to_string(c.adapt.scheme.variant); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.scheme.variant = parse_weight_variant(v); }},
      {"adapt", "lambda_n_mode", [](const ExperimentConfig& c) { return to_string(c.adapt.lambda_n_mode); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.lambda_n_mode = parse_lambda_n_mode(v); }},
      {"adapt", "dcl_mode", [](const ExperimentConfig& c) { return to_string(c.adapt.dcl.mode); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.dcl.mode = parse_dcl_mode(v); }},
      {"adapt", "top_k", [](const ExperimentConfig& c) { return std::to_string(c.adapt.dcl.top_k); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.dcl.top_k = to_size(v); }},
      {"adapt", "support_boost", [](const ExperimentConfig& c) { return format_double(c.adapt.dcl.support_boost); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.dcl.support_boost = to_double(v); }},
      {"adapt", "logistic_k", [](const ExperimentConfig& c) { return format_double(c.adapt.scheme.logistic_k); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.scheme.logistic_k = to_double(v); }},
      {"adapt", "logistic_x0", [](const ExperimentConfig& c) { return format_double(c.adapt.scheme.logistic_x0); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.scheme.logistic_x0 = to_double(v); }},
      {"adapt", "encoder_frozen", [](const ExperimentConfig& c) { return bool_str(c.adapt.encoder_frozen); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.encoder_frozen = to_bool(v); }},
      {"adapt", "augment", [](const ExperimentConfig& c) { return bool_str(c.adapt.augment); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.augment = to_bool(v); }},
      {"adapt", "jitter_sigma", [](const ExperimentConfig& c) { return format_double(c.adapt.jitter_sigma); },
       [](ExperimentConfig& c, const std::string& v) { c.adapt.jitter_sigma = to_double(v); }},

      // [episode]
      {"episode", "way", [](const ExperimentConfig& c) { return std::to_string(c.way); },
       [](ExperimentConfig& c, const std::string& v) { c.way = to_size(v); }},
      {"episode", "shot", [](const ExperimentConfig& c) { return std::to_string(c.shot); },
       [](ExperimentConfig& c, const std::string& v) { c.shot = to_size(v); }},
      {"episode", "queries", [](const ExperimentConfig& c) { return std::to_string(c.queries); },
       [](ExperimentConfig& c, const std::string& v) { c.queries = to_size(v); }},

      // [run]
      {"run", "episodes", [](const ExperimentConfig& c) { return std::to_string(c.episodes); },
       [](ExperimentConfig& c, const std::string& v) { c.episodes = to_size(v); }},
      {"run", "seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
       [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); }},
  };
  return keys;
}

const KeyDef* find_key(const std::string& name) {
  for (const auto& k : registry()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

bool known_section(const std::string& name) {
  for (const auto& k : registry()) {
    if (name == k.section) return true;
  }
  return false;
}

void apply_key(ExperimentConfig& config, const std::string& key, const std::string& value,
               const std::string& where) {
  const KeyDef* def = find_key(key);
  if (def == nullptr) {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
  try {
    def->set(config, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": bad value for key '" + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig config = default_experiment_config();
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string section = trim(t.substr(1, t.size() - 2));
      if (!known_section(section)) {
        throw ConfigError(where + ": unknown section '" + section + "'");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    apply_key(config, key, value, where);
  }
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + ov + "': expected key=value");
    }
    const std::string key = trim(ov.substr(0, eq));
    const std::string value = trim(ov.substr(eq + 1));
    if (key.empty()) throw ConfigError("override '" + ov + "': empty key");
    apply_key(config, key, value, "override '" + ov + "'");
  }
}

ExperimentConfig resolve_config(const std::string& path_or_empty,
                                const std::vector<std::string>& overrides) {
  ExperimentConfig config =
      path_or_empty.empty() ? default_experiment_config() : load_config_file(path_or_empty);
  apply_overrides(config, overrides);
  return config;
}

std::string echo_config(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string current;
  for (const auto& k : registry()) {
    if (current != k.section) {
      if (!current.empty()) out << "\n";
      current = k.section;
      out << "[" << current << "]\n";
    }
    out << k.name << " = " << k.get(config) << "\n";
  }
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = echo_config(config);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace imdcl
