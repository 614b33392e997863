#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "imdcl/pipeline.hpp"

namespace imdcl {

// Malformed config files, unknown keys, bad values. Maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Built-in defaults (the near-regime benchmark).
ExperimentConfig default_experiment_config();

// Parses flat `key = value` text organized under [section] headers. Unknown
// keys and malformed values raise ConfigError naming the exact key (and line
// when reading a file). `origin` labels error messages (file name or
// "<override>").
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

ExperimentConfig load_config_file(const std::string& path);

// Applies `key=value` strings on top of an existing config.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);

// File (optional; empty path means pure defaults) + overrides, in order.
ExperimentConfig resolve_config(const std::string& path_or_empty,
                                const std::vector<std::string>& overrides);

// Canonical text form listing every key. Feeding the echo back through
// parse_config_text reproduces the identical configuration.
std::string echo_config(const ExperimentConfig& config);

// FNV-1a (64-bit) over the canonical echo, as a hex string; reports carry it
// so results can be traced to an exact configuration.
std::string config_hash(const ExperimentConfig& config);

}  // namespace imdcl
