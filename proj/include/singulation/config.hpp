#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "singulation/env.hpp"
#include "singulation/harness.hpp"

namespace singulation {

struct RunConfig {
    EnvConfig env;
    TrainConfig train;
};

/// UTF-8 `key = value` lines, `#` comments. Keys mirror the EnvConfig /
/// TrainConfig field names; unknown keys and malformed values throw ConfigError.
RunConfig parse_config(std::istream& is, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Sets one key; used by the parser and by tests.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Canonical sorted key=value rendering of every setting.
std::string canonical_config(const RunConfig& cfg);

/// FNV-1a of canonical_config, as 16 hex digits.
std::string config_digest(const RunConfig& cfg);

/// Reduced environment used for the desk-scale comparisons.
RunConfig toy_config();
RunConfig toy_complex_config();

}  // namespace singulation
