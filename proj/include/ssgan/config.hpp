#pragma once

#include <string>
#include <vector>

#include "ssgan/trainer.hpp"

namespace ssgan::config {

// Canonical configuration schema with every default materialized.
std::string default_config_json();

// Strict parse: unknown keys raise ConfigError with a nearest-key suggestion,
// values are type-checked against the schema.
trainer::TrainConfig from_json(const std::string& text);
std::string to_json(const trainer::TrainConfig& cfg);

// defaults <- user JSON <- dotted overrides ("a.b=value"); bare leaf names
// are accepted when they identify a unique key. resolved_json, when given,
// receives the merged canonical JSON (what the manifest records).
trainer::TrainConfig resolve(const std::string& json_text,
                             const std::vector<std::string>& overrides,
                             std::string* resolved_json = nullptr);

std::vector<std::string> known_keys();
std::string suggest_key(const std::string& wrong);

std::string git_describe();
std::string now_iso8601();

// manifest.json inside a run directory: resolved config, build stamp,
// timestamps, produced artifacts.
void write_manifest(const std::string& run_dir, const std::string& resolved_config_json,
                    const std::string& started, const std::string& finished,
                    const std::vector<std::string>& artifacts);

}  // namespace ssgan::config
