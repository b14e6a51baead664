#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cat/model.hpp"

namespace cat {

// `key = value` per line, '#' starts a comment. Unknown keys, repeated keys
// and unparsable values raise ConfigError naming the line.
ModelConfig parse_config(std::string_view text);
ModelConfig load_config(const std::filesystem::path& path);
std::string format_config(const ModelConfig& config);

// Little-endian "CATW" container, version 1; float32 payloads only.
void save_weights(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_weights(const std::filesystem::path& path);

/// load_weights plus a check against param_layout(config): every entry must
/// be expected, present and correctly shaped.
ParamStore load_weights_for(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace cat
