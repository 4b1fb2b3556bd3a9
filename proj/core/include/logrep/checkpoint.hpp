#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "logrep/encoder.hpp"

namespace logrep {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EncoderConfig config;
  ModelParameters params;
  /// Free-form provenance (task, class names, step). Never timestamps, so
  /// identical training runs give identical files.
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json config_to_json(const EncoderConfig& config);
EncoderConfig config_from_json(const nlohmann::json& j);

/// Layout: 8-byte little-endian header length, a JSON header (format,
/// format_version, config, tensor manifest with name/shape/offset, metadata),
/// then every non-empty tensor as little-endian float64 in manifest order.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace logrep
