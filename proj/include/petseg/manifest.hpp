#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace petseg {

inline constexpr const char* kToolVersion = "0.3.0";

struct InputDigest {
  std::string path;
  std::uint32_t crc32 = 0;
  std::uintmax_t bytes = 0;
};

/// zlib CRC-32 of the file contents.
InputDigest digest_file(const std::filesystem::path& path);

/// Provenance record written beside each output. `timings` and `host` are the
/// only fields that may differ between replays.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::vector<InputDigest> inputs;
  std::uint64_t seed = 0;
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json host = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

nlohmann::json host_info();

/// Writes to a sibling temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

/// Accepts a bare config object or a manifest carrying one under "config".
nlohmann::json load_config_json(const std::filesystem::path& path);

}  // namespace petseg
