#include "petseg/manifest.hpp"

#include <unistd.h>
#include <zlib.h>

#include <fstream>
#include <thread>

#include "petseg/errors.hpp"

namespace petseg {

InputDigest digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  InputDigest d;
  d.path = path.string();
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got <= 0) break;
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
    d.bytes += static_cast<std::uintmax_t>(got);
  }
  d.crc32 = static_cast<std::uint32_t>(crc);
  return d;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json digests = nlohmann::json::array();
  for (const InputDigest& d : inputs) {
    char hex[9];
    std::snprintf(hex, sizeof hex, "%08x", d.crc32);
    digests.push_back({{"path", d.path}, {"crc32", hex}, {"bytes", d.bytes}});
  }
  return {{"tool_version", tool_version}, {"subcommand", subcommand}, {"config", config}, {"inputs", digests},
          {"seed", seed}, {"outputs", outputs}, {"timings", timings}, {"host", host}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.tool_version = j.value("tool_version", m.tool_version);
  m.subcommand = j.value("subcommand", "");
  m.config = j.value("config", nlohmann::json::object());
  m.seed = j.value("seed", std::uint64_t{0});
  m.outputs = j.value("outputs", nlohmann::json::object());
  m.timings = j.value("timings", nlohmann::json::object());
  m.host = j.value("host", nlohmann::json::object());
  for (const auto& d : j.value("inputs", nlohmann::json::array())) {
    InputDigest digest;
    digest.path = d.at("path").get<std::string>();
    digest.crc32 = static_cast<std::uint32_t>(std::stoul(d.at("crc32").get<std::string>(), nullptr, 16));
    digest.bytes = d.at("bytes").get<std::uintmax_t>();
    m.inputs.push_back(digest);
  }
  return m;
}

nlohmann::json host_info() {
  char name[256] = {};
  if (gethostname(name, sizeof name - 1) != 0) name[0] = '\0';
  return {{"hostname", name}, {"hardware_threads", std::thread::hardware_concurrency()},
          {"compiler", __VERSION__}};
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoFailure, "cannot rename onto " + path.string());
  }
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  write_text_atomic(path, manifest.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return RunManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed manifest " + path.string() + ": " + e.what());
  }
}

nlohmann::json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  if (j.contains("subcommand") && j.contains("config")) return j.at("config");
  return j;
}

}  // namespace petseg
