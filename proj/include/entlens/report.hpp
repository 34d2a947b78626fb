#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "entlens/error.hpp"

namespace entlens {

inline constexpr const char* kToolVersion = "0.1.0";

/// Reproducibility header embedded in every report the CLI writes.
struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> parameters;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;

  nlohmann::json to_json() const {
    return {{"command", command}, {"inputs", inputs}, {"parameters", parameters}, {"seed", seed}, {"tool_version", tool_version}};
  }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, path.string() + " is not valid JSON: " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// `base` with its extension replaced and `suffix` appended to the stem.
inline std::filesystem::path sibling(const std::filesystem::path& base, const std::string& suffix, const std::string& ext) {
  auto p = base;
  p.replace_filename(base.stem().string() + suffix + ext);
  return p;
}

}  // namespace entlens
