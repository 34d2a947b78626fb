#pragma once

// Reader/writer for `.entl` bundles.
//
// Layout (all integers little-endian):
//   magic "ENTL" | u32 version | u64 manifest length | UTF-8 JSON manifest | payload
// The manifest is {"metadata": {...}, "tensors": [{name, dtype, shape, offset, byte_len}]}
// with offsets relative to the start of the payload. Tensors are row-major f32.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "entlens/error.hpp"

namespace entlens {

using json = nlohmann::json;

inline constexpr std::array<std::uint8_t, 4> kBundleMagic{0x45, 0x4E, 0x54, 0x4C};
inline constexpr std::uint32_t kBundleVersion = 1;

enum class DType { f32 };

struct TensorEntry {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint64_t> shape;
  std::uint64_t offset = 0;
  std::uint64_t byte_len = 0;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }

  friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

namespace detail {

inline void store_le_f32(float value, std::uint8_t* out) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

inline float load_le_f32(const std::uint8_t* in) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T load_le(const std::uint8_t* in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(in[i]) << (8 * i);
  return value;
}

// Symbolic dimensions of the recognized tensors.
enum class Dim { tokens, depth, vocab, model };

inline const std::map<std::string, std::vector<Dim>>& recognized_shapes() {
  static const std::map<std::string, std::vector<Dim>> shapes{
      {"distributions", {Dim::tokens, Dim::depth, Dim::vocab}},
      {"logits", {Dim::tokens, Dim::depth, Dim::vocab}},
      {"hidden", {Dim::tokens, Dim::depth, Dim::model}},
      {"decoder", {Dim::vocab, Dim::model}},
      {"ln_gamma", {Dim::model}},
      {"ln_beta", {Dim::model}},
      {"profiles", {Dim::tokens, Dim::depth}},
      {"next_tokens", {Dim::tokens}},
  };
  return shapes;
}

inline const char* dim_name(Dim d) {
  switch (d) {
    case Dim::tokens: return "T";
    case Dim::depth: return "L+1";
    case Dim::vocab: return "V";
    case Dim::model: return "d";
  }
  return "?";
}

}  // namespace detail

/// A self-describing container of named f32 tensors plus JSON metadata.
struct Bundle {
  std::uint32_t version = kBundleVersion;
  json metadata = json::object();
  std::vector<TensorEntry> tensors;
  std::vector<std::uint8_t> payload;

  const TensorEntry* find(std::string_view name) const {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const TensorEntry& e) { return e.name == name; });
    return it == tensors.end() ? nullptr : &*it;
  }

  bool has(std::string_view name) const { return find(name) != nullptr; }

  const TensorEntry& entry(std::string_view name) const {
    const auto* e = find(name);
    if (e == nullptr) fail(ErrorKind::content, "bundle has no tensor '" + std::string(name) + "'");
    return *e;
  }

  /// Appends a tensor at the end of the payload.
  void add_tensor(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values) {
    require(!has(name), ErrorKind::validation, "duplicate tensor name '" + name + "'");
    TensorEntry e{std::move(name), DType::f32, std::move(shape), payload.size(), 0};
    require(e.element_count() == values.size(), ErrorKind::shape,
            "tensor '" + e.name + "' has " + std::to_string(values.size()) + " values for its shape");
    e.byte_len = 4 * values.size();
    const std::size_t base = payload.size();
    payload.resize(base + e.byte_len);
    for (std::size_t i = 0; i < values.size(); ++i) detail::store_le_f32(values[i], payload.data() + base + 4 * i);
    tensors.push_back(std::move(e));
  }

  void add_tensor(std::string name, std::vector<std::uint64_t> shape, std::span<const double> values) {
    std::vector<float> narrow(values.begin(), values.end());
    add_tensor(std::move(name), std::move(shape), std::span<const float>(narrow));
  }

  /// Decodes a tensor's values into host floats.
  std::vector<float> tensor_f32(std::string_view name) const {
    const auto& e = entry(name);
    std::vector<float> out(e.element_count());
    const std::uint8_t* base = payload.data() + e.offset;
    if constexpr (std::endian::native == std::endian::little) {
      if (!out.empty()) std::memcpy(out.data(), base, out.size() * 4);
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::load_le_f32(base + 4 * i);
    }
    return out;
  }

  /// Throws validation/corruption errors when any bundle invariant is broken.
  void validate() const;

  friend bool operator==(const Bundle&, const Bundle&) = default;
};

inline void Bundle::validate() const {
  if (version != kBundleVersion) fail(ErrorKind::unsupported_version, "bundle version " + std::to_string(version));
  require(metadata.is_object(), ErrorKind::validation, "metadata must be a JSON object");

  std::vector<const TensorEntry*> order;
  for (const auto& e : tensors) {
    require(!e.name.empty(), ErrorKind::validation, "tensor with empty name");
    require(e.byte_len == 4 * e.element_count(), ErrorKind::validation,
            "tensor '" + e.name + "' byte_len does not equal 4 x product(shape)");
    require(e.offset <= payload.size() && e.byte_len <= payload.size() - e.offset, ErrorKind::corruption,
            "tensor '" + e.name + "' lies outside the payload");
    order.push_back(&e);
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });
  for (std::size_t i = 1; i < order.size(); ++i)
    require(order[i - 1]->name != order[i]->name, ErrorKind::validation, "duplicate tensor name '" + order[i]->name + "'");

  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto* prev = order[i - 1];
    if (prev->byte_len == 0 || order[i]->byte_len == 0) continue;
    require(prev->offset + prev->byte_len <= order[i]->offset, ErrorKind::corruption,
            "tensors '" + prev->name + "' and '" + order[i]->name + "' overlap");
  }

  // Recognized names must agree on shared symbolic dimensions.
  std::map<detail::Dim, std::uint64_t> dims;
  for (const auto& e : tensors) {
    auto it = detail::recognized_shapes().find(e.name);
    if (it == detail::recognized_shapes().end()) continue;
    const auto& pattern = it->second;
    require(e.shape.size() == pattern.size(), ErrorKind::validation,
            "tensor '" + e.name + "' must have rank " + std::to_string(pattern.size()));
    for (std::size_t k = 0; k < pattern.size(); ++k) {
      auto [pos, inserted] = dims.emplace(pattern[k], e.shape[k]);
      require(inserted || pos->second == e.shape[k], ErrorKind::validation,
              "tensor '" + e.name + "' disagrees on dimension " + detail::dim_name(pattern[k]));
    }
  }
}

inline json manifest_json(const Bundle& b) {
  json tensors = json::array();
  for (const auto& e : b.tensors) {
    tensors.push_back(json{{"name", e.name}, {"dtype", "f32"}, {"shape", e.shape}, {"offset", e.offset}, {"byte_len", e.byte_len}});
  }
  return json{{"metadata", b.metadata}, {"tensors", std::move(tensors)}};
}

/// Serializes to an in-memory byte buffer.
inline std::vector<std::uint8_t> serialize_bundle(const Bundle& b) {
  b.validate();
  const std::string manifest = manifest_json(b).dump();
  std::vector<std::uint8_t> out(kBundleMagic.begin(), kBundleMagic.end());
  detail::append_le<std::uint32_t>(out, b.version);
  detail::append_le<std::uint64_t>(out, manifest.size());
  out.resize(16 + manifest.size() + b.payload.size());
  std::memcpy(out.data() + 16, manifest.data(), manifest.size());
  if (!b.payload.empty()) std::memcpy(out.data() + 16 + manifest.size(), b.payload.data(), b.payload.size());
  return out;
}

inline std::uint64_t write_bundle(const Bundle& b, std::ostream& out) {
  const auto bytes = serialize_bundle(b);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "failed writing bundle");
  return bytes.size();
}

inline Bundle parse_bundle(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::equal(kBundleMagic.begin(), kBundleMagic.end(), bytes.begin()), ErrorKind::format,
          "not an ENTL bundle (bad magic)");
  require(bytes.size() >= 16, ErrorKind::format, "truncated bundle header");
  Bundle b;
  b.version = detail::load_le<std::uint32_t>(bytes.data() + 4);
  if (b.version != kBundleVersion) fail(ErrorKind::unsupported_version, "bundle version " + std::to_string(b.version));
  const auto manifest_len = detail::load_le<std::uint64_t>(bytes.data() + 8);
  require(manifest_len <= bytes.size() - 16, ErrorKind::corruption, "manifest length exceeds file size");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    require(manifest.is_object() && manifest.contains("tensors") && manifest["tensors"].is_array(), ErrorKind::format,
            "manifest lacks a tensor table");
    b.metadata = manifest.value("metadata", json::object());
    for (const auto& t : manifest["tensors"]) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      require(t.at("dtype").get<std::string>() == "f32", ErrorKind::format, "unsupported dtype for '" + e.name + "'");
      e.shape = t.at("shape").get<std::vector<std::uint64_t>>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.byte_len = t.at("byte_len").get<std::uint64_t>();
      b.tensors.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed manifest: ") + e.what());
  }
  b.payload.assign(bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len), bytes.end());
  b.validate();

  if (b.has("distributions")) {
    for (float v : b.tensor_f32("distributions"))
      if (std::isnan(v)) fail(ErrorKind::data, "NaN in distributions tensor");
  }
  return b;
}

inline Bundle read_bundle(std::istream& in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) fail(ErrorKind::io, "failed reading bundle stream");
  return parse_bundle(bytes);
}

inline std::uint64_t save_bundle(const Bundle& b, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  return write_bundle(b, out);
}

inline Bundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return read_bundle(in);
}

/// Metadata lookup with a default.
template <typename T>
T meta_or(const Bundle& b, const std::string& key, T fallback) {
  if (!b.metadata.contains(key) || b.metadata[key].is_null()) return fallback;
  return b.metadata[key].get<T>();
}

}  // namespace entlens
