#pragma once

// Parameter checkpoints: one flat binary file of little-endian float32 tensor
// payloads plus a JSON manifest mapping tensor name -> shape and byte offset.
// The pair round-trips bit-exactly; the manifest carries a format version so
// stale files fail loudly instead of deserializing garbage.

#include "alignlab/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace alignlab {

inline constexpr int kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

inline std::filesystem::path manifest_path(const std::filesystem::path& binary_path) {
  std::filesystem::path p = binary_path;
  p += ".manifest.json";
  return p;
}

inline void save_checkpoint(const std::filesystem::path& binary_path, const NamedTensors& tensors) {
  static_assert(sizeof(float) == 4, "float32 payload assumed");
  std::ofstream bin(binary_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + binary_path.string());
  nlohmann::json manifest;
  manifest["format"] = "alignlab-checkpoint";
  manifest["version"] = kCheckpointVersion;
  nlohmann::json entries = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    bin.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    entries[name] = {{"shape", t.shape}, {"offset", offset}};
    offset += t.data.size() * sizeof(float);
  }
  if (!bin) throw std::runtime_error("save_checkpoint: write failed for " + binary_path.string());
  bin.close();
  manifest["tensors"] = std::move(entries);
  manifest["total_bytes"] = offset;
  std::ofstream mf(manifest_path(binary_path));
  if (!mf) throw std::runtime_error("save_checkpoint: cannot open manifest for " + binary_path.string());
  mf << manifest.dump(2) << '\n';
}

inline NamedTensors load_checkpoint(const std::filesystem::path& binary_path) {
  std::ifstream mf(manifest_path(binary_path));
  if (!mf) throw std::runtime_error("load_checkpoint: missing manifest for " + binary_path.string());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.value("format", "") != "alignlab-checkpoint")
    throw std::runtime_error("load_checkpoint: " + binary_path.string() + " is not a checkpoint manifest");
  if (manifest.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: version " + manifest["version"].dump() + " != " +
                             std::to_string(kCheckpointVersion) + " in " + binary_path.string());
  std::ifstream bin(binary_path, std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: cannot open " + binary_path.string());

  // Manifest order is alphabetical (JSON object); reload in offset order so
  // the result matches the original write order.
  std::vector<std::pair<std::uint64_t, std::string>> by_offset;
  for (const auto& [name, entry] : manifest["tensors"].items())
    by_offset.emplace_back(entry["offset"].get<std::uint64_t>(), name);
  std::sort(by_offset.begin(), by_offset.end());

  NamedTensors out;
  for (const auto& [offset, name] : by_offset) {
    const auto& entry = manifest["tensors"][name];
    Shape shape = entry["shape"].get<Shape>();
    Tensor<float> t(shape);
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!bin) throw std::runtime_error("load_checkpoint: truncated payload for tensor '" + name + "'");
    out.emplace_back(name, std::move(t));
  }
  return out;
}

}  // namespace alignlab
