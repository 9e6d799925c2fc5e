#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcm/core/parameters.hpp"

// On-disk layout: a directory holding
//   manifest.json  {"version": 1, "params": [{"name", "shape", "offset", "len"}]}
//   weights.bin    concatenated little-endian float32 values
// offset and len are in bytes.

namespace lcm {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const ParameterStore<T>& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["params"] = nlohmann::json::array();
  std::vector<unsigned char> blob;
  for (const auto& entry : store.entries()) {
    const std::size_t offset = blob.size();
    for (T v : entry.value.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
    manifest["params"].push_back({{"name", entry.name},
                                  {"shape", entry.value.shape()},
                                  {"offset", offset},
                                  {"len", blob.size() - offset}});
  }
  std::ofstream weights(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  weights.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
  if (!weights) throw CheckpointError("save_checkpoint: failed writing " + (dir / "weights.bin").string());
}

/// Loads a checkpoint; throws without returning a partial store on any inconsistency.
inline ParameterStore<float> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / "manifest.json");
  if (!manifest_in) throw CheckpointError("load_checkpoint: missing " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("load_checkpoint: malformed manifest: ") + e.what());
  }
  if (!manifest.contains("version") || manifest["version"] != kCheckpointVersion) {
    throw CheckpointError("load_checkpoint: unsupported manifest version " +
                          (manifest.contains("version") ? manifest["version"].dump() : std::string("<none>")));
  }
  std::ifstream weights_in(dir / "weights.bin", std::ios::binary);
  if (!weights_in) throw CheckpointError("load_checkpoint: missing " + (dir / "weights.bin").string());
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(weights_in)),
                                        std::istreambuf_iterator<char>());

  ParameterStore<float> store;
  std::set<std::string> names;
  std::size_t expected_bytes = 0;
  for (const auto& p : manifest.at("params")) {
    const auto name = p.at("name").get<std::string>();
    const auto shape = p.at("shape").get<Shape>();
    const auto offset = p.at("offset").get<std::size_t>();
    const auto len = p.at("len").get<std::size_t>();
    if (!names.insert(name).second) throw CheckpointError("load_checkpoint: duplicate parameter '" + name + "'");
    if (shape.empty() || len != 4 * shape_size(shape)) {
      throw CheckpointError("load_checkpoint: length of '" + name + "' does not match its shape");
    }
    if (offset + len > blob.size()) {
      throw CheckpointError("load_checkpoint: '" + name + "' extends past the end of weights.bin (" +
                            std::to_string(blob.size()) + " bytes)");
    }
    std::vector<float> values(len / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{blob[offset + 4 * i + b]} << (8 * b);
      values[i] = std::bit_cast<float>(bits);
    }
    store.add(name, Tensor<float>(shape, std::move(values)));
    expected_bytes += len;
  }
  if (expected_bytes != blob.size()) {
    throw CheckpointError("load_checkpoint: manifest describes " + std::to_string(expected_bytes) +
                          " bytes but weights.bin holds " + std::to_string(blob.size()));
  }
  return store;
}

/// Copies checkpoint values into an existing store with the same layout.
template <class T>
void load_checkpoint_into(ParameterStore<T>& store, const std::filesystem::path& dir) {
  const auto loaded = load_checkpoint(dir);
  ParameterStore<T> converted = loaded.template cast<T>();
  store.assign_values(converted);
}

}  // namespace lcm
