#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dsvt/backbone.hpp"
#include "dsvt/config.hpp"

namespace dsvt {

// Field-for-field JSON mirror of BackboneConfig. Missing or ill-typed fields
// raise ConfigError with the field path, e.g. "grid.voxel_size".
nlohmann::json config_to_json(const BackboneConfig& cfg);
BackboneConfig config_from_json(const nlohmann::json& j);
BackboneConfig load_config(const std::filesystem::path& path);

struct NamedTensor {
  std::string name;
  FeatureTensor* tensor;
};

std::vector<NamedTensor> named_tensors(BackboneWeights& weights);

// Flat little-endian float32 blob plus `<path>.json` listing name, shape and
// offset of every tensor.
void save_weights(const BackboneWeights& weights, const std::filesystem::path& path);
// Loads into the layout expected by `cfg`. Mismatched names or shapes raise
// ConfigError listing expected and found shapes.
BackboneWeights load_weights(const BackboneConfig& cfg, const std::filesystem::path& path);

void write_f32_blob(std::span<const float> values, const std::filesystem::path& path);
std::vector<float> read_f32_blob(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace dsvt
