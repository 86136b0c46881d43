#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"

#include "petseg/nn.hpp"

namespace petseg::nn {

nlohmann::json architecture_to_json(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> architecture_from_json(const nlohmann::json& j);

struct SavedModel {
  std::vector<LayerSpec> architecture;
  std::vector<Index> input_shape;
  ModelParams params;

  Sequential model() const { return Sequential(architecture, input_shape); }
};

/// Writes `<stem>.json` (manifest: architecture, seed, tensor names, shapes,
/// byte offsets) and `<stem>.bin` (little-endian float64 weights, in order).
/// `manifest_path` is the .json path; the blob sits next to it.
void save_model(const std::filesystem::path& manifest_path, const Sequential& model, const ModelParams& params);

SavedModel load_model(const std::filesystem::path& manifest_path);

}  // namespace petseg::nn
