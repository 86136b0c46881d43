#include "petseg/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace petseg::nn {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "petseg-weights";

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
  std::filesystem::path blob = manifest_path;
  blob.replace_extension(".bin");
  return blob;
}

void put_f64_le(std::vector<char>& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

json architecture_to_json(const std::vector<LayerSpec>& layers) {
  json arr = json::array();
  for (const LayerSpec& layer : layers) {
    std::visit(
        [&arr](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            arr.push_back({{"type", "conv2d"},
                           {"in", l.in_channels},
                           {"out", l.out_channels},
                           {"kernel", l.kernel},
                           {"stride", l.stride},
                           {"pad", l.pad}});
          } else if constexpr (std::is_same_v<T, Linear>) {
            arr.push_back({{"type", "linear"}, {"in", l.in}, {"out", l.out}});
          } else if constexpr (std::is_same_v<T, ReLU>) {
            arr.push_back({{"type", "relu"}});
          } else if constexpr (std::is_same_v<T, Sigmoid>) {
            arr.push_back({{"type", "sigmoid"}});
          } else {
            arr.push_back({{"type", "flatten"}});
          }
        },
        layer);
  }
  return arr;
}

std::vector<LayerSpec> architecture_from_json(const json& j) {
  std::vector<LayerSpec> layers;
  for (const json& l : j) {
    const std::string type = l.at("type").get<std::string>();
    if (type == "conv2d") {
      layers.emplace_back(Conv2D{l.at("in").get<Index>(), l.at("out").get<Index>(), l.at("kernel").get<Index>(),
                                 l.value("stride", Index{1}), l.value("pad", Index{0})});
    } else if (type == "linear") {
      layers.emplace_back(Linear{l.at("in").get<Index>(), l.at("out").get<Index>()});
    } else if (type == "relu") {
      layers.emplace_back(ReLU{});
    } else if (type == "sigmoid") {
      layers.emplace_back(Sigmoid{});
    } else if (type == "flatten") {
      layers.emplace_back(Flatten{});
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown layer type " + type);
    }
  }
  return layers;
}

void save_model(const std::filesystem::path& manifest_path, const Sequential& model, const ModelParams& params) {
  model.check_params(params);
  std::vector<char> blob;
  blob.reserve(static_cast<std::size_t>(params.count()) * 8);
  json tensors = json::array();
  for (const ParamTensor& t : params.tensors) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.value.shape()},
                       {"offset", blob.size()},
                       {"count", t.value.size()}});
    for (Index i = 0; i < t.value.size(); ++i) put_f64_le(blob, t.value[i]);
  }

  const std::filesystem::path blob_path = blob_path_for(manifest_path);
  json manifest = {{"format", kFormat},
                   {"version", 1},
                   {"blob", blob_path.filename().string()},
                   {"dtype", "float64-le"},
                   {"input_shape", model.input_shape()},
                   {"architecture", architecture_to_json(model.layers())},
                   {"seed", params.seed},
                   {"optimizer_step", params.step},
                   {"tensors", tensors}};

  std::ofstream bin(blob_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw Error(ErrorCode::IoFailure, "cannot write " + blob_path.string());
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream js(manifest_path, std::ios::trunc);
  if (!js) throw Error(ErrorCode::IoFailure, "cannot write " + manifest_path.string());
  js << manifest.dump(2) << '\n';
  if (!bin || !js) throw Error(ErrorCode::IoFailure, "model write failed");
}

SavedModel load_model(const std::filesystem::path& manifest_path) {
  std::ifstream js(manifest_path);
  if (!js) throw Error(ErrorCode::IoFailure, "cannot open " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(js);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed model manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat) {
    throw Error(ErrorCode::InvalidArgument, "not a petseg weight manifest");
  }

  SavedModel saved;
  saved.architecture = architecture_from_json(manifest.at("architecture"));
  saved.input_shape = manifest.at("input_shape").get<std::vector<Index>>();
  const Sequential model = saved.model();
  saved.params = model.zeros();
  saved.params.seed = manifest.value("seed", std::uint64_t{0});
  saved.params.step = manifest.value("optimizer_step", std::int64_t{0});

  const std::filesystem::path blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream bin(blob_path, std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoFailure, "cannot open " + blob_path.string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  const json& tensors = manifest.at("tensors");
  if (tensors.size() != saved.params.tensors.size()) {
    throw Error(ErrorCode::ShapeError, "manifest tensor count does not match architecture");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    ParamTensor& p = saved.params.tensors[i];
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != p.name ||
        t.at("shape").get<std::vector<Index>>() != p.value.shape()) {
      throw Error(ErrorCode::ShapeError, "manifest entry " + std::to_string(i) + " does not match " + p.name);
    }
    const auto offset = t.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(p.value.size()) * 8 > blob.size()) {
      throw Error(ErrorCode::TruncatedData, "weight blob too short for " + p.name);
    }
    for (Index j = 0; j < p.value.size(); ++j) p.value[j] = get_f64_le(blob.data() + offset + 8 * j);
  }
  return saved;
}

}  // namespace petseg::nn
