#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "siamapn/config.hpp"
#include "siamapn/model.hpp"

namespace siamapn {

// Layout: 8-byte magic "SAPNCKPT", u64 little-endian header length, a JSON
// header {"format":1, "config":{...}, "tensors":[{"name","offset","shape"}]},
// then the raw little-endian f64 payload. Offsets are bytes from the start of
// the payload.

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct TensorArchive {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;
};

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_tensor_archive(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const SiamApnPP& model,
                     const Config& cfg);

struct LoadedCheckpoint {
  Config config;
  std::unique_ptr<SiamApnPP> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace siamapn
