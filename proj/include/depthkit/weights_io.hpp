#pragma once

// Weight file layout:
//   8 bytes  magic "DKWEIGHT"
//   4 bytes  little-endian uint32 header length L
//   L bytes  JSON header {"tensors": [{name, shape, offset}], "meta": {...}}
//   payload  contiguous little-endian float32 values; offset counts floats
// Training runs at 64-bit; values are rounded to float32 on save.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthkit/autograd.hpp"

namespace depthkit {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct WeightFile {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;
};

void save_weights(const std::filesystem::path& path, std::span<const Parameter* const> params,
                  const nlohmann::json& meta = nlohmann::json::object());
WeightFile load_weights(const std::filesystem::path& path);

}  // namespace depthkit
