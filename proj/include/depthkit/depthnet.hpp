#pragma once

// Encoder-decoder depth completion network with the switchable features used
// by the ablation study: U-connections, max-unpooling vs transpose
// convolution, residual prediction, validity-mask input, interpolated input,
// early depth heads and an auxiliary RGB head.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthkit/autograd.hpp"
#include "depthkit/grid.hpp"
#include "depthkit/rng.hpp"

namespace depthkit {

struct ModelConfig {
  bool use_unet = true;
  bool use_unpool = true;        // false: transpose convolution
  bool residual = true;          // predict a correction added to the input depth
  bool use_mask_input = true;
  bool use_interp_input = true;  // feed the hole-filled depth instead of the raw one
  int early_heads = 0;           // depth outputs at 1/2, 1/4, ... resolution
  bool rgb_head = false;
  int base_channels = 8;
  int depth_levels = 3;
  double depth_max = 2.0;        // prediction clamp (m)

  void validate() const;
  int input_channels() const { return use_mask_input ? 5 : 4; }
  int channels(int level) const { return base_channels << level; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::ordered_json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ModelOutput {
  Var primary;             // depth, or delta when residual; 1 channel, full size
  std::vector<Var> early;  // early[i] at input / 2^(i+1)
  std::optional<Var> rgb;  // 3 channels, full size
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  std::vector<const Parameter*> parameter_ptrs() const;
  std::size_t parameter_count() const;
  Parameter& parameter(const std::string& name);

  // rgb: N x 3 x H x W, depth_in: N x 1 x H x W, mask: N x 1 x H x W.
  // H and W must be divisible by 2^depth_levels.
  ModelOutput forward(Graph& g, const Tensor& rgb, const Tensor& depth_in, const Tensor* mask);

  // Residual models add the network output to `depth_in`; others return it.
  Var depth_prediction(Graph& g, const ModelOutput& out, const Tensor& depth_in) const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  Parameter& add_param(const std::string& name, Shape shape, double stddev, Rng& rng);

  ModelConfig cfg_;
  std::vector<Parameter> params_;
};

Tensor to_tensor(const RgbImage& rgb);
Tensor to_tensor(const ScalarGrid& d);
Tensor to_tensor(const ValidityMask& m);
// Stack single-sample tensors along the batch axis.
Tensor stack(const std::vector<const Tensor*>& items);

// The depth actually fed to the network: interpolate_fill(raw, mask) when the
// model uses interpolated input, otherwise the raw map with zeros in holes.
DepthMap prepare_input_depth(const ModelConfig& cfg, const DepthMap& raw, const ValidityMask& mask);

// Full single-image inference, clamped to [0, depth_max].
DepthMap predict_depth(Model& m, const RgbImage& rgb, const DepthMap& depth_raw, const ValidityMask& mask);

// Batched inference on prepared inputs; returns N x 1 x H x W clamped depth.
Tensor predict_prepared(Model& m, const Tensor& rgb, const Tensor& depth_in, const Tensor& mask);

enum class AblationDirection { Incremental, Decremental };

std::string to_string(AblationDirection d);
AblationDirection ablation_direction_from_string(const std::string& s);

struct AblationVariant {
  std::string name;
  AblationDirection direction;
  ModelConfig model;
  bool full_criterion = false;  // gradient + smoothness terms in the depth loss
};

// Incremental baseline: U-connections, direct depth prediction, no mask,
// transpose convolutions, no early feedback, plain L1.
AblationVariant ablation_baseline();
// Decremental baseline: every feature switched on.
AblationVariant ablation_full();
AblationVariant ablation_config(const std::string& name, AblationDirection direction);
std::vector<std::string> ablation_rows(AblationDirection direction);

}  // namespace depthkit
