#pragma once

// Training objective:
//   L       = w1 L_depth + w2 L_early + w3 L_rgb
//   L_depth = wp l(d_hat, d) + wg l(grad d_hat, grad d) + ws mean(lap_energy(d_hat))
// All depth terms are restricted to pixels where the ground truth is valid;
// the smoothness term depends only on the prediction and covers every pixel.

#include <optional>
#include <vector>

#include <json.hpp>

#include "depthkit/autograd.hpp"
#include "depthkit/depthnet.hpp"

namespace depthkit {

struct LossWeights {
  double w1 = 1.0;
  double w2 = 0.5;
  double w3 = 0.25;
  double wp = 1.0;
  double wg = 0.5;
  double ws = 0.1;

  void validate() const;
};

nlohmann::ordered_json loss_weights_to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

// d_hat: N x 1 x H x W prediction; gt, mask: same shape constants.
Var depth_loss(Graph& g, Var d_hat, const Tensor& gt, const Tensor& mask, const LossWeights& w, const Distance& dist);

struct LossTargets {
  Tensor gt;                       // N x 1 x H x W
  Tensor gt_mask;                  // 1 where the ground truth is valid
  Tensor rgb;                      // N x 3 x H x W input frame
  std::vector<Tensor> early_gt;    // early_gt[i] at 1 / 2^(i+1)
  std::vector<Tensor> early_mask;
};

// Mask of forward-difference pairs whose both endpoints are valid, laid out
// like spatial_gradient output (dx channels, then dy channels).
Tensor gradient_pair_mask(const Tensor& mask);

Var total_loss(Graph& g, Var d_hat, const ModelOutput& out, const LossTargets& t, const LossWeights& w,
               const Distance& dist);

}  // namespace depthkit
