#include "depthkit/losses.hpp"

#include <string>

#include "depthkit/errors.hpp"

namespace depthkit {

void LossWeights::validate() const {
  for (double v : {w1, w2, w3, wp, wg, ws}) {
    if (!(v >= 0.0)) fail(ErrorCode::BadConfig, "loss weights must be non-negative");
  }
  if (!(w1 > 0.0)) fail(ErrorCode::BadConfig, "w1 must be positive");
}

nlohmann::ordered_json loss_weights_to_json(const LossWeights& w) {
  nlohmann::ordered_json j;
  j["w1"] = w.w1;
  j["w2"] = w.w2;
  j["w3"] = w.w3;
  j["wp"] = w.wp;
  j["wg"] = w.wg;
  j["ws"] = w.ws;
  return j;
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  try {
    w.w1 = j.value("w1", w.w1);
    w.w2 = j.value("w2", w.w2);
    w.w3 = j.value("w3", w.w3);
    w.wp = j.value("wp", w.wp);
    w.wg = j.value("wg", w.wg);
    w.ws = j.value("ws", w.ws);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("loss weights: ") + e.what());
  }
  w.validate();
  return w;
}

Tensor gradient_pair_mask(const Tensor& mask) {
  const Shape s = mask.shape();
  Tensor out(Shape{s.n, 2 * s.c, s.h, s.w}, 0);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) {
          const bool here = mask.at(n, c, i, j) != 0;
          if (j + 1 < s.w && here && mask.at(n, c, i, j + 1) != 0) out.at(n, c, i, j) = 1;
          if (i + 1 < s.h && here && mask.at(n, c, i + 1, j) != 0) out.at(n, s.c + c, i, j) = 1;
        }
  return out;
}

namespace {

Tensor spatial_gradient_of(const Tensor& t) {
  Graph g;
  return g.value(spatial_gradient(g, g.constant(t)));
}

Var weighted_sum(Graph& g, const std::vector<std::pair<double, Var>>& terms) {
  std::optional<Var> acc;
  for (const auto& [w, v] : terms) {
    if (w == 0.0) continue;
    Var s = w == 1.0 ? v : scale(g, v, static_cast<Scalar>(w));
    acc = acc ? add(g, *acc, s) : s;
  }
  if (!acc) return g.constant(Tensor(Shape{1, 1, 1, 1}, 0));
  return *acc;
}

}  // namespace

Var depth_loss(Graph& g, Var d_hat, const Tensor& gt, const Tensor& mask, const LossWeights& w, const Distance& dist) {
  const Tensor& pv = g.value(d_hat);
  if (pv.shape() != gt.shape() || mask.shape() != gt.shape()) {
    fail(ErrorCode::ShapeMismatch, "depth_loss shapes " + to_string(pv.shape()) + " vs " + to_string(gt.shape()));
  }
  std::vector<std::pair<double, Var>> terms;
  if (w.wp > 0.0) terms.emplace_back(w.wp, distance(g, dist, d_hat, g.constant(gt), mask));
  if (w.wg > 0.0) {
    terms.emplace_back(w.wg, distance(g, dist, spatial_gradient(g, d_hat), g.constant(spatial_gradient_of(gt)),
                                      gradient_pair_mask(mask)));
  }
  if (w.ws > 0.0) terms.emplace_back(w.ws, mean(g, laplacian_energy(g, d_hat)));
  return weighted_sum(g, terms);
}

Var total_loss(Graph& g, Var d_hat, const ModelOutput& out, const LossTargets& t, const LossWeights& w,
               const Distance& dist) {
  w.validate();
  std::vector<std::pair<double, Var>> terms;
  terms.emplace_back(w.w1, depth_loss(g, d_hat, t.gt, t.gt_mask, w, dist));

  if (w.w2 > 0.0 && !out.early.empty()) {
    if (t.early_gt.size() < out.early.size() || t.early_mask.size() < out.early.size()) {
      fail(ErrorCode::ShapeMismatch, "missing early-feedback targets");
    }
    std::vector<std::pair<double, Var>> heads;
    const double each = 1.0 / static_cast<double>(out.early.size());
    for (std::size_t i = 0; i < out.early.size(); ++i) {
      heads.emplace_back(each, distance(g, dist, out.early[i], g.constant(t.early_gt[i]), t.early_mask[i]));
    }
    terms.emplace_back(w.w2, weighted_sum(g, heads));
  }

  if (w.w3 > 0.0 && out.rgb) {
    terms.emplace_back(w.w3, distance(g, dist, *out.rgb, g.constant(t.rgb), Tensor(t.rgb.shape(), 1)));
  }
  return weighted_sum(g, terms);
}

}  // namespace depthkit
