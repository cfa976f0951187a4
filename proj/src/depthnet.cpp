#include "depthkit/depthnet.hpp"

#include <algorithm>
#include <cmath>

#include "depthkit/errors.hpp"
#include "depthkit/weights_io.hpp"

namespace depthkit {

void ModelConfig::validate() const {
  if (depth_levels < 2) fail(ErrorCode::BadConfig, "depth_levels must be >= 2");
  if (early_heads < 0 || early_heads >= depth_levels) fail(ErrorCode::BadConfig, "early_heads must lie in [0, depth_levels)");
  if (base_channels < 4) fail(ErrorCode::BadConfig, "base_channels must be >= 4");
  if (!(depth_max > 0.0)) fail(ErrorCode::BadConfig, "depth_max must be positive");
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["use_unet"] = c.use_unet;
  j["use_unpool"] = c.use_unpool;
  j["residual"] = c.residual;
  j["use_mask_input"] = c.use_mask_input;
  j["use_interp_input"] = c.use_interp_input;
  j["early_heads"] = c.early_heads;
  j["rgb_head"] = c.rgb_head;
  j["base_channels"] = c.base_channels;
  j["depth_levels"] = c.depth_levels;
  j["depth_max"] = c.depth_max;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.use_unet = j.value("use_unet", c.use_unet);
    c.use_unpool = j.value("use_unpool", c.use_unpool);
    c.residual = j.value("residual", c.residual);
    c.use_mask_input = j.value("use_mask_input", c.use_mask_input);
    c.use_interp_input = j.value("use_interp_input", c.use_interp_input);
    c.early_heads = j.value("early_heads", c.early_heads);
    c.rgb_head = j.value("rgb_head", c.rgb_head);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.depth_levels = j.value("depth_levels", c.depth_levels);
    c.depth_max = j.value("depth_max", c.depth_max);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Parameter& Model::add_param(const std::string& name, Shape shape, double stddev, Rng& rng) {
  Tensor t(shape, 0);
  if (stddev > 0.0)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(stddev * rng.normal());
  params_.push_back(Parameter{name, std::move(t), Tensor(shape, 0)});
  return params_.back();
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int levels = cfg_.depth_levels;
  auto he = [](int fan_in) { return std::sqrt(2.0 / fan_in); };

  // Reserve so Parameter addresses stay stable for Graph::param.
  params_.reserve(static_cast<std::size_t>(8 * levels + 8));

  int in = cfg_.input_channels();
  for (int l = 0; l < levels; ++l) {
    const int c = cfg_.channels(l);
    add_param("enc" + std::to_string(l) + ".w", {c, in, 3, 3}, he(in * 9), rng);
    add_param("enc" + std::to_string(l) + ".b", {1, c, 1, 1}, 0.0, rng);
    in = c;
  }
  for (int l = levels - 1; l >= 0; --l) {
    const int c = cfg_.channels(l);
    const int from = l == levels - 1 ? cfg_.channels(levels - 1) : cfg_.channels(l + 1);
    const std::string p = "dec" + std::to_string(l);
    add_param(p + ".reduce.w", {c, from, 3, 3}, he(from * 9), rng);
    add_param(p + ".reduce.b", {1, c, 1, 1}, 0.0, rng);
    if (!cfg_.use_unpool) {
      add_param(p + ".up.w", {c, c, 2, 2}, he(c), rng);
      add_param(p + ".up.b", {1, c, 1, 1}, 0.0, rng);
    }
    add_param(p + ".refine.w", {c, c, 3, 3}, he(c * 9), rng);
    add_param(p + ".refine.b", {1, c, 1, 1}, 0.0, rng);
  }
  for (int i = 0; i < cfg_.early_heads; ++i) {
    const int c = cfg_.channels(i + 1);
    add_param("early" + std::to_string(i) + ".w", {1, c, 1, 1}, 0.1 * std::sqrt(1.0 / c), rng);
    add_param("early" + std::to_string(i) + ".b", {1, 1, 1, 1}, 0.0, rng);
  }
  const int c0 = cfg_.channels(0);
  // bias-free final layer: zero weights give a zero correction
  add_param("head.w", {1, c0, 1, 1}, 0.1 * std::sqrt(1.0 / c0), rng);
  if (cfg_.rgb_head) {
    add_param("rgb.w", {3, c0, 1, 1}, 0.1 * std::sqrt(1.0 / c0), rng);
    add_param("rgb.b", {1, 3, 1, 1}, 0.0, rng);
  }
}

std::vector<Parameter*> Model::parameter_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> Model::parameter_ptrs() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Parameter& Model::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail(ErrorCode::BadConfig, "no parameter named " + name);
}

ModelOutput Model::forward(Graph& g, const Tensor& rgb, const Tensor& depth_in, const Tensor* mask) {
  const Shape rs = rgb.shape(), ds = depth_in.shape();
  if (rs.c != 3 || ds.c != 1 || rs.n != ds.n || rs.h != ds.h || rs.w != ds.w) {
    fail(ErrorCode::ShapeMismatch, "forward expects rgb N x 3 x H x W and depth N x 1 x H x W, got " + to_string(rs) +
                                       " and " + to_string(ds));
  }
  if (cfg_.use_mask_input && !mask) fail(ErrorCode::MissingMask, "model was built with a validity-mask input");
  const int levels = cfg_.depth_levels;
  const int div = 1 << levels;
  if (rs.h % div != 0 || rs.w % div != 0) {
    fail(ErrorCode::ShapeMismatch, "input size must be divisible by " + std::to_string(div));
  }

  Var x = concat_channels(g, g.constant(rgb), g.constant(depth_in));
  if (cfg_.use_mask_input) {
    if (mask->shape() != ds) fail(ErrorCode::ShapeMismatch, "mask shape " + to_string(mask->shape()));
    x = concat_channels(g, x, g.constant(*mask));
  }

  auto conv = [&](Var in, const std::string& name, int pad, bool with_bias) {
    Var w = g.param(parameter(name + ".w"));
    std::optional<Var> b;
    if (with_bias) b = g.param(parameter(name + ".b"));
    return conv2d(g, in, w, b, 1, pad);
  };

  std::vector<Var> skips;
  std::vector<PoolIndices> pools;
  for (int l = 0; l < levels; ++l) {
    Var h = relu(g, conv(x, "enc" + std::to_string(l), 1, true));
    skips.push_back(h);
    PoolResult pr = maxpool2d(g, h);
    pools.push_back(std::move(pr.indices));
    x = pr.out;
  }

  ModelOutput out;
  out.early.resize(static_cast<std::size_t>(cfg_.early_heads));
  for (int l = levels - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    x = relu(g, conv(x, p + ".reduce", 1, true));
    const Shape target = g.value(skips[static_cast<std::size_t>(l)]).shape();
    if (cfg_.use_unpool) {
      x = max_unpool2d(g, x, pools[static_cast<std::size_t>(l)], target);
    } else {
      x = transpose_conv2d(g, x, g.param(parameter(p + ".up.w")), g.param(parameter(p + ".up.b")), 2);
    }
    x = relu(g, conv(x, p + ".refine", 1, true));
    if (cfg_.use_unet) x = add(g, x, skips[static_cast<std::size_t>(l)]);
    if (l >= 1 && l - 1 < cfg_.early_heads) {
      out.early[static_cast<std::size_t>(l - 1)] = conv(x, "early" + std::to_string(l - 1), 0, true);
    }
  }
  out.primary = conv(x, "head", 0, false);
  if (cfg_.rgb_head) out.rgb = conv(x, "rgb", 0, true);
  return out;
}

Var Model::depth_prediction(Graph& g, const ModelOutput& out, const Tensor& depth_in) const {
  if (!cfg_.residual) return out.primary;
  return add(g, out.primary, g.constant(depth_in));
}

void Model::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["model_config"] = nlohmann::json::parse(model_config_to_json(cfg_).dump());
  const auto ptrs = parameter_ptrs();
  save_weights(path, ptrs, meta);
}

Model Model::load(const std::filesystem::path& path) {
  const WeightFile wf = load_weights(path);
  if (!wf.meta.contains("model_config")) fail(ErrorCode::Parse, "weight file has no model_config: " + path.string());
  Model m(model_config_from_json(wf.meta.at("model_config")), 0);
  if (wf.tensors.size() != m.params_.size()) fail(ErrorCode::Parse, "tensor count does not match model config");
  for (const auto& t : wf.tensors) {
    Parameter& p = m.parameter(t.name);
    if (p.value.shape() != t.value.shape()) fail(ErrorCode::ShapeMismatch, "stored shape differs for " + t.name);
    p.value = t.value;
  }
  return m;
}

Tensor to_tensor(const RgbImage& rgb) {
  Tensor t(Shape{1, 3, rgb.height(), rgb.width()});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < rgb.height(); ++i)
      for (int j = 0; j < rgb.width(); ++j) t.at(0, c, i, j) = static_cast<Scalar>(rgb(i, j)[static_cast<std::size_t>(c)]);
  return t;
}

Tensor to_tensor(const ScalarGrid& d) {
  Tensor t(Shape{1, 1, d.height(), d.width()});
  for (std::size_t i = 0; i < d.size(); ++i) t[i] = static_cast<Scalar>(d[i]);
  return t;
}

Tensor to_tensor(const ValidityMask& m) {
  Tensor t(Shape{1, 1, m.height(), m.width()});
  for (std::size_t i = 0; i < m.size(); ++i) t[i] = m.valid(i) ? 1 : 0;
  return t;
}

Tensor stack(const std::vector<const Tensor*>& items) {
  if (items.empty()) fail(ErrorCode::ShapeMismatch, "stack of nothing");
  Shape s = items.front()->shape();
  int n = 0;
  for (const Tensor* t : items) {
    const Shape ts = t->shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w) fail(ErrorCode::ShapeMismatch, "stack of mismatched tensors");
    n += ts.n;
  }
  s.n = n;
  Tensor out(s);
  std::size_t at = 0;
  for (const Tensor* t : items) {
    std::copy(t->values().begin(), t->values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
    at += t->size();
  }
  return out;
}

DepthMap prepare_input_depth(const ModelConfig& cfg, const DepthMap& raw, const ValidityMask& mask) {
  if (!raw.same_shape(mask)) fail(ErrorCode::DimensionMismatch, "depth and mask differ in size");
  if (cfg.use_interp_input) return interpolate_fill(raw, mask);
  DepthMap d = raw;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!mask.valid(i)) d[i] = 0.0;
  return d;
}

Tensor predict_prepared(Model& m, const Tensor& rgb, const Tensor& depth_in, const Tensor& mask) {
  Graph g;
  const ModelOutput out = m.forward(g, rgb, depth_in, m.config().use_mask_input ? &mask : nullptr);
  Tensor pred = g.value(m.depth_prediction(g, out, depth_in));
  const auto hi = static_cast<Scalar>(m.config().depth_max);
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = std::clamp(pred[i], Scalar(0), hi);
  return pred;
}

DepthMap predict_depth(Model& m, const RgbImage& rgb, const DepthMap& depth_raw, const ValidityMask& mask) {
  if (!rgb.same_shape(depth_raw)) fail(ErrorCode::DimensionMismatch, "rgb and depth differ in size");
  const DepthMap d_in = prepare_input_depth(m.config(), depth_raw, mask);
  const Tensor pred = predict_prepared(m, to_tensor(rgb), to_tensor(d_in), to_tensor(mask));
  DepthMap out(depth_raw.width(), depth_raw.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred[i];
  return out;
}

std::string to_string(AblationDirection d) { return d == AblationDirection::Incremental ? "incremental" : "decremental"; }

AblationDirection ablation_direction_from_string(const std::string& s) {
  if (s == "incremental") return AblationDirection::Incremental;
  if (s == "decremental") return AblationDirection::Decremental;
  fail(ErrorCode::BadConfig, "direction must be incremental or decremental, got " + s);
}

AblationVariant ablation_baseline() {
  AblationVariant v{"+Unet", AblationDirection::Incremental, {}, false};
  v.model.use_unet = true;
  v.model.use_unpool = false;
  v.model.residual = false;
  v.model.use_mask_input = false;
  v.model.use_interp_input = false;
  v.model.early_heads = 0;
  v.model.rgb_head = false;
  return v;
}

AblationVariant ablation_full() {
  AblationVariant v{"full", AblationDirection::Decremental, {}, true};
  v.model.use_unet = true;
  v.model.use_unpool = true;
  v.model.residual = true;
  v.model.use_mask_input = true;
  v.model.use_interp_input = true;
  v.model.early_heads = v.model.depth_levels - 1;
  v.model.rgb_head = true;
  return v;
}

std::vector<std::string> ablation_rows(AblationDirection direction) {
  if (direction == AblationDirection::Incremental) {
    return {"+Unet", "criterion", "dol", "mask", "unpool", "delta", "delta-interp-mask"};
  }
  return {"full", "criterion", "dol", "mask", "unpool", "delta", "interp", "delta-interp"};
}

AblationVariant ablation_config(const std::string& name, AblationDirection direction) {
  const auto rows = ablation_rows(direction);
  if (std::find(rows.begin(), rows.end(), name) == rows.end()) {
    fail(ErrorCode::UnknownExperiment, "no " + to_string(direction) + " experiment named '" + name + "'");
  }
  if (direction == AblationDirection::Incremental) {
    AblationVariant v = ablation_baseline();
    v.name = name;
    ModelConfig& m = v.model;
    if (name == "criterion") v.full_criterion = true;
    if (name == "dol") m.early_heads = m.depth_levels - 1;
    if (name == "mask") m.use_mask_input = true;
    if (name == "unpool") m.use_unpool = true;
    if (name == "delta") m.residual = m.use_interp_input = true;
    if (name == "delta-interp-mask") m.residual = m.use_interp_input = m.use_mask_input = true;
    return v;
  }
  AblationVariant v = ablation_full();
  v.name = name;
  ModelConfig& m = v.model;
  if (name == "criterion") v.full_criterion = false;
  if (name == "dol") m.early_heads = 0;
  if (name == "mask") m.use_mask_input = false;
  if (name == "unpool") m.use_unpool = false;
  if (name == "delta") m.residual = false;
  if (name == "interp") m.use_interp_input = false;
  if (name == "delta-interp") m.residual = m.use_interp_input = false;
  return v;
}

}  // namespace depthkit
