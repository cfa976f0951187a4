#pragma once

// Randomized gradient-check problems shared by the unit tests and the
// acceptance binary. Each case builds its own parameters from a seed and
// returns the max relative error reported by grad_check.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "depthkit/autograd.hpp"
#include "depthkit/depthnet.hpp"
#include "depthkit/losses.hpp"
#include "depthkit/rng.hpp"

namespace gradcases {

using namespace depthkit;

// Values in [-1, 1] kept at least 0.05 away from zero (relu and L1 kinks).
inline Tensor away_from_zero(Shape s, Rng& rng) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = rng.uniform(0.05, 1.0);
    t[i] = rng.uniform() < 0.5 ? -v : v;
  }
  return t;
}

inline Parameter param(const std::string& name, Shape s, Rng& rng) { return {name, away_from_zero(s, rng), {}}; }

inline Tensor ones(Shape s) { return Tensor(s, 1); }

// Smooth scalar readout of an arbitrary tensor: mean squared distance to a
// fixed random target.
inline Var readout(Graph& g, Var x, const Tensor& target) {
  return distance(g, {DistanceKind::L2, 1.0}, x, g.constant(target), ones(target.shape()));
}

inline Tensor target_like(Graph& g, Var x, Rng& rng) { return away_from_zero(g.value(x).shape(), rng); }

struct Case {
  std::string name;
  std::function<double(std::uint64_t)> run;
};

inline double check(std::vector<Parameter*> ps, const std::function<Var(Graph&)>& build, std::size_t max_el = 0,
                    double eps = 1e-5) {
  GradCheckOptions o;
  o.max_elements_per_param = max_el;
  o.eps = eps;
  return grad_check(build, ps, o);
}

inline std::vector<Case> op_cases() {
  std::vector<Case> cases;

  cases.push_back({"conv2d", [](std::uint64_t seed) {
    Rng rng(seed);
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(2));
    auto x = param("x", {2, 2, 6, 6}, rng), w = param("w", {3, 2, 3, 3}, rng), b = param("b", {1, 3, 1, 1}, rng);
    Tensor target;
    return check({&x, &w, &b}, [&](Graph& g) {
      Var y = conv2d(g, g.param(x), g.param(w), g.param(b), stride, pad);
      if (target.size() == 0) target = target_like(g, y, rng);
      return readout(g, y, target);
    });
  }});

  cases.push_back({"transpose_conv2d", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = param("x", {2, 3, 3, 4}, rng), w = param("w", {3, 2, 2, 2}, rng), b = param("b", {1, 2, 1, 1}, rng);
    Tensor target;
    return check({&x, &w, &b}, [&](Graph& g) {
      Var y = transpose_conv2d(g, g.param(x), g.param(w), g.param(b), 2);
      if (target.size() == 0) target = target_like(g, y, rng);
      return readout(g, y, target);
    });
  }});

  cases.push_back({"relu", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = param("x", {1, 2, 4, 5}, rng);
    Tensor target;
    return check({&x}, [&](Graph& g) {
      Var y = relu(g, g.param(x));
      if (target.size() == 0) target = target_like(g, y, rng);
      return readout(g, y, target);
    });
  }});

  cases.push_back({"maxpool2d+max_unpool2d", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = param("x", {2, 2, 6, 4}, rng);
    Tensor t1, t2;
    return check({&x}, [&](Graph& g) {
      Var xv = g.param(x);
      PoolResult p = maxpool2d(g, xv);
      if (t1.size() == 0) t1 = target_like(g, p.out, rng);
      Var u = max_unpool2d(g, p.out, p.indices, g.value(xv).shape());
      if (t2.size() == 0) t2 = target_like(g, u, rng);
      return add(g, readout(g, p.out, t1), readout(g, u, t2));
    });
  }});

  cases.push_back({"add+concat+scale+sum+mean", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = param("x", {1, 2, 3, 3}, rng), y = param("y", {1, 2, 3, 3}, rng), z = param("z", {1, 1, 3, 3}, rng);
    Tensor target;
    return check({&x, &y, &z}, [&](Graph& g) {
      Var s = add(g, g.param(x), scale(g, g.param(y), -1.7));
      Var c = concat_channels(g, s, g.param(z));
      if (target.size() == 0) target = target_like(g, c, rng);
      Var r = readout(g, c, target);
      return add(g, add(g, r, scale(g, sum(g, c), 0.3)), mean(g, g.param(z)));
    });
  }});

  cases.push_back({"spatial_gradient", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = param("x", {2, 2, 5, 6}, rng);
    Tensor target;
    return check({&x}, [&](Graph& g) {
      Var y = spatial_gradient(g, g.param(x));
      if (target.size() == 0) target = target_like(g, y, rng);
      return readout(g, y, target);
    });
  }});

  cases.push_back({"laplacian_energy", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = param("x", {2, 1, 5, 6}, rng);
    return check({&x}, [&](Graph& g) { return mean(g, laplacian_energy(g, g.param(x))); });
  }});

  for (auto kind : {DistanceKind::L1, DistanceKind::L2, DistanceKind::Huber, DistanceKind::AdaptiveHuber,
                    DistanceKind::RHuber}) {
    cases.push_back({"distance:" + to_string(kind), [kind](std::uint64_t seed) {
      Rng rng(seed);
      const Shape s{1, 1, 5, 5};
      auto a = param("a", s, rng);
      // b = a + e with |e| spread over [0.063, 1.263]: no ties, and clear of
      // the Huber kink at 0.6 and the berHu switch at 0.2 max|e|.
      Parameter b{"b", a.value, {}};
      std::vector<double> mags;
      for (std::size_t i = 0; i < b.value.size(); ++i) mags.push_back(0.063 + 0.05 * static_cast<double>(i));
      rng.shuffle(mags.begin(), mags.end());
      for (std::size_t i = 0; i < b.value.size(); ++i) {
        b.value[i] += (rng.uniform() < 0.5 ? -1 : 1) * mags[i];
      }
      Tensor mask(s, 1);
      mask[3] = 0;
      mask[17] = 0;
      return check({&a, &b}, [&](Graph& g) { return distance(g, {kind, 0.6}, g.param(a), g.param(b), mask); });
    }});
  }
  return cases;
}

// Full model with every feature on plus the composite loss.
inline double model_case(std::uint64_t seed, bool unpool, std::size_t max_el = 6) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.use_unpool = unpool;
  cfg.early_heads = 2;
  cfg.rgb_head = true;
  cfg.base_channels = 4;
  cfg.depth_levels = 3;
  Model model(cfg, seed);
  // Non-trivial head weights so every branch carries gradient. Zero biases
  // would put every all-zero window exactly on the relu kink.
  for (auto& p : model.parameters()) {
    if (p.name == "head.w") p.value = away_from_zero(p.value.shape(), rng);
    if (p.name.ends_with(".b")) {
      p.value = away_from_zero(p.value.shape(), rng);
      for (auto& v : p.value.values()) v *= 0.1;
    }
  }

  const Shape s{1, 1, 16, 16};
  Tensor rgb({1, 3, 16, 16}), depth(s), mask(s, 1);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = rng.uniform();
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = rng.uniform(0.6, 1.2);
  LossTargets t;
  t.rgb = rgb;
  t.gt = Tensor(s);
  t.gt_mask = Tensor(s);
  for (std::size_t i = 0; i < t.gt.size(); ++i) {
    t.gt[i] = depth[i] + rng.uniform(-0.2, 0.2);
    t.gt_mask[i] = rng.uniform() < 0.8 ? 1 : 0;
  }
  for (int i = 0; i < cfg.early_heads; ++i) {
    const int f = 2 << i;
    const Shape es{1, 1, 16 / f, 16 / f};
    Tensor e(es), m(es, 1);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = rng.uniform(0.6, 1.2);
    t.early_gt.push_back(e);
    t.early_mask.push_back(m);
  }
  const LossWeights w;  // every term active
  auto build = [&](Graph& g) {
    const ModelOutput out = model.forward(g, rgb, depth, &mask);
    return total_loss(g, model.depth_prediction(g, out, depth), out, t, w, {DistanceKind::L2, 1.0});
  };
  // A smaller step keeps the stencil clear of relu and pooling switches
  // that sit within 1e-5 of some activation.
  return check(model.parameter_ptrs(), build, max_el, 1e-6);
}

}  // namespace gradcases
