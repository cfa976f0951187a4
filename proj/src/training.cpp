#include "depthkit/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <thread>
#include <tuple>

#include "depthkit/errors.hpp"
#include "depthkit/rng.hpp"

namespace depthkit {
namespace {

struct Holdout {
  std::vector<std::size_t> train, held;
};

// Scenes are shuffled and the first round(holdout * scenes) are held out;
// at least one scene stays on each side.
Holdout scene_holdout(const DatasetHandle& ds, double holdout, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_scene;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_scene[ds.samples[i].scene_id].push_back(i);
  if (by_scene.size() < 2) fail(ErrorCode::EmptyDataset, "holdout needs at least two scenes in " + ds.manifest.string());
  std::vector<int> scenes;
  for (const auto& [id, idx] : by_scene) scenes.push_back(id);
  Rng rng(seed);
  rng.shuffle(scenes.begin(), scenes.end());
  auto n_held = static_cast<std::size_t>(std::lround(holdout * static_cast<double>(scenes.size())));
  n_held = std::clamp<std::size_t>(n_held, 1, scenes.size() - 1);
  std::vector<int> held(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_held));
  Holdout h;
  for (const auto& [id, idx] : by_scene) {
    auto& dst = std::find(held.begin(), held.end(), id) != held.end() ? h.held : h.train;
    dst.insert(dst.end(), idx.begin(), idx.end());
  }
  return h;
}

SampleRef ref(const DatasetHandle& ds, std::size_t which, std::size_t index) {
  return {which, index, ds.samples[index].id};
}

// Merges two sequences so that every prefix keeps their proportions.
std::vector<SampleRef> interleave(const std::vector<SampleRef>& a, const std::vector<SampleRef>& b) {
  std::vector<SampleRef> out;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() || ib < b.size()) {
    const bool take_a = ib == b.size() ||
                        (ia < a.size() && (ia + 1) * b.size() <= (ib + 1) * a.size());
    out.push_back(take_a ? a[ia++] : b[ib++]);
  }
  return out;
}

Tensor batch_of(const std::vector<const PreparedSample*>& items, Tensor PreparedSample::*field) {
  std::vector<const Tensor*> ts;
  for (const auto* s : items) ts.push_back(&(s->*field));
  return stack(ts);
}

LossTargets targets_of(const std::vector<const PreparedSample*>& items) {
  LossTargets t;
  t.gt = batch_of(items, &PreparedSample::gt);
  t.gt_mask = batch_of(items, &PreparedSample::gt_mask);
  t.rgb = batch_of(items, &PreparedSample::rgb);
  const std::size_t heads = items.front()->early_gt.size();
  for (std::size_t i = 0; i < heads; ++i) {
    std::vector<const Tensor*> g, m;
    for (const auto* s : items) {
      g.push_back(&s->early_gt[i]);
      m.push_back(&s->early_mask[i]);
    }
    t.early_gt.push_back(stack(g));
    t.early_mask.push_back(stack(m));
  }
  return t;
}

struct BatchResult {
  double loss;
  Tensor prediction;
};

BatchResult run_batch(Model& model, const ExperimentConfig& cfg, const std::vector<const PreparedSample*>& items,
                      bool learn, double lr, AdamState* adam) {
  const Tensor rgb = batch_of(items, &PreparedSample::rgb);
  const Tensor depth_in = batch_of(items, &PreparedSample::depth_in);
  const Tensor mask = batch_of(items, &PreparedSample::mask);
  const LossTargets targets = targets_of(items);

  Graph g;
  const ModelOutput out = model.forward(g, rgb, depth_in, model.config().use_mask_input ? &mask : nullptr);
  const Var d_hat = model.depth_prediction(g, out, depth_in);
  const Var loss = total_loss(g, d_hat, out, targets, cfg.loss, cfg.distance);
  const double value = static_cast<double>(g.value(loss)[0]);
  if (!std::isfinite(value)) fail(ErrorCode::NonFinite, "loss is not finite");

  BatchResult r{value, {}};
  if (learn) {
    auto params = model.parameter_ptrs();
    zero_grad(params);
    g.backward(loss);
    if (cfg.optimizer.kind == "sgd") {
      sgd_step(params, lr, cfg.optimizer.weight_decay);
    } else {
      adam_step(*adam, params, lr, cfg.optimizer.weight_decay);
    }
  } else {
    r.prediction = g.value(d_hat);
  }
  return r;
}

std::string batch_label(int epoch, std::size_t batch, const std::vector<const PreparedSample*>& items) {
  std::string ids;
  for (const auto* s : items) ids += (ids.empty() ? "" : " ") + s->id;
  return "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + " [" + ids + "]";
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

Split holdout_split(const DatasetHandle& ds, double holdout, std::uint64_t seed) {
  if (ds.samples.empty()) fail(ErrorCode::EmptyDataset, "dataset is empty: " + ds.manifest.string());
  const Holdout h = scene_holdout(ds, holdout, derive_seed(seed, 0));
  Split s;
  for (auto i : h.train) s.train.push_back(ref(ds, 0, i));
  for (auto i : h.held) s.val.push_back(ref(ds, 0, i));
  Rng rng(derive_seed(seed, 2));
  rng.shuffle(s.train.begin(), s.train.end());
  return s;
}

Split mix_datasets(const DatasetHandle& a, const DatasetHandle& b, const MixOptions& opt) {
  if (a.samples.empty() || b.samples.empty()) fail(ErrorCode::EmptyDataset, "both datasets must be non-empty");
  for (double v : {opt.train_ratio, opt.val_weight_a}) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::BadConfig, "mixing ratios must lie in [0, 1]");
  }
  if (!(opt.holdout > 0.0 && opt.holdout < 1.0)) fail(ErrorCode::BadConfig, "holdout must lie in (0, 1)");

  const Holdout ha = scene_holdout(a, opt.holdout, derive_seed(opt.seed, 0));
  const Holdout hb = scene_holdout(b, opt.holdout, derive_seed(opt.seed, 1));
  Rng rng(derive_seed(opt.seed, 2));

  auto refs = [&](const DatasetHandle& ds, std::size_t which, const std::vector<std::size_t>& idx) {
    std::vector<SampleRef> out;
    for (auto i : idx) out.push_back(ref(ds, which, i));
    rng.shuffle(out.begin(), out.end());
    return out;
  };
  std::vector<SampleRef> ta = refs(a, 0, ha.train), tb = refs(b, 1, hb.train);
  std::vector<SampleRef> va = refs(a, 0, ha.held), vb = refs(b, 1, hb.held);

  // largest counts with n_a : n_b = r : (1 - r)
  const double r = opt.train_ratio;
  const auto A = static_cast<double>(ta.size()), B = static_cast<double>(tb.size());
  std::size_t na = ta.size(), nb = tb.size();
  if (r == 0.0) {
    na = 0;
  } else if (r == 1.0) {
    nb = 0;
  } else {
    na = static_cast<std::size_t>(std::floor(std::min(A, B * r / (1.0 - r)) + 1e-9));
    nb = static_cast<std::size_t>(std::floor(std::min(B, A * (1.0 - r) / r) + 1e-9));
  }
  ta.resize(na);
  tb.resize(nb);

  Split s;
  s.train = interleave(ta, tb);
  const std::size_t n_val = va.size() + vb.size();
  const auto count_a = static_cast<std::size_t>(std::lround(opt.val_weight_a * static_cast<double>(n_val)));
  std::vector<SampleRef> pick_a, pick_b;
  for (std::size_t i = 0; i < count_a; ++i) pick_a.push_back(va[i % va.size()]);
  for (std::size_t i = 0; i < n_val - count_a; ++i) pick_b.push_back(vb[i % vb.size()]);
  s.val = interleave(pick_a, pick_b);
  return s;
}

std::vector<Sample> load_samples(const std::vector<const DatasetHandle*>& datasets, const std::vector<SampleRef>& refs) {
  std::vector<Sample> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(load_sample(*datasets.at(r.dataset), r.index));
  return out;
}

double OptimizerConfig::lr_at(int epoch) const {
  return lr * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
}

void ExperimentConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr)) fail(ErrorCode::BadConfig, "lr must be non-negative");
  if (optimizer.kind != "adam" && optimizer.kind != "sgd") fail(ErrorCode::BadConfig, "optimizer must be adam or sgd");
  if (!(optimizer.decay_factor > 0.0)) fail(ErrorCode::BadConfig, "lr decay factor must be positive");
  if (optimizer.decay_every < 1) fail(ErrorCode::BadConfig, "lr decay interval must be >= 1");
  if (!(optimizer.weight_decay >= 0.0)) fail(ErrorCode::BadConfig, "weight decay must be non-negative");
  if (batch_size < 1) fail(ErrorCode::BadConfig, "batch_size must be >= 1");
  if (epochs < 1) fail(ErrorCode::BadConfig, "epochs must be >= 1");
  if (!(mix.train_ratio >= 0.0 && mix.train_ratio <= 1.0)) fail(ErrorCode::BadConfig, "mix ratio must lie in [0, 1]");
  if (!(mix.val_weight_a >= 0.0 && mix.val_weight_a <= 1.0)) fail(ErrorCode::BadConfig, "validation weight must lie in [0, 1]");
  if (!(mix.holdout > 0.0 && mix.holdout < 1.0)) fail(ErrorCode::BadConfig, "holdout must lie in (0, 1)");
  if (!(scale_b > 0.0)) fail(ErrorCode::BadFactor, "scale_b must be positive");
}

nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["model"] = model_config_to_json(c.model);
  j["loss"] = loss_weights_to_json(c.loss);
  j["distance"] = {{"kind", to_string(c.distance.kind)}, {"delta", c.distance.delta}};
  j["optimizer"] = {{"kind", c.optimizer.kind},
                    {"lr", c.optimizer.lr},
                    {"lr_decay", {{"factor", c.optimizer.decay_factor}, {"every_n_epochs", c.optimizer.decay_every}}},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["mix"] = {{"train_ratio", c.mix.train_ratio}, {"val_weight_a", c.mix.val_weight_a}, {"holdout", c.mix.holdout}};
  j["data"] = {{"a", c.dataset_a}, {"b", c.dataset_b}, {"scale_b", c.scale_b}};
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) fail(ErrorCode::Parse, "experiment config must be a JSON object");
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("loss")) c.loss = loss_weights_from_json(j.at("loss"));
    if (j.contains("distance")) {
      const auto& d = j.at("distance");
      c.distance.kind = distance_kind_from_string(d.value("kind", to_string(c.distance.kind)));
      c.distance.delta = d.value("delta", c.distance.delta);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.kind = o.value("kind", c.optimizer.kind);
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      if (o.contains("lr_decay")) {
        c.optimizer.decay_factor = o.at("lr_decay").value("factor", c.optimizer.decay_factor);
        c.optimizer.decay_every = o.at("lr_decay").value("every_n_epochs", c.optimizer.decay_every);
      }
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("mix")) {
      const auto& m = j.at("mix");
      c.mix.train_ratio = m.value("train_ratio", c.mix.train_ratio);
      c.mix.val_weight_a = m.value("val_weight_a", c.mix.val_weight_a);
      c.mix.holdout = m.value("holdout", c.mix.holdout);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.dataset_a = d.value("a", c.dataset_a);
      c.dataset_b = d.value("b", c.dataset_b);
      c.scale_b = d.value("scale_b", c.scale_b);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("experiment config: ") + e.what());
  }
  c.mix.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  ExperimentConfig c = experiment_config_from_json(j);
  // dataset paths are relative to the config file
  const auto base = path.parent_path();
  if (!c.dataset_a.empty() && std::filesystem::path(c.dataset_a).is_relative()) c.dataset_a = (base / c.dataset_a).string();
  if (!c.dataset_b.empty() && std::filesystem::path(c.dataset_b).is_relative()) c.dataset_b = (base / c.dataset_b).string();
  return c;
}

PreparedSample prepare_sample(const ModelConfig& cfg, const Sample& s) {
  PreparedSample p;
  p.id = s.id;
  p.rgb = to_tensor(s.rgb);
  p.depth_in = to_tensor(prepare_input_depth(cfg, s.depth_raw, s.mask));
  p.mask = to_tensor(s.mask);
  const ValidityMask gt_valid = ValidityMask::from_depth(s.depth_gt);
  p.gt = to_tensor(s.depth_gt);
  p.gt_mask = to_tensor(gt_valid);
  for (int i = 0; i < cfg.early_heads; ++i) {
    auto [d, m] = downsample_masked(s.depth_gt, gt_valid, 1 << (i + 1));
    p.early_gt.push_back(to_tensor(d));
    p.early_mask.push_back(to_tensor(m));
  }
  p.gt_map = s.depth_gt;
  p.raw_map = s.depth_raw;
  return p;
}

std::pair<double, MetricsReport> evaluate_model(Model& model, const ExperimentConfig& cfg,
                                               const std::vector<PreparedSample>& set) {
  if (set.empty()) fail(ErrorCode::EmptyDataset, "nothing to evaluate");
  MetricsAccumulator acc;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const auto hi = model.config().depth_max;
  for (std::size_t start = 0; start < set.size(); start += bs) {
    std::vector<const PreparedSample*> items;
    for (std::size_t i = start; i < std::min(set.size(), start + bs); ++i) items.push_back(&set[i]);
    const BatchResult r = run_batch(model, cfg, items, false, 0.0, nullptr);
    loss_sum += r.loss;
    ++batches;
    const std::size_t plane = r.prediction.shape().plane();
    for (std::size_t k = 0; k < items.size(); ++k) {
      const DepthMap& gt = items[k]->gt_map;
      for (std::size_t i = 0; i < plane; ++i) {
        acc.add_pixel(gt[i], std::clamp(static_cast<double>(r.prediction[k * plane + i]), 0.0, hi));
      }
    }
  }
  return {loss_sum / static_cast<double>(batches), acc.report()};
}

TrainingRun train(const ExperimentConfig& cfg, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) fail(ErrorCode::EmptyDataset, "training and validation sets must be non-empty");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<PreparedSample> tr, va;
  for (const auto& s : train_set) tr.push_back(prepare_sample(cfg.model, s));
  for (const auto& s : val_set) va.push_back(prepare_sample(cfg.model, s));

  TrainingRun run{Model(cfg.model, derive_seed(cfg.seed, 1)), {}};
  Rng order_rng(derive_seed(cfg.seed, 2));
  AdamState adam;
  adam.beta1 = cfg.optimizer.beta1;
  adam.beta2 = cfg.optimizer.beta2;

  std::vector<std::size_t> order(tr.size());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg.optimizer.lr_at(epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += bs, ++batch) {
      std::vector<const PreparedSample*> items;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) items.push_back(&tr[order[i]]);
      try {
        loss_sum += run_batch(run.model, cfg, items, true, rec.lr, &adam).loss;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFinite) throw;
        fail(ErrorCode::NonFiniteLoss, "non-finite loss at " + batch_label(epoch, batch, items));
      }
      ++rec.steps;
    }
    rec.train_loss = loss_sum / static_cast<double>(rec.steps);
    try {
      std::tie(std::ignore, rec.train) = evaluate_model(run.model, cfg, tr);
      std::tie(rec.val_loss, rec.val) = evaluate_model(run.model, cfg, va);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite) throw;
      fail(ErrorCode::NonFiniteLoss, "non-finite evaluation after epoch " + std::to_string(epoch));
    }
    run.history.total_steps += rec.steps;
    run.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  run.history.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::string history_csv(const TrainingHistory& h) {
  std::string out = "epoch,lr,steps,train_loss,val_loss,train_rmse_m,train_mae_m,train_rel,val_rmse_m,val_mae_m,val_rel\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + "," + fmt("%.9g", e.lr) + "," + std::to_string(e.steps) + "," +
           fmt("%.9g", e.train_loss) + "," + fmt("%.9g", e.val_loss) + "," + fmt("%.6f", e.train.rmse) + "," +
           fmt("%.6f", e.train.mae) + "," + fmt("%.6f", e.train.rel) + "," + fmt("%.6f", e.val.rmse) + "," +
           fmt("%.6f", e.val.mae) + "," + fmt("%.6f", e.val.rel) + "\n";
  }
  return out;
}

nlohmann::ordered_json search_grid_to_json(const SearchGrid& g) {
  nlohmann::ordered_json j;
  j["lr"] = g.lr;
  j["decay_factor"] = g.decay_factor;
  j["weight_decay"] = g.weight_decay;
  j["loss"] = nlohmann::ordered_json::array();
  for (const auto& w : g.loss) j["loss"].push_back(loss_weights_to_json(w));
  j["distance"] = nlohmann::ordered_json::array();
  for (auto k : g.distance) j["distance"].push_back(to_string(k));
  j["epoch_fraction"] = g.epoch_fraction;
  return j;
}

SearchGrid search_grid_from_json(const nlohmann::json& j) {
  SearchGrid g;
  try {
    g.lr = j.value("lr", g.lr);
    g.decay_factor = j.value("decay_factor", g.decay_factor);
    g.weight_decay = j.value("weight_decay", g.weight_decay);
    if (j.contains("loss"))
      for (const auto& w : j.at("loss")) g.loss.push_back(loss_weights_from_json(w));
    if (j.contains("distance"))
      for (const auto& k : j.at("distance")) g.distance.push_back(distance_kind_from_string(k.get<std::string>()));
    g.epoch_fraction = j.value("epoch_fraction", g.epoch_fraction);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("search grid: ") + e.what());
  }
  return g;
}

SearchResult hyperparam_search(const ExperimentConfig& base, const SearchGrid& grid, const std::vector<Sample>& train_set,
                               const std::vector<Sample>& val_set, int jobs) {
  if (grid.lr.empty() && grid.decay_factor.empty() && grid.weight_decay.empty() && grid.loss.empty() &&
      grid.distance.empty()) {
    fail(ErrorCode::BadConfig, "search grid is empty");
  }
  if (!(grid.epoch_fraction > 0.0 && grid.epoch_fraction <= 1.0)) fail(ErrorCode::BadConfig, "epoch_fraction must lie in (0, 1]");

  auto or_base = [](auto list, auto value) { return list.empty() ? decltype(list){value} : list; };
  const auto lrs = or_base(grid.lr, base.optimizer.lr);
  const auto decays = or_base(grid.decay_factor, base.optimizer.decay_factor);
  const auto wds = or_base(grid.weight_decay, base.optimizer.weight_decay);
  const auto losses = or_base(grid.loss, base.loss);
  const auto kinds = or_base(grid.distance, base.distance.kind);

  SearchResult result;
  result.epochs_per_run = std::max(1, static_cast<int>(std::ceil(grid.epoch_fraction * base.epochs - 1e-9)));
  std::vector<LeaderboardEntry> entries;
  for (double lr : lrs)
    for (double decay : decays)
      for (double wd : wds)
        for (const auto& lw : losses)
          for (auto kind : kinds) {
            LeaderboardEntry e;
            e.config = base;
            e.config.optimizer.lr = lr;
            e.config.optimizer.decay_factor = decay;
            e.config.optimizer.weight_decay = wd;
            e.config.loss = lw;
            e.config.distance.kind = kind;
            e.config.name = base.name + "-" + std::to_string(entries.size());
            entries.push_back(std::move(e));
          }

  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    LeaderboardEntry& e = entries[i];
    ExperimentConfig cfg = e.config;
    cfg.epochs = result.epochs_per_run;
    try {
      e.val = train(cfg, train_set, val_set).history.epochs.back().val;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NonFiniteLoss && err.code() != ErrorCode::NonFinite) throw;
      e.failed = true;
      e.error = err.what();
    }
  });

  std::stable_sort(entries.begin(), entries.end(), [](const LeaderboardEntry& x, const LeaderboardEntry& y) {
    if (x.failed != y.failed) return !x.failed;
    return !x.failed && x.val.mae < y.val.mae;
  });
  int rank = 0;
  for (auto& e : entries)
    if (!e.failed) e.rank = ++rank;
  if (rank == 0) fail(ErrorCode::NonFiniteLoss, "every search run failed; last error: " + entries.back().error);
  result.best = entries.front().config;
  result.best.name = base.name;
  result.leaderboard = std::move(entries);
  return result;
}

std::string leaderboard_csv(const SearchResult& r) {
  std::string out = "# epochs_per_run=" + std::to_string(r.epochs_per_run) + "\n";
  out += "rank,name,lr,decay_factor,weight_decay,w1,w2,w3,wp,wg,ws,distance,status,val_rmse_m,val_mae_m,val_rel\n";
  for (const auto& e : r.leaderboard) {
    const auto& c = e.config;
    out += std::to_string(e.rank) + "," + c.name + "," + fmt("%.9g", c.optimizer.lr) + "," +
           fmt("%.9g", c.optimizer.decay_factor) + "," + fmt("%.9g", c.optimizer.weight_decay) + "," +
           fmt("%.9g", c.loss.w1) + "," + fmt("%.9g", c.loss.w2) + "," + fmt("%.9g", c.loss.w3) + "," +
           fmt("%.9g", c.loss.wp) + "," + fmt("%.9g", c.loss.wg) + "," + fmt("%.9g", c.loss.ws) + "," +
           to_string(c.distance.kind) + ",";
    if (e.failed) {
      out += "failed,,,\n";
    } else {
      out += "ok," + fmt("%.6f", e.val.rmse) + "," + fmt("%.6f", e.val.mae) + "," + fmt("%.6f", e.val.rel) + "\n";
    }
  }
  return out;
}

std::vector<CompareRow> compare(const std::vector<std::pair<std::string, Model*>>& models, const std::vector<Sample>& val) {
  if (val.empty()) fail(ErrorCode::EmptyDataset, "comparison set is empty");
  std::vector<CompareRow> rows;
  MetricsAccumulator input;
  for (const auto& s : val) input.add(s.depth_gt, s.depth_raw);
  rows.push_back({"Input", input.report()});
  for (const auto& [name, model] : models) {
    MetricsAccumulator acc;
    for (const auto& s : val) acc.add(s.depth_gt, predict_depth(*model, s.rgb, s.depth_raw, s.mask));
    rows.push_back({name, acc.report()});
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows, const std::string& split) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) out += metrics_csv_row(r.name, split, r.report) + "\n";
  return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(workers, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace depthkit
