// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "depthkit/ablation.hpp"
#include "depthkit/camera.hpp"
#include "depthkit/cli.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/synth.hpp"
#include "depthkit/training.hpp"
#include "depthkit/tsdf.hpp"
#include "gradcheck_cases.hpp"

using namespace depthkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::current_path() / "acceptance_work" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  const auto cases = gradcases::op_cases();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& c : cases) {
      const double e = c.run(seed);
      if (!(e <= worst)) {
        worst = e;
        worst_name = c.name;
      }
    }
    for (bool unpool : {true, false}) {
      const double e = gradcases::model_case(seed, unpool);
      if (!(e <= worst)) {
        worst = e;
        worst_name = unpool ? "model+loss (unpool)" : "model+loss (deconv)";
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 120,
          fmt("%zu op cases + 2 model cases x 20 seeds, max rel error %.3e (%s), %.1f s", cases.size(), worst,
              worst_name.c_str(), t)};
}

// 2
Outcome metric_oracle() {
  Rng rng(2024);
  double worst = 0;
  bool ordered = true;
  for (int t = 0; t < 1000; ++t) {
    const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
    DepthMap gt(w, h), pred(w, h);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      gt[i] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.2, 5.0);
      pred[i] = rng.uniform(0.0, 5.0);
    }
    gt[0] = 1.0;
    double sq = 0, ab = 0, rel = 0;
    std::size_t n = 0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        if (gt(i, j) != 0) {
          const double e = pred(i, j) - gt(i, j);
          sq += e * e;
          ab += std::abs(e);
          rel += std::abs(e) / gt(i, j);
          ++n;
        }
    const MetricsReport r = evaluate(gt, pred);
    worst = std::max({worst, std::abs(r.rmse - std::sqrt(sq / static_cast<double>(n))),
                      std::abs(r.mae - ab / static_cast<double>(n)), std::abs(r.rel - rel / static_cast<double>(n))});
    if (r.n_valid != n) worst = INFINITY;
    ordered = ordered && r.rmse >= r.mae;
  }
  const MetricsReport ex = evaluate(DepthMap(2, 1, {2, 4}), DepthMap(2, 1, {1, 5}));
  const bool example = ex.mae == 1.0 && ex.rmse == 1.0 && ex.rel == 0.375;
  return {worst <= 1e-12 && ordered && example,
          fmt("1000 pairs, max deviation %.2e, RMSE>=MAE %s, two-pixel example (%g, %g, %g)", worst,
              ordered ? "holds" : "violated", ex.mae, ex.rmse, ex.rel)};
}

// 3
Outcome geometry_round_trips() {
  Rng rng(3);
  double worst = 0;
  for (int t = 0; t < 100000; ++t) {
    const Intrinsics k{rng.uniform(30, 800), rng.uniform(30, 800), rng.uniform(0, 640), rng.uniform(0, 480), 640, 480};
    const Eigen::Vector3d p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 5));
    const PixelDepth px = project(p, k);
    worst = std::max(worst, (unproject(px.u, px.v, px.z, k) - p).norm());
    const double u = rng.uniform(0, 640), v = rng.uniform(0, 480), z = rng.uniform(0.1, 5);
    const PixelDepth back = project(unproject(u, v, z, k), k);
    worst = std::max({worst, std::abs(back.u - u), std::abs(back.v - v), std::abs(back.z - z)});
  }
  double repro = 0;
  bool holes_kept = true;
  for (int t = 0; t < 20; ++t) {
    CameraModel cam{{rng.uniform(40, 90), rng.uniform(40, 90), 32, 24, 64, 48}, {}};
    cam.pose.rotation = random_rotation(rng);
    cam.pose.translation = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    DepthMap d(64, 48);
    for (auto& v : d.data()) v = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.3, 3.0);
    const DepthMap r = reproject_depth(d, cam, cam);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] > 0) repro = std::max(repro, std::abs(r[i] - d[i]));
      else holes_kept = holes_kept && r[i] == 0;
    }
  }
  return {worst <= 1e-9 && repro <= 1e-9,
          fmt("1e5 points, max round-trip error %.2e; reprojection identity max error %.2e%s", worst, repro,
              holes_kept ? "" : " (holes filled)")};
}

// 4
Outcome calibration() {
  Rng rng(4);
  const auto model = tag_grid_points({6, 6, 0.04});
  double exact = 0;
  int good = 0;
  double worst_rot = 0, worst_t = 0;
  for (int t = 0; t < 100; ++t) {
    Pose truth;
    truth.rotation = random_rotation(rng);
    truth.translation = Eigen::Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 1.2));
    std::vector<Eigen::Vector3d> clean, noisy;
    for (const auto& p : model) {
      clean.push_back(truth.apply(p));
      noisy.push_back(clean.back() + 0.001 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
    }
    const Pose a = fit_rigid(clean, model);
    exact = std::max({exact, (a.rotation - truth.rotation).cwiseAbs().maxCoeff(),
                      (a.translation - truth.translation).cwiseAbs().maxCoeff()});
    const Pose b = fit_rigid(noisy, model);
    const double rot = rotation_angle_deg(b.rotation, truth.rotation), tr = (b.translation - truth.translation).norm();
    worst_rot = std::max(worst_rot, rot);
    worst_t = std::max(worst_t, tr);
    if (rot < 0.5 && tr < 0.002) ++good;
  }
  return {exact < 1e-9 && good >= 95,
          fmt("noiseless max error %.2e; 1 mm noise: %d/100 within 0.5 deg / 2 mm (worst %.3f deg, %.2f mm)", exact,
              good, worst_rot, worst_t * 1000)};
}

// 5
Outcome tsdf_plane() {
  const auto t0 = Clock::now();
  const CameraModel cam{{60, 60, 32, 24, 64, 48}, {}};
  const std::vector<Frame> frames{{DepthMap(64, 48, 0.5), cam}};
  const double vs = 0.005;
  TsdfVolume v(volume_for_frames(frames, vs, 4 * vs));
  v.integrate(frames[0].first, cam);
  const DepthMap d = v.raycast_depth(cam);
  std::size_t good = 0;
  double worst = 0;
  for (double x : d.data()) {
    if (x <= 0) continue;
    worst = std::max(worst, std::abs(x - 0.5));
    if (std::abs(x - 0.5) <= 0.0025) ++good;
  }
  const double frac = static_cast<double>(good) / static_cast<double>(d.size());
  const double t = seconds_since(t0);
  return {frac >= 0.99 && t < 30,
          fmt("%.2f%% of pixels valid within 2.5 mm (max error %.3f mm), %.2f s", 100 * frac, worst * 1000, t)};
}

// 6
Outcome fusion_fills_holes() {
  Scene s;
  s.primitives.push_back({PlanePrim{{0, 0, 1.0}, {0, 0, -1}}, {}});
  s.primitives.push_back({BoxPrim{{0, 0, 0.75}, Eigen::Matrix3d::Identity(), {0.12, 0.1, 0.08}}, {}});
  const Intrinsics k{60, 60, 32, 24, 64, 48};
  std::vector<CameraModel> cams;
  std::vector<DepthMap> truth;
  for (int c = 0; c < 4; ++c) {
    const double a = c * M_PI / 2;
    const Eigen::Vector3d eye(0.12 * std::cos(a), 0.12 * std::sin(a), 0.0);
    cams.push_back({k, Pose::look_at(eye, {0, 0, 0.85})});
    truth.push_back(render(s, cams.back()).depth);
  }
  // 4x4 blocks of the pixel grid dealt out to the views so no pixel is
  // missing in two views; each view loses about 10% of its pixels.
  Rng rng(6);
  std::vector<int> blocks(12 * 16);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] = static_cast<int>(i);
  rng.shuffle(blocks.begin(), blocks.end());
  const std::size_t per_view = blocks.size() / 10;
  std::vector<Frame> frames;
  std::vector<ValidityMask> holes;
  std::size_t invalid_before = 0;
  for (int c = 0; c < 4; ++c) {
    DepthMap d = truth[static_cast<std::size_t>(c)];
    ValidityMask hole(64, 48);
    for (std::size_t b = per_view * c; b < per_view * (c + 1); ++b) {
      const int bi = blocks[b] / 16, bj = blocks[b] % 16;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) hole(4 * bi + i, 4 * bj + j) = 1;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (hole[i]) d[i] = 0;
      if (d[i] <= 0) ++invalid_before;
    }
    holes.push_back(hole);
    frames.emplace_back(d, cams[static_cast<std::size_t>(c)]);
  }
  const double vs = 0.005;
  const auto fused = fuse_views(frames, volume_for_frames(frames, vs, 4 * vs));
  std::size_t invalid_after = 0;
  double worst_frac = 1;
  std::string per;
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t missing = 0, recovered = 0;
    for (std::size_t i = 0; i < fused[c].size(); ++i) {
      if (fused[c][i] <= 0) ++invalid_after;
      if (!holes[c][i]) continue;
      ++missing;
      // filled and close to the rendered surface
      if (fused[c][i] > 0 && std::abs(fused[c][i] - truth[c][i]) <= 0.01) ++recovered;
    }
    const double frac = static_cast<double>(recovered) / static_cast<double>(missing);
    worst_frac = std::min(worst_frac, frac);
    per += fmt("%s%.0f%%", per.empty() ? "" : "/", 100 * frac);
  }
  return {worst_frac >= 0.5 && invalid_after < invalid_before,
          fmt("recovered per view %s (within 1 cm), invalid pixels %zu -> %zu", per.c_str(), invalid_before,
              invalid_after)};
}

// 7
Outcome residual_identity() {
  Rng rng(7);
  bool exact = true;
  int checked = 0;
  for (const char* name : {"delta-interp-mask", "delta"}) {
    ModelConfig cfg = ablation_config(name, AblationDirection::Incremental).model;
    for (bool full : {false, true}) {
      if (full) cfg = ablation_full().model;
      for (int t = 0; t < 3; ++t) {
        Model m(cfg, rng.below(1000));
        m.parameter("head.w").value.fill(0);
        RgbImage rgb(64, 48);
        for (auto& px : rgb.data())
          for (auto& v : px) v = rng.uniform();
        DepthMap raw(64, 48);
        ValidityMask mask(64, 48);
        for (std::size_t i = 0; i < raw.size(); ++i) {
          mask[i] = rng.uniform() < 0.7;
          raw[i] = mask[i] ? rng.uniform(0.5, 1.5) : 0.0;
        }
        exact = exact && predict_depth(m, rgb, raw, mask) == interpolate_fill(raw, mask);
        ++checked;
      }
    }
  }
  return {exact, fmt("%d models with the final layer zeroed: prediction %s interpolate_fill", checked,
                     exact ? "bit-identical to" : "differs from")};
}

// 8
Outcome masked_loss_invariance() {
  Rng rng(8);
  double worst_depth = 0, worst_early = 0;
  int trials = 0;
  const DistanceKind kinds[] = {DistanceKind::L1, DistanceKind::L2, DistanceKind::Huber, DistanceKind::AdaptiveHuber,
                                DistanceKind::RHuber};
  for (auto kind : kinds) {
    for (int t = 0; t < 20; ++t, ++trials) {
      const Shape s{2, 1, 16, 16};
      LossTargets tg;
      tg.gt = Tensor(s);
      tg.gt_mask = Tensor(s);
      tg.rgb = Tensor({2, 3, 16, 16}, 0.5);
      DepthMap dm(16, 16);
      for (std::size_t i = 0; i < tg.gt.size(); ++i) {
        tg.gt_mask[i] = rng.uniform() < 0.7 ? 1 : 0;
        tg.gt[i] = tg.gt_mask[i] != 0 ? rng.uniform(0.5, 1.5) : 0.0;
      }
      for (int i = 0; i < 2; ++i) {
        const int f = 2 << i;
        const Shape es{2, 1, 16 / f, 16 / f};
        Tensor e(es), m(es);
        for (std::size_t k = 0; k < e.size(); ++k) {
          m[k] = rng.uniform() < 0.7 ? 1 : 0;
          e[k] = m[k] != 0 ? rng.uniform(0.5, 1.5) : 0.0;
        }
        tg.early_gt.push_back(e);
        tg.early_mask.push_back(m);
      }
      Tensor pred(s);
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = rng.uniform(0.4, 1.6);
      std::vector<Tensor> early;
      for (const auto& e : tg.early_gt) {
        Tensor p(e.shape());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = rng.uniform(0.4, 1.6);
        early.push_back(p);
      }
      auto losses = [&](const Tensor& d, const std::vector<Tensor>& ea) {
        Graph g;
        LossWeights w;
        w.ws = 0;  // the smoothness term regularizes every pixel by design
        const Distance dist{kind, 0.2};
        const double ld = g.value(depth_loss(g, g.constant(d), tg.gt, tg.gt_mask, w, dist))[0];
        double le = 0;
        for (std::size_t i = 0; i < ea.size(); ++i)
          le += g.value(distance(g, dist, g.constant(ea[i]), g.constant(tg.early_gt[i]), tg.early_mask[i]))[0];
        return std::pair{ld, le};
      };
      Tensor moved = pred;
      for (std::size_t i = 0; i < moved.size(); ++i)
        if (tg.gt_mask[i] == 0) moved[i] += rng.uniform(-10, 10);
      std::vector<Tensor> moved_early = early;
      for (std::size_t h = 0; h < early.size(); ++h)
        for (std::size_t k = 0; k < early[h].size(); ++k)
          if (tg.early_mask[h][k] == 0) moved_early[h][k] += rng.uniform(-10, 10);
      const auto a = losses(pred, early), b = losses(moved, moved_early);
      worst_depth = std::max(worst_depth, std::abs(a.first - b.first));
      worst_early = std::max(worst_early, std::abs(a.second - b.second));
    }
  }
  return {worst_depth == 0 && worst_early == 0,
          fmt("%d trials over all distance kinds: max change L_depth %.3g, L_early %.3g", trials, worst_depth,
              worst_early)};
}

// Shared corpus and runs for criteria 9 and 10.
struct ToyProtocol {
  ExperimentConfig base;
  std::vector<Sample> train_set, val_set;
  double synth_seconds = 0;
};

ToyProtocol toy_protocol() {
  const auto t0 = Clock::now();
  const fs::path root = work_dir("corpus");
  DatasetSpec a;
  a.scenes = 30;
  a.cams_per_scene = 4;
  a.width = 64;
  a.height = 48;
  a.seed = 11;
  DatasetSpec b = a;
  b.scenes = 20;
  b.domain = Domain::Secondary;
  b.seed = 12;
  make_dataset(a, root / "primary");
  make_dataset(b, root / "secondary");

  ToyProtocol p;
  p.base.seed = 1;
  p.base.mix.seed = 1;
  p.base.dataset_a = (root / "primary").string();
  p.base.dataset_b = (root / "secondary").string();
  p.base.scale_b = 0.25;
  const DatasetHandle da = open_dataset(p.base.dataset_a);
  const DatasetHandle db = scale_depth(open_dataset(p.base.dataset_b), p.base.scale_b);
  const Split split = mix_datasets(da, db, p.base.mix);
  p.train_set = load_samples({&da, &db}, split.train);
  p.val_set = load_samples({&da, &db}, split.val);
  p.synth_seconds = seconds_since(t0);
  return p;
}

struct ToyRun {
  TrainingRun run;
  double seconds;
};

ToyRun toy_run(const ToyProtocol& p, const std::string& row) {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = apply_variant(p.base, ablation_config(row, AblationDirection::Incremental));
  TrainingRun r = train(cfg, p.train_set, p.val_set, [&](const EpochRecord& e) {
    std::fprintf(stderr, "  [%s] epoch %2d  train_loss %.5f  val_mae %.5f m\n", row.c_str(), e.epoch, e.train_loss,
                 e.val.mae);
  });
  return {std::move(r), seconds_since(t0)};
}

// 11
Outcome determinism() {
  const fs::path root = work_dir("determinism");
  DatasetSpec spec;
  spec.scenes = 3;
  spec.cams_per_scene = 2;
  spec.seed = 21;
  make_dataset(spec, root / "data");
  ExperimentConfig cfg;
  cfg.name = "det";
  cfg.seed = cfg.mix.seed = 9;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.model.base_channels = 4;
  cfg.dataset_a = (root / "data").string();
  const fs::path a = cmd_train(cfg, root / "run_a", {"train", {}, cfg.seed, {}, {}});
  const fs::path b = cmd_train(cfg, root / "run_b", {"train", {}, cfg.seed, {}, {}});
  const std::string ha = slurp(a / "history.csv"), hb = slurp(b / "history.csv");
  const bool same = !ha.empty() && ha == hb;
  return {same, fmt("two cmd_train runs: history.csv %s (%zu bytes)", same ? "byte-identical" : "differs", ha.size())};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "metric oracle", metric_oracle);
  report(3, "geometry round-trips", geometry_round_trips);
  report(4, "calibration", calibration);
  report(5, "TSDF plane oracle", tsdf_plane);
  report(6, "fusion fills holes", fusion_fills_holes);
  report(7, "residual identity", residual_identity);
  report(8, "masked-loss invariance", masked_loss_invariance);

  ToyProtocol proto;
  std::optional<ToyRun> ours, baseline;
  std::string setup_error;
  try {
    proto = toy_protocol();
    ours = toy_run(proto, "delta-interp-mask");
    baseline = toy_run(proto, "+Unet");
  } catch (const std::exception& e) {
    setup_error = e.what();
  }

  report(9, "end-to-end toy training", [&]() -> Outcome {
    if (!ours) return {false, "setup failed: " + setup_error};
    Model& m = ours->run.model;
    const auto rows = compare({{"ours", &m}}, proto.val_set);
    const double input = rows[0].report.mae, hist = ours->run.history.epochs.back().val.mae, cmp = rows[1].report.mae;
    const double total = proto.synth_seconds + ours->seconds;
    const auto& ep = ours->run.history.epochs;
    bool falling = ep.size() >= 5;
    for (std::size_t i = 1; falling && i < 5; ++i) falling = ep[i].val.mae < ep[i - 1].val.mae;
    std::fprintf(stderr, "  note: val MAE %s over the first 5 epochs\n", falling ? "strictly decreases" : "does not strictly decrease");
    return {hist <= input / 5 && cmp <= input / 5 && total < 1200,
            fmt("%zu train / %zu val samples, Input MAE %.4f m, model val MAE %.4f m (compare row %.4f m, ratio "
                "%.1fx), %.0f s",
                proto.train_set.size(), proto.val_set.size(), input, hist, cmp, input / std::max(hist, 1e-12), total)};
  });

  report(10, "ablation direction check", [&]() -> Outcome {
    if (!ours || !baseline) return {false, "setup failed: " + setup_error};
    const double a = ours->run.history.epochs.back().val.mae, b = baseline->run.history.epochs.back().val.mae;
    const bool finite = std::isfinite(a) && std::isfinite(b);
    return {finite && a <= b, fmt("delta-interp-mask val MAE %.4f m vs +Unet %.4f m (%.0f s)", a, b, baseline->seconds)};
  });

  report(11, "determinism", determinism);

  std::printf("%s: %d of 11 criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
