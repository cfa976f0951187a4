#include "depthkit/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Geometry>

#include "depthkit/ablation.hpp"
#include "depthkit/errors.hpp"
#include "depthkit/pnm_io.hpp"
#include "depthkit/svg.hpp"
#include "depthkit/tsdf.hpp"

namespace depthkit {
namespace fs = std::filesystem;
namespace {

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

std::string f6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<Sample> all_samples(const DatasetHandle& ds) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(load_sample(ds, i));
  return out;
}

std::vector<std::string> ids_of(const std::vector<SampleRef>& refs) {
  std::vector<std::string> out;
  for (const auto& r : refs) out.push_back(std::to_string(r.dataset) + ":" + r.id);
  return out;
}

struct HistoryRow {
  int epoch;
  double train_mae, val_mae, train_loss, val_loss, train_rmse, val_rmse, train_rel, val_rel;
};

std::vector<HistoryRow> read_history(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::Parse, path.string() + ": bad value '" + cell + "'");
      }
    }
    if (v.size() != 11) fail(ErrorCode::Parse, path.string() + ": expected 11 columns");
    rows.push_back({static_cast<int>(v[0]), v[6], v[9], v[3], v[4], v[5], v[8], v[7], v[10]});
  }
  return rows;
}

}  // namespace

void write_run_manifest(const fs::path& dir, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["args"] = m.args;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["inputs"] = m.inputs;
  j["rng"] = std::string(Rng::kAlgorithm);
  write_text(dir / "run_manifest.json", j.dump(2) + "\n");
}

void cmd_synth(const DatasetSpec& spec, const fs::path& out, RunManifest m) {
  make_dataset(spec, out);
  m.config = dataset_spec_to_json(spec);
  write_run_manifest(out, m);
}

void cmd_fuse(const fs::path& dataset, double voxel_size, double truncation, const fs::path& out, RunManifest m) {
  if (!(voxel_size > 0.0)) fail(ErrorCode::BadConfig, "voxel size must be positive");
  if (truncation <= 0.0) truncation = 4.0 * voxel_size;
  const DatasetHandle ds = open_dataset(dataset);
  make_dirs(out);
  std::map<int, std::vector<std::size_t>> scenes;
  for (std::size_t i = 0; i < ds.size(); ++i) scenes[ds.samples[i].scene_id].push_back(i);
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& [scene, idx] : scenes) {
    std::vector<Frame> frames;
    for (auto i : idx) {
      const Sample s = load_sample(ds, i);
      frames.emplace_back(s.depth_raw, s.camera);
    }
    const auto fused = fuse_views(frames, volume_for_frames(frames, voxel_size, truncation));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::string name = ds.samples[idx[k]].id + "_fused.pgm";
      write_depth_pgm(out / name, fused[k]);
      files.push_back(name);
    }
  }
  m.config = {{"dataset", dataset.string()}, {"voxel_size", voxel_size}, {"truncation", truncation}};
  m.inputs.push_back(ds.manifest.string());
  write_run_manifest(out, m);
  write_text(out / "fused.json", nlohmann::ordered_json{{"files", files}}.dump(2) + "\n");
}

std::vector<Eigen::Vector3d> read_points(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Eigen::Vector3d> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z)) fail(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": expected x y z");
    pts.emplace_back(x, y, z);
  }
  return pts;
}

void write_points(const fs::path& path, const std::vector<Eigen::Vector3d>& pts) {
  std::string s;
  char buf[128];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    s += buf;
  }
  write_text(path, s);
}

CalibrationResult cmd_calibrate(const std::vector<Eigen::Vector3d>& measured, const TagGrid& grid, double max_rms,
                                const fs::path& out, RunManifest m) {
  if (!(max_rms > 0.0)) fail(ErrorCode::BadConfig, "max_rms must be positive");
  const auto model = tag_grid_points(grid);
  CalibrationResult r;
  r.pose = fit_rigid(measured, model);
  r.rms = rms_residual(r.pose, measured, model);
  r.accepted = r.rms <= max_rms;
  make_dirs(out);
  nlohmann::ordered_json j;
  j["pose"] = nlohmann::ordered_json::array();
  const Eigen::Matrix4d mat = r.pose.matrix();
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) j["pose"].push_back(mat(i, k));
  j["rms_residual_m"] = r.rms;
  j["max_rms_m"] = max_rms;
  j["accepted"] = r.accepted;
  write_text(out / "calibration.json", j.dump(2) + "\n");
  m.config = {{"rows", grid.rows}, {"cols", grid.cols}, {"spacing", grid.spacing}, {"max_rms", max_rms}};
  write_run_manifest(out, m);
  return r;
}

fs::path cmd_train(ExperimentConfig cfg, const fs::path& out_root, RunManifest m, int jobs,
                   const std::optional<SearchGrid>& search) {
  cfg.validate();
  if (cfg.dataset_a.empty()) fail(ErrorCode::BadConfig, "config has no data.a dataset");
  const DatasetHandle a = open_dataset(cfg.dataset_a);
  std::vector<const DatasetHandle*> sets{&a};
  DatasetHandle b;
  Split split;
  if (!cfg.dataset_b.empty()) {
    b = scale_depth(open_dataset(cfg.dataset_b), cfg.scale_b);
    sets.push_back(&b);
    split = mix_datasets(a, b, cfg.mix);
  } else {
    split = holdout_split(a, cfg.mix.holdout, cfg.mix.seed);
  }
  const auto train_set = load_samples(sets, split.train);
  const auto val_set = load_samples(sets, split.val);

  const fs::path dir = out_root / cfg.name;
  make_dirs(dir / "plots");
  if (search) {
    const SearchResult sr = hyperparam_search(cfg, *search, train_set, val_set, jobs);
    write_text(dir / "leaderboard.csv", leaderboard_csv(sr));
    cfg = sr.best;
  }
  write_text(dir / "config.json", experiment_config_to_json(cfg).dump(2) + "\n");
  write_text(dir / "split.json",
             nlohmann::ordered_json{{"train", ids_of(split.train)}, {"val", ids_of(split.val)}}.dump(2) + "\n");

  TrainingRun run = train(cfg, train_set, val_set, [](const EpochRecord& e) {
    std::printf("epoch %d lr=%.6g train_loss=%.6f val_mae_m=%.6f\n", e.epoch, e.lr, e.train_loss, e.val.mae);
    std::fflush(stdout);
  });
  run.history.weights = (dir / "weights.bin").string();
  run.model.save(dir / "weights.bin");
  write_text(dir / "history.csv", history_csv(run.history));
  write_text(dir / "timing.json", nlohmann::ordered_json{{"wall_seconds", run.history.wall_seconds}}.dump(2) + "\n");
  write_text(dir / "report.csv", compare_csv(compare({{cfg.name, &run.model}}, val_set)));

  std::vector<double> x, tr, va;
  for (const auto& e : run.history.epochs) {
    x.push_back(e.epoch);
    tr.push_back(e.train.mae);
    va.push_back(e.val.mae);
  }
  write_text(dir / "plots" / "mae.svg",
             svg_line_chart(cfg.name + ": MAE per epoch", "epoch", "MAE (m)", {{"train", x, tr}, {"val", x, va}}));

  m.seed = cfg.seed;
  m.config = experiment_config_to_json(cfg);
  if (search) m.config["search"] = search_grid_to_json(*search);
  for (const auto* ds : sets) m.inputs.push_back(ds->manifest.string());
  write_run_manifest(dir, m);
  return dir;
}

void cmd_eval(const std::optional<fs::path>& weights, const fs::path& dataset, const std::optional<fs::path>& predictions,
              const fs::path& out, RunManifest m) {
  if (weights.has_value() == predictions.has_value()) fail(ErrorCode::BadConfig, "give exactly one of --weights or --predictions");
  const DatasetHandle ds = open_dataset(dataset);
  const auto samples = all_samples(ds);
  std::vector<CompareRow> rows;
  if (weights) {
    Model model = Model::load(*weights);
    rows = compare({{weights->stem().string(), &model}}, samples);
    m.inputs.push_back(weights->string());
  } else {
    rows = compare({}, samples);
    MetricsAccumulator acc;
    for (const auto& s : samples) {
      DepthMap pred = read_depth_pgm(*predictions / (s.id + ".pgm"));
      for (auto& v : pred.data()) v *= ds.scale;
      acc.add(s.depth_gt, pred);
    }
    rows.push_back({"predictions", acc.report()});
    m.inputs.push_back(predictions->string());
  }
  make_dirs(out);
  write_text(out / "report.csv", compare_csv(rows, "all"));
  m.inputs.push_back(ds.manifest.string());
  write_run_manifest(out, m);
}

void cmd_ablate(AblationDirection direction, const ExperimentConfig& cfg, const fs::path& out, RunManifest m, int jobs,
                const std::vector<std::string>& rows) {
  cfg.validate();
  if (cfg.dataset_a.empty()) fail(ErrorCode::BadConfig, "config has no data.a dataset");
  const DatasetHandle a = open_dataset(cfg.dataset_a);
  std::vector<const DatasetHandle*> sets{&a};
  DatasetHandle b;
  Split split;
  if (!cfg.dataset_b.empty()) {
    b = scale_depth(open_dataset(cfg.dataset_b), cfg.scale_b);
    sets.push_back(&b);
    split = mix_datasets(a, b, cfg.mix);
  } else {
    split = holdout_split(a, cfg.mix.holdout, cfg.mix.seed);
  }
  const auto table = run_ablation(direction, cfg, load_samples(sets, split.train), load_samples(sets, split.val), jobs, rows);
  make_dirs(out / "plots");
  const std::string stem = "ablation_" + to_string(direction);
  write_text(out / (stem + ".csv"), ablation_csv(table, cfg));
  write_text(out / "plots" / (stem + ".svg"), ablation_svg(table));
  m.seed = cfg.seed;
  m.config = experiment_config_to_json(cfg);
  for (const auto* ds : sets) m.inputs.push_back(ds->manifest.string());
  write_run_manifest(out, m);
}

void cmd_report(const std::vector<fs::path>& runs, const fs::path& out, RunManifest m) {
  if (runs.empty()) fail(ErrorCode::BadConfig, "no run directories given");
  std::string csv = "run,epoch,split,loss,rmse_m,mae_m,rel\n";
  std::vector<Series> train_curves, val_curves;
  for (const auto& run : runs) {
    const std::string name = fs::path(run).lexically_normal().filename().empty()
                                 ? fs::path(run).lexically_normal().parent_path().filename().string()
                                 : fs::path(run).lexically_normal().filename().string();
    const auto rows = read_history(run / "history.csv");
    Series t{name, {}, {}}, v{name, {}, {}};
    for (const auto& r : rows) {
      csv += name + "," + std::to_string(r.epoch) + ",train," + f6(r.train_loss) + "," + f6(r.train_rmse) + "," +
             f6(r.train_mae) + "," + f6(r.train_rel) + "\n";
      csv += name + "," + std::to_string(r.epoch) + ",val," + f6(r.val_loss) + "," + f6(r.val_rmse) + "," +
             f6(r.val_mae) + "," + f6(r.val_rel) + "\n";
      t.x.push_back(r.epoch);
      t.y.push_back(r.train_mae);
      v.x.push_back(r.epoch);
      v.y.push_back(r.val_mae);
    }
    train_curves.push_back(std::move(t));
    val_curves.push_back(std::move(v));
    m.inputs.push_back((run / "history.csv").string());
  }
  make_dirs(out / "plots");
  write_text(out / "report.csv", csv);
  write_text(out / "plots" / "progress_train.svg", svg_line_chart("Training MAE", "epoch", "MAE (m)", train_curves));
  write_text(out / "plots" / "progress_val.svg", svg_line_chart("Validation MAE", "epoch", "MAE (m)", val_curves));
  write_run_manifest(out, m);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"depthkit: synthetic RGB-D depth completion toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_option("--jobs", jobs, "parallel jobs for search and ablation")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "render, degrade and fuse a synthetic dataset");
  int scenes = 1, cams = 4, width = 64, height = 48;
  std::string domain = "primary";
  auto* scenes_opt = synth->add_option("--scenes", scenes)->check(CLI::PositiveNumber);
  auto* cams_opt = synth->add_option("--cams", cams, "cameras per scene")->check(CLI::PositiveNumber);
  auto* width_opt = synth->add_option("--width", width)->check(CLI::PositiveNumber);
  auto* height_opt = synth->add_option("--height", height)->check(CLI::PositiveNumber);
  auto* domain_opt = synth->add_option("--domain", domain)->check(CLI::IsMember({"primary", "secondary"}));

  // fuse
  auto* fuse = app.add_subcommand("fuse", "fuse the raw depth of each scene");
  std::string fuse_dataset;
  double voxel = 0.005, trunc = 0.0;
  fuse->add_option("--dataset", fuse_dataset)->required();
  fuse->add_option("--voxel", voxel, "voxel size (m)");
  fuse->add_option("--trunc", trunc, "truncation (m); default 4 voxels");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "fit a rigid pose to measured tag-grid points");
  std::string points_path;
  int rows = 6, cols = 6;
  double spacing = 0.03, noise = 0.0, max_rms = 0.005;
  bool generate = false;
  auto* points_opt = calib->add_option("--points", points_path, "measured points, one 'x y z' per line");
  auto* gen_flag = calib->add_flag("--generate", generate, "generate measured points from a random pose");
  points_opt->excludes(gen_flag);
  calib->add_option("--rows", rows)->check(CLI::PositiveNumber);
  calib->add_option("--cols", cols)->check(CLI::PositiveNumber);
  calib->add_option("--spacing", spacing, "tag spacing (m)");
  calib->add_option("--noise", noise, "Gaussian noise sigma for --generate (m)");
  calib->add_option("--max-rms", max_rms, "largest accepted RMS residual (m)")->check(CLI::PositiveNumber);

  // train
  auto* trn = app.add_subcommand("train", "train a model into <out>/<name>/");
  std::string search_path, dataset_override;
  trn->add_option("--search", search_path, "hyperparameter grid (JSON)");
  trn->add_option("--dataset", dataset_override, "overrides data.a of the config");

  // eval
  auto* evl = app.add_subcommand("eval", "score a model or prediction files against ground truth");
  std::string weights_path, eval_dataset, predictions_dir;
  auto* w_opt = evl->add_option("--weights", weights_path);
  auto* p_opt = evl->add_option("--predictions", predictions_dir, "directory of <id>.pgm predictions");
  w_opt->excludes(p_opt);
  evl->add_option("--dataset", eval_dataset)->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "run the ablation table");
  std::string direction = "incremental";
  std::vector<std::string> only_rows;
  abl->add_option("--direction", direction)->check(CLI::IsMember({"incremental", "decremental"}));
  abl->add_option("--rows", only_rows, "restrict to these experiments");

  // report
  auto* rep = app.add_subcommand("report", "combine histories into a CSV and learning-curve plots");
  std::vector<std::string> run_dirs;
  rep->add_option("runs", run_dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: Usage: " << msg << "\n";
    return 2;
  }

  RunManifest manifest;
  for (int i = 0; i < argc; ++i) manifest.args.emplace_back(argv[i]);
  manifest.seed = seed;
  const bool seed_given = seed_opt->count() > 0;
  auto out_or = [&](const char* fallback) { return fs::path(out_dir.empty() ? fallback : out_dir); };
  auto usage = [](const std::string& msg) {
    std::cerr << "error: Usage: " << msg << "\n";
    return 2;
  };

  try {
    if (synth->parsed()) {
      manifest.command = "synth";
      DatasetSpec spec;
      if (!config_path.empty()) {
        spec = dataset_spec_from_json(read_json(config_path));
        manifest.inputs.push_back(config_path);
      }
      if (scenes_opt->count()) spec.scenes = scenes;
      if (cams_opt->count()) spec.cams_per_scene = cams;
      if (width_opt->count()) spec.width = width;
      if (height_opt->count()) spec.height = height;
      if (domain_opt->count()) spec.domain = domain_from_string(domain);
      if (seed_given) spec.seed = seed;
      manifest.seed = spec.seed;
      if (out_dir.empty()) return usage("synth requires --out");
      cmd_synth(spec, out_dir, manifest);
      std::printf("wrote %d samples to %s\n", spec.scenes * spec.cams_per_scene, out_dir.c_str());
    } else if (fuse->parsed()) {
      manifest.command = "fuse";
      if (out_dir.empty()) return usage("fuse requires --out");
      cmd_fuse(fuse_dataset, voxel, trunc, out_dir, manifest);
    } else if (calib->parsed()) {
      manifest.command = "calibrate";
      const TagGrid grid{rows, cols, spacing};
      std::vector<Eigen::Vector3d> measured;
      const fs::path out = out_or("calibration");
      if (generate) {
        Rng rng(seed);
        Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
        axis.normalize();
        const double angle = rng.uniform(-3.0, 3.0);
        Pose truth;
        truth.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
        truth.translation = Eigen::Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.3, 1.0));
        for (const auto& p : tag_grid_points(grid)) {
          measured.push_back(truth.apply(p) + noise * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
        }
        make_dirs(out);
        write_points(out / "measured_points.txt", measured);
      } else if (!points_path.empty()) {
        measured = read_points(points_path);
        manifest.inputs.push_back(points_path);
      } else {
        return usage("calibrate requires --points or --generate");
      }
      const CalibrationResult r = cmd_calibrate(measured, grid, max_rms, out, manifest);
      const Eigen::Matrix4d mat = r.pose.matrix();
      std::printf("pose (camera-from-grid, row-major):\n");
      for (int i = 0; i < 4; ++i) std::printf("  %.6f %.6f %.6f %.6f\n", mat(i, 0), mat(i, 1), mat(i, 2), mat(i, 3));
      std::printf("rms_residual_m=%.6e\n", r.rms);
      if (!r.accepted) {
        std::fprintf(stderr, "error: Rejected: rms residual %.6e m exceeds %.6e m\n", r.rms, max_rms);
        return 1;
      }
    } else if (trn->parsed()) {
      manifest.command = "train";
      if (config_path.empty()) return usage("train requires --config");
      ExperimentConfig cfg = read_experiment_config(config_path);
      manifest.inputs.push_back(config_path);
      if (!dataset_override.empty()) cfg.dataset_a = dataset_override;
      if (seed_given) cfg.seed = cfg.mix.seed = seed;
      std::optional<SearchGrid> grid;
      if (!search_path.empty()) {
        grid = search_grid_from_json(read_json(search_path));
        manifest.inputs.push_back(search_path);
      }
      const fs::path dir = cmd_train(cfg, out_or("runs"), manifest, jobs, grid);
      std::printf("run directory: %s\n", dir.string().c_str());
    } else if (evl->parsed()) {
      manifest.command = "eval";
      std::optional<fs::path> w, p;
      if (!weights_path.empty()) w = weights_path;
      if (!predictions_dir.empty()) p = predictions_dir;
      if (!w && !p) return usage("eval requires --weights or --predictions");
      const fs::path out = out_or("eval");
      cmd_eval(w, eval_dataset, p, out, manifest);
      std::cout << read_text(out / "report.csv");
    } else if (abl->parsed()) {
      manifest.command = "ablate";
      if (config_path.empty()) return usage("ablate requires --config");
      ExperimentConfig cfg = read_experiment_config(config_path);
      manifest.inputs.push_back(config_path);
      if (seed_given) cfg.seed = cfg.mix.seed = seed;
      const fs::path out = out_or("ablation");
      cmd_ablate(ablation_direction_from_string(direction), cfg, out, manifest, jobs, only_rows);
      std::cout << read_text(out / ("ablation_" + direction + ".csv"));
    } else if (rep->parsed()) {
      manifest.command = "report";
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      cmd_report(dirs, out_or("report"), manifest);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace depthkit
