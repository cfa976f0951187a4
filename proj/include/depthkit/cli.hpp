#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthkit/synth.hpp"
#include "depthkit/training.hpp"

namespace depthkit {

// Exact inputs of one invocation, written as run_manifest.json next to the
// outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config;
  std::vector<std::string> inputs;
};

void write_run_manifest(const std::filesystem::path& dir, const RunManifest& m);

void cmd_synth(const DatasetSpec& spec, const std::filesystem::path& out, RunManifest m);

// Fuses the raw depth of every scene; writes <id>_fused.pgm files.
void cmd_fuse(const std::filesystem::path& dataset, double voxel_size, double truncation,
              const std::filesystem::path& out, RunManifest m);

struct CalibrationResult {
  Pose pose;
  double rms = 0.0;
  bool accepted = false;  // rms <= max_rms
};

// Measured points: one "x y z" triple per line, '#' starts a comment.
std::vector<Eigen::Vector3d> read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& pts);
CalibrationResult cmd_calibrate(const std::vector<Eigen::Vector3d>& measured, const TagGrid& grid, double max_rms,
                                const std::filesystem::path& out, RunManifest m);

// Trains into out_root/<cfg.name>/ and returns that directory. With a search
// grid the best configuration of the search is trained.
std::filesystem::path cmd_train(ExperimentConfig cfg, const std::filesystem::path& out_root, RunManifest m,
                                int jobs = 1, const std::optional<SearchGrid>& search = std::nullopt);

// report.csv: the Input row followed by the model row. When `predictions`
// is set, <id>.pgm files from that directory are scored instead of a model.
void cmd_eval(const std::optional<std::filesystem::path>& weights, const std::filesystem::path& dataset,
              const std::optional<std::filesystem::path>& predictions, const std::filesystem::path& out, RunManifest m);

void cmd_ablate(AblationDirection direction, const ExperimentConfig& cfg, const std::filesystem::path& out, RunManifest m,
                int jobs = 1, const std::vector<std::string>& rows = {});

void cmd_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out, RunManifest m);

// Entry point of the depthkit executable. Returns the process exit code:
// 0 success, 1 data error, 2 usage error.
int run_cli(int argc, char** argv);

}  // namespace depthkit
