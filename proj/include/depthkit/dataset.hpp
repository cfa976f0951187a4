#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "depthkit/camera.hpp"
#include "depthkit/grid.hpp"
#include "depthkit/synth.hpp"

namespace depthkit {

struct SampleRecord {
  std::string id;
  int scene_id = 0;
  std::string rgb, depth_raw, depth_gt, mask, camera, depth_true;
};

struct DatasetHandle {
  std::filesystem::path manifest;
  std::vector<SampleRecord> samples;
  Domain domain = Domain::Primary;
  double scale = 1.0;  // multiplies every depth value on load

  std::filesystem::path dir() const { return manifest.parent_path(); }
  std::size_t size() const { return samples.size(); }
};

struct Sample {
  std::string id;
  int scene_id = 0;
  RgbImage rgb;
  DepthMap depth_raw;
  DepthMap depth_gt;
  ValidityMask mask;  // validity of depth_raw
  CameraModel camera;
};

// Accepts a dataset directory or its manifest.json. Fails when a referenced
// file is missing.
DatasetHandle open_dataset(const std::filesystem::path& path);

DatasetHandle scale_depth(const DatasetHandle& ds, double factor);

// Loads one sample; depth maps are multiplied by ds.scale, invalid stays 0.
Sample load_sample(const DatasetHandle& ds, std::size_t index);

// Analytic-truth depth for meta-evaluation; never used for training.
DepthMap load_true_depth(const DatasetHandle& ds, std::size_t index);

}  // namespace depthkit
