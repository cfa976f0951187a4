#pragma once

// Analytic RGBD scenes and sensor-like depth degradation.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "depthkit/camera.hpp"
#include "depthkit/grid.hpp"
#include "depthkit/rng.hpp"

namespace depthkit {

struct Surface {
  Rgb albedo{0.5, 0.5, 0.5};
  // Procedural shading pattern: albedo *= 1 - amplitude * (1 + s) / 2 with
  // s = (sin kx + sin ky + sin kz) / 3, k = 2 pi / period.
  double texture_amplitude = 0.0;
  double texture_period = 0.05;
};

struct PlanePrim {
  Eigen::Vector3d point;
  Eigen::Vector3d normal;  // unit
};

struct SpherePrim {
  Eigen::Vector3d center;
  double radius;
};

struct BoxPrim {
  Eigen::Vector3d center;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world-from-box
  Eigen::Vector3d half_extents;
};

struct Primitive {
  std::variant<PlanePrim, SpherePrim, BoxPrim> shape;
  Surface surface;
};

struct Scene {
  std::vector<Primitive> primitives;
  Eigen::Vector3d light_dir = Eigen::Vector3d(0.0, -0.3, -1.0).normalized();  // toward the light, unit

  void validate() const;
};

enum class Domain { Primary, Secondary };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct RenderResult {
  RgbImage rgb;
  DepthMap depth;
};

RenderResult render(const Scene& s, const CameraModel& cam);

struct DegradeParams {
  double gradient_drop_percentile = 0.95;  // 0 disables
  double texture_drop_percentile = 0.30;   // 0 disables
  int blob_count = 2;
  int blob_radius_px = 4;
  double noise_sigma = 0.002;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Degraded {
  DepthMap depth;
  ValidityMask mask;
};

// Drops the floor(p * N) pixels with the lowest luminance-gradient magnitude,
// ties broken by pixel index.
Degraded sparsify_texture(const RgbImage& rgb, const DepthMap& d, double percentile);

// Drops pixels whose depth-gradient magnitude is strictly above the
// p-quantile of the magnitude distribution. p = 0 disables the drop.
Degraded sparsify_gradient(const DepthMap& d, double percentile);

// sparsify_gradient, then sparsify_texture, then blob holes, then noise on
// surviving pixels.
Degraded degrade(const DepthMap& d, const RgbImage& rgb, const DegradeParams& p);

Scene random_scene(Domain domain, Rng& rng);
std::vector<CameraModel> camera_rig(Domain domain, int count, int width, int height, Rng& rng);

struct DatasetSpec {
  int scenes = 1;
  int cams_per_scene = 4;
  int width = 64;
  int height = 48;
  Domain domain = Domain::Primary;
  DegradeParams degrade;
  double voxel_size = 0.0;   // 0 -> domain default (5 mm primary, 20 mm secondary)
  double truncation = 0.0;   // 0 -> 4 * voxel_size
  std::uint64_t seed = 0;

  double resolved_voxel_size() const;
  double resolved_truncation() const;
};

nlohmann::ordered_json dataset_spec_to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Renders, degrades and fuses every scene; writes pixel files, per-sample
// cameras and manifest.json into `out_dir`.
void make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

}  // namespace depthkit
