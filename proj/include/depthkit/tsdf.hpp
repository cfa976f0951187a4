#pragma once

#include <Eigen/Core>
#include <array>
#include <utility>
#include <vector>

#include "depthkit/camera.hpp"
#include "depthkit/grid.hpp"

namespace depthkit {

struct VolumeConfig {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // corner of voxel (0,0,0)
  std::array<int, 3> dims{1, 1, 1};
  double voxel_size = 0.005;
  double truncation = 0.02;
  double max_weight = 64.0;
};

// Projective TSDF volume. Voxel (x, y, z) has its center at
// origin + (index + 0.5) * voxel_size. tsdf is distance / truncation clamped
// to [-1, 1]; weight 0 means never observed (tsdf then stays at +1).
class TsdfVolume {
 public:
  explicit TsdfVolume(const VolumeConfig& cfg);

  const VolumeConfig& config() const { return cfg_; }
  std::size_t voxel_count() const { return tsdf_.size(); }
  Eigen::Vector3d extent() const;
  Eigen::Vector3d voxel_center(int x, int y, int z) const;

  float tsdf(int x, int y, int z) const { return tsdf_[index(x, y, z)]; }
  float weight(int x, int y, int z) const { return weight_[index(x, y, z)]; }
  const std::vector<float>& tsdf_values() const { return tsdf_; }
  const std::vector<float>& weights() const { return weight_; }

  void integrate(const DepthMap& d, const CameraModel& cam);

  // Marches each pixel ray at voxel_size / 2 and reports the first observed
  // +/- zero crossing; 0 where none exists.
  DepthMap raycast_depth(const CameraModel& cam) const;

 private:
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * cfg_.dims[1] + static_cast<std::size_t>(y)) * cfg_.dims[0] +
           static_cast<std::size_t>(x);
  }
  // Trilinear sample over observed corners. Returns false when the voxel
  // containing p is unobserved or p lies outside the grid.
  bool sample(const Eigen::Vector3d& p, double& value) const;

  VolumeConfig cfg_;
  std::vector<float> tsdf_;
  std::vector<float> weight_;
};

TsdfVolume new_volume(const VolumeConfig& cfg);

using Frame = std::pair<DepthMap, CameraModel>;

// Integrates all frames into one volume and raycasts back to every input camera.
std::vector<DepthMap> fuse_views(const std::vector<Frame>& frames, const VolumeConfig& cfg);

// Axis-aligned volume that covers the given world points plus a margin of
// truncation + one voxel, at the requested voxel size.
VolumeConfig volume_around(const std::vector<Eigen::Vector3d>& points, double voxel_size, double truncation);

// volume_around the back-projected valid pixels of every frame.
VolumeConfig volume_for_frames(const std::vector<Frame>& frames, double voxel_size, double truncation);

}  // namespace depthkit
