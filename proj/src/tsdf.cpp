#include "depthkit/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "depthkit/errors.hpp"

namespace depthkit {

TsdfVolume::TsdfVolume(const VolumeConfig& cfg) : cfg_(cfg) {
  for (int d : cfg.dims) {
    if (d <= 0) fail(ErrorCode::BadConfig, "volume dims must be positive");
  }
  if (!(cfg.voxel_size > 0.0)) fail(ErrorCode::BadConfig, "voxel_size must be positive");
  if (!(cfg.truncation >= cfg.voxel_size)) fail(ErrorCode::BadConfig, "truncation must be >= voxel_size");
  if (!(cfg.max_weight >= 1.0)) fail(ErrorCode::BadConfig, "max_weight must be >= 1");
  if (!cfg.origin.allFinite()) fail(ErrorCode::BadConfig, "origin not finite");
  const std::size_t n = static_cast<std::size_t>(cfg.dims[0]) * cfg.dims[1] * cfg.dims[2];
  tsdf_.assign(n, 1.0f);
  weight_.assign(n, 0.0f);
}

TsdfVolume new_volume(const VolumeConfig& cfg) { return TsdfVolume(cfg); }

Eigen::Vector3d TsdfVolume::extent() const {
  return Eigen::Vector3d(cfg_.dims[0], cfg_.dims[1], cfg_.dims[2]) * cfg_.voxel_size;
}

Eigen::Vector3d TsdfVolume::voxel_center(int x, int y, int z) const {
  return cfg_.origin + (Eigen::Vector3d(x, y, z).array() + 0.5).matrix() * cfg_.voxel_size;
}

void TsdfVolume::integrate(const DepthMap& d, const CameraModel& cam) {
  const Intrinsics& k = cam.intrinsics;
  if (!d.same_shape(k.width, k.height)) fail(ErrorCode::DimensionMismatch, "depth does not match camera intrinsics");
  const Eigen::Matrix3d& rot = cam.pose.rotation;
  const double vs = cfg_.voxel_size;
  const double trunc = cfg_.truncation;

  for (int z = 0; z < cfg_.dims[2]; ++z) {
    for (int y = 0; y < cfg_.dims[1]; ++y) {
      // Camera-frame coordinates are affine in x; step along the row.
      Eigen::Vector3d p = cam.pose.apply(voxel_center(0, y, z));
      const Eigen::Vector3d step = rot.col(0) * vs;
      for (int x = 0; x < cfg_.dims[0]; ++x, p += step) {
        if (!(p.z() > 0.0)) continue;
        const long col = std::lround(k.fx * p.x() / p.z() + k.cx);
        const long row = std::lround(k.fy * p.y() / p.z() + k.cy);
        if (col < 0 || row < 0 || col >= k.width || row >= k.height) continue;
        const double measured = d(static_cast<int>(row), static_cast<int>(col));
        if (!(measured > 0.0)) continue;
        const double sdf = measured - p.z();
        if (sdf < -trunc) continue;
        const double obs = std::min(1.0, sdf / trunc);
        const std::size_t idx = index(x, y, z);
        const double w = weight_[idx];
        tsdf_[idx] = static_cast<float>((w * tsdf_[idx] + obs) / (w + 1.0));
        weight_[idx] = static_cast<float>(std::min(w + 1.0, cfg_.max_weight));
      }
    }
  }
}

bool TsdfVolume::sample(const Eigen::Vector3d& p, double& value) const {
  const Eigen::Vector3d g = (p - cfg_.origin) / cfg_.voxel_size;
  const int nx = static_cast<int>(std::floor(g.x()));
  const int ny = static_cast<int>(std::floor(g.y()));
  const int nz = static_cast<int>(std::floor(g.z()));
  if (nx < 0 || ny < 0 || nz < 0 || nx >= cfg_.dims[0] || ny >= cfg_.dims[1] || nz >= cfg_.dims[2]) return false;
  if (weight_[index(nx, ny, nz)] <= 0.0f) return false;

  // Corner lattice is offset by half a voxel from the containing cell.
  const Eigen::Vector3d c = g.array() - 0.5;
  const int x0 = static_cast<int>(std::floor(c.x()));
  const int y0 = static_cast<int>(std::floor(c.y()));
  const int z0 = static_cast<int>(std::floor(c.z()));
  const double fx = c.x() - x0, fy = c.y() - y0, fz = c.z() - z0;

  double acc = 0.0, wsum = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
        if (x < 0 || y < 0 || z < 0 || x >= cfg_.dims[0] || y >= cfg_.dims[1] || z >= cfg_.dims[2]) continue;
        const std::size_t idx = index(x, y, z);
        if (weight_[idx] <= 0.0f) continue;
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        acc += w * tsdf_[idx];
        wsum += w;
      }
    }
  }
  if (wsum <= 1e-12) {
    value = tsdf_[index(nx, ny, nz)];
  } else {
    value = acc / wsum;
  }
  return true;
}

DepthMap TsdfVolume::raycast_depth(const CameraModel& cam) const {
  const Intrinsics& k = cam.intrinsics;
  DepthMap out(k.width, k.height, 0.0);
  const Eigen::Matrix3d rot_t = cam.pose.rotation.transpose();
  const Eigen::Vector3d eye = cam.pose.center();
  const Eigen::Vector3d lo = cfg_.origin;
  const Eigen::Vector3d hi = cfg_.origin + extent();

  for (int i = 0; i < k.height; ++i) {
    for (int j = 0; j < k.width; ++j) {
      // Unit-z camera ray: the ray parameter equals camera depth.
      const Eigen::Vector3d dir_cam((j - k.cx) / k.fx, (i - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d dir = rot_t * dir_cam;
      const double step = 0.5 * cfg_.voxel_size / dir_cam.norm();

      // slab intersection with the volume box
      double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (std::abs(dir(a)) < 1e-15) {
          if (eye(a) < lo(a) || eye(a) > hi(a)) t1 = -1.0;
          continue;
        }
        double ta = (lo(a) - eye(a)) / dir(a);
        double tb = (hi(a) - eye(a)) / dir(a);
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      if (!(t1 > t0)) continue;

      bool have_prev = false;
      double prev_t = 0.0, prev_v = 0.0;
      for (double t = t0 + 1e-9; t <= t1; t += step) {
        double v;
        if (!sample(eye + t * dir, v)) {
          have_prev = false;
          continue;
        }
        if (v <= 0.0) {
          if (have_prev && prev_v > 0.0) {
            out(i, j) = prev_t + (t - prev_t) * prev_v / (prev_v - v);
          }
          // entered the surface without an observed positive sample: no depth
          break;
        }
        have_prev = true;
        prev_t = t;
        prev_v = v;
      }
    }
  }
  return out;
}

std::vector<DepthMap> fuse_views(const std::vector<Frame>& frames, const VolumeConfig& cfg) {
  if (frames.empty()) fail(ErrorCode::BadConfig, "fuse_views needs at least one frame");
  TsdfVolume vol(cfg);
  for (const auto& [depth, cam] : frames) vol.integrate(depth, cam);
  std::vector<DepthMap> out;
  out.reserve(frames.size());
  for (const auto& frame : frames) out.push_back(vol.raycast_depth(frame.second));
  return out;
}

VolumeConfig volume_around(const std::vector<Eigen::Vector3d>& points, double voxel_size, double truncation) {
  if (points.empty()) fail(ErrorCode::BadConfig, "no points to bound");
  Eigen::Vector3d lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double margin = truncation + voxel_size;
  lo.array() -= margin;
  hi.array() += margin;
  VolumeConfig cfg;
  cfg.origin = lo;
  cfg.voxel_size = voxel_size;
  cfg.truncation = truncation;
  for (int a = 0; a < 3; ++a) {
    cfg.dims[static_cast<std::size_t>(a)] = std::max(1, static_cast<int>(std::ceil((hi(a) - lo(a)) / voxel_size)));
  }
  return cfg;
}

VolumeConfig volume_for_frames(const std::vector<Frame>& frames, double voxel_size, double truncation) {
  std::vector<Eigen::Vector3d> points;
  for (const auto& [d, cam] : frames) {
    const Pose world_from_cam = cam.pose.inverse();
    for (int i = 0; i < d.height(); ++i) {
      for (int j = 0; j < d.width(); ++j) {
        if (d(i, j) > 0.0) points.push_back(world_from_cam.apply(unproject(j, i, d(i, j), cam.intrinsics)));
      }
    }
  }
  if (points.empty()) fail(ErrorCode::AllInvalid, "no valid depth in any frame");
  return volume_around(points, voxel_size, truncation);
}

}  // namespace depthkit
