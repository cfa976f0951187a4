#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "depthkit/grid.hpp"

namespace depthkit {

struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const;
};

/// Rigid camera-from-world transform: p_cam = rotation * p_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Pose inverse() const;
  // Camera center in world coordinates.
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
  Eigen::Matrix4d matrix() const;
  static Pose from_matrix(const Eigen::Matrix4d& m);
  // Camera at `eye` looking at `target`; image y points along world +y
  // projected onto the image plane.
  static Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& down = Eigen::Vector3d::UnitY());

  void validate(double tol = 1e-9) const;
};

struct CameraModel {
  Intrinsics intrinsics;
  Pose pose;
};

struct TagGrid {
  int rows = 2;
  int cols = 2;
  double spacing = 0.05;  // meters between tag centers
};

struct PixelDepth {
  double u, v, z;
};

PixelDepth project(const Eigen::Vector3d& p, const Intrinsics& k);
Eigen::Vector3d unproject(double u, double v, double z, const Intrinsics& k);

// Forward-splat every valid source pixel into the destination view, keeping the
// nearest depth per target pixel. Unhit targets are 0.
DepthMap reproject_depth(const DepthMap& d, const CameraModel& src, const CameraModel& dst);

std::vector<Eigen::Vector3d> tag_grid_points(const TagGrid& g);

// Least-squares rigid transform T with T(model_i) ~ measured_i (Kabsch).
Pose fit_rigid(const std::vector<Eigen::Vector3d>& measured, const std::vector<Eigen::Vector3d>& model);

double rms_residual(const Pose& t, const std::vector<Eigen::Vector3d>& measured,
                    const std::vector<Eigen::Vector3d>& model);

// Angle of R_a^T R_b in degrees.
double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// {fx, fy, cx, cy, width, height, pose: 16 numbers row-major camera-from-world}
nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);
void write_camera_json(const std::filesystem::path& path, const CameraModel& cam);
CameraModel read_camera_json(const std::filesystem::path& path);

}  // namespace depthkit
