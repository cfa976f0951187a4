#include "depthkit/camera.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <numbers>

#include "depthkit/errors.hpp"

namespace depthkit {

void Intrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) fail(ErrorCode::BadConfig, "focal lengths must be positive");
  if (width <= 0 || height <= 0) fail(ErrorCode::BadConfig, "image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    fail(ErrorCode::BadConfig, "principal point outside the image");
  }
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.rotation * translation;
  return inv;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Pose Pose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& down) {
  const Eigen::Vector3d f = (target - eye).normalized();
  const Eigen::Vector3d r = down.cross(f).normalized();
  const Eigen::Vector3d d = f.cross(r);
  Pose p;
  p.rotation.row(0) = r.transpose();
  p.rotation.row(1) = d.transpose();
  p.rotation.row(2) = f.transpose();
  p.translation = -p.rotation * eye;
  return p;
}

void Pose::validate(double tol) const {
  const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
  if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) {
    fail(ErrorCode::BadConfig, "rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) fail(ErrorCode::BadConfig, "rotation determinant is not +1");
  if (!translation.allFinite()) fail(ErrorCode::NonFinite, "translation not finite");
}

PixelDepth project(const Eigen::Vector3d& p, const Intrinsics& k) {
  if (!(p.z() > 0.0)) fail(ErrorCode::BehindCamera, "point at or behind the camera plane");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

Eigen::Vector3d unproject(double u, double v, double z, const Intrinsics& k) {
  if (!(z > 0.0)) fail(ErrorCode::NonPositiveDepth, "unproject requires z > 0");
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

DepthMap reproject_depth(const DepthMap& d, const CameraModel& src, const CameraModel& dst) {
  const Intrinsics& ks = src.intrinsics;
  const Intrinsics& kd = dst.intrinsics;
  if (!d.same_shape(ks.width, ks.height)) fail(ErrorCode::DimensionMismatch, "depth does not match source intrinsics");

  // dst_from_src = dst * src^-1
  const Eigen::Matrix3d rot = dst.pose.rotation * src.pose.rotation.transpose();
  const Eigen::Vector3d trans = dst.pose.translation - rot * src.pose.translation;

  DepthMap out(kd.width, kd.height, 0.0);
  for (int i = 0; i < d.height(); ++i) {
    for (int j = 0; j < d.width(); ++j) {
      const double z = d(i, j);
      if (!(z > 0.0)) continue;
      const Eigen::Vector3d q = rot * unproject(j, i, z, ks) + trans;
      if (!(q.z() > 0.0)) continue;
      const PixelDepth px = project(q, kd);
      const long col = std::lround(px.u);
      const long row = std::lround(px.v);
      if (col < 0 || row < 0 || col >= kd.width || row >= kd.height) continue;
      double& slot = out(static_cast<int>(row), static_cast<int>(col));
      // strict < keeps the earliest source pixel on exact ties
      if (slot == 0.0 || px.z < slot) slot = px.z;
    }
  }
  return out;
}

std::vector<Eigen::Vector3d> tag_grid_points(const TagGrid& g) {
  if (g.rows < 2 || g.cols < 2 || !(g.spacing > 0.0)) fail(ErrorCode::BadConfig, "tag grid needs rows, cols >= 2 and spacing > 0");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(g.rows) * g.cols);
  for (int i = 0; i < g.rows; ++i) {
    for (int j = 0; j < g.cols; ++j) pts.emplace_back(i * g.spacing, j * g.spacing, 0.0);
  }
  return pts;
}

Pose fit_rigid(const std::vector<Eigen::Vector3d>& measured, const std::vector<Eigen::Vector3d>& model) {
  if (measured.size() != model.size()) fail(ErrorCode::Degenerate, "point counts differ");
  if (model.size() < 3) fail(ErrorCode::Degenerate, "need at least 3 correspondences");
  const double n = static_cast<double>(model.size());

  Eigen::Vector3d mu_model = Eigen::Vector3d::Zero(), mu_meas = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < model.size(); ++i) {
    mu_model += model[i];
    mu_meas += measured[i];
  }
  mu_model /= n;
  mu_meas /= n;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d spread = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < model.size(); ++i) {
    const Eigen::Vector3d a = model[i] - mu_model;
    cov += (measured[i] - mu_meas) * a.transpose();
    spread += a * a.transpose();
  }

  // Collinear (or coincident) model points leave a rotation about the line free.
  Eigen::JacobiSVD<Eigen::Matrix3d> spread_svd(spread);
  const Eigen::Vector3d sv = spread_svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) fail(ErrorCode::Degenerate, "model points are collinear");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  if ((u * v.transpose()).determinant() < 0.0) s(2, 2) = -1.0;

  Pose t;
  t.rotation = u * s * v.transpose();
  t.translation = mu_meas - t.rotation * mu_model;
  return t;
}

double rms_residual(const Pose& t, const std::vector<Eigen::Vector3d>& measured,
                    const std::vector<Eigen::Vector3d>& model) {
  if (measured.size() != model.size() || model.empty()) fail(ErrorCode::Degenerate, "point counts differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) acc += (t.apply(model[i]) - measured[i]).squaredNorm();
  return std::sqrt(acc / static_cast<double>(model.size()));
}

double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

nlohmann::json camera_to_json(const CameraModel& cam) {
  const Intrinsics& k = cam.intrinsics;
  nlohmann::ordered_json j;
  j["fx"] = k.fx;
  j["fy"] = k.fy;
  j["cx"] = k.cx;
  j["cy"] = k.cy;
  j["width"] = k.width;
  j["height"] = k.height;
  const Eigen::Matrix4d m = cam.pose.matrix();
  std::vector<double> flat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
  j["pose"] = flat;
  return nlohmann::json::parse(j.dump());
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  try {
    cam.intrinsics.fx = j.at("fx").get<double>();
    cam.intrinsics.fy = j.at("fy").get<double>();
    cam.intrinsics.cx = j.at("cx").get<double>();
    cam.intrinsics.cy = j.at("cy").get<double>();
    cam.intrinsics.width = j.at("width").get<int>();
    cam.intrinsics.height = j.at("height").get<int>();
    const auto flat = j.at("pose").get<std::vector<double>>();
    if (flat.size() != 16) fail(ErrorCode::Parse, "camera pose needs 16 numbers");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = flat[static_cast<std::size_t>(4 * r + c)];
    cam.pose = Pose::from_matrix(m);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("camera json: ") + e.what());
  }
  cam.intrinsics.validate();
  cam.pose.validate(1e-6);
  return cam;
}

void write_camera_json(const std::filesystem::path& path, const CameraModel& cam) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  out << camera_to_json(cam).dump(2) << '\n';
}

CameraModel read_camera_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return camera_from_json(j);
}

}  // namespace depthkit
