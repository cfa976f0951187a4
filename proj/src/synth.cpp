#include "depthkit/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "depthkit/errors.hpp"
#include "depthkit/pnm_io.hpp"
#include "depthkit/tsdf.hpp"

namespace depthkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 1e-9;

struct Hit {
  double t = kInf;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
};

Hit intersect(const PlanePrim& pl, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const double denom = pl.normal.dot(d);
  if (std::abs(denom) < 1e-15) return {};
  const double t = pl.normal.dot(pl.point - o) / denom;
  if (t <= kEps) return {};
  return {t, pl.normal};
}

Hit intersect(const SpherePrim& sp, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const Eigen::Vector3d oc = o - sp.center;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - sp.radius * sp.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return {};
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / a;
  if (t <= kEps) t = (-b + sq) / a;
  if (t <= kEps) return {};
  return {t, (o + t * d - sp.center) / sp.radius};
}

Hit intersect(const BoxPrim& bx, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const Eigen::Vector3d lo = bx.rotation.transpose() * (o - bx.center);
  const Eigen::Vector3d ld = bx.rotation.transpose() * d;
  double t0 = -kInf, t1 = kInf;
  int axis0 = -1, axis1 = -1;
  double sign0 = 0.0, sign1 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double h = bx.half_extents(a);
    if (std::abs(ld(a)) < 1e-15) {
      if (lo(a) < -h || lo(a) > h) return {};
      continue;
    }
    double ta = (-h - lo(a)) / ld(a);
    double tb = (h - lo(a)) / ld(a);
    double sa = -1.0, sb = 1.0;
    if (ta > tb) {
      std::swap(ta, tb);
      std::swap(sa, sb);
    }
    if (ta > t0) { t0 = ta; axis0 = a; sign0 = sa; }
    if (tb < t1) { t1 = tb; axis1 = a; sign1 = sb; }
  }
  if (t0 > t1) return {};
  double t = t0;
  int axis = axis0;
  double sign = sign0;
  if (t <= kEps) {
    t = t1;
    axis = axis1;
    sign = sign1;
  }
  if (t <= kEps || axis < 0) return {};
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n(axis) = sign;
  return {t, bx.rotation * n};
}

double texture_factor(const Surface& s, const Eigen::Vector3d& p) {
  if (s.texture_amplitude <= 0.0) return 1.0;
  const double k = 2.0 * std::numbers::pi / s.texture_period;
  const double v = (std::sin(k * p.x()) + std::sin(k * p.y()) + std::sin(k * p.z())) / 3.0;
  return 1.0 - s.texture_amplitude * 0.5 * (1.0 + v);
}

// Selects `count` indices with the smallest keys; stable by index on ties.
std::vector<std::size_t> lowest_ranked(const std::vector<double>& keys, std::size_t count) {
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  order.resize(std::min(count, order.size()));
  return order;
}

std::vector<double> gradient_magnitude(const ScalarGrid& g) {
  const GradientField f = gradient(g);
  std::vector<double> mag(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) mag[i] = std::hypot(f.dx[i], f.dy[i]);
  return mag;
}

Eigen::Matrix3d yaw_pitch(double yaw, double pitch) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d tilted_normal(Rng& rng, double max_tilt_rad) {
  const double a = rng.uniform(-max_tilt_rad, max_tilt_rad);
  const double b = rng.uniform(-max_tilt_rad, max_tilt_rad);
  return (yaw_pitch(a, b) * Eigen::Vector3d(0.0, 0.0, -1.0)).normalized();
}

Rgb random_grey(Rng& rng, double lo, double hi, double tint) {
  const double g = rng.uniform(lo, hi);
  return {std::clamp(g + rng.uniform(-tint, tint), 0.0, 1.0), std::clamp(g + rng.uniform(-tint, tint), 0.0, 1.0),
          std::clamp(g + rng.uniform(-tint, tint), 0.0, 1.0)};
}

Rgb random_color(Rng& rng) { return {rng.uniform(0.3, 1.0), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.6)}; }

}  // namespace

void Scene::validate() const {
  if (primitives.empty()) fail(ErrorCode::BadConfig, "scene has no primitives");
  if (std::abs(light_dir.norm() - 1.0) > 1e-9) fail(ErrorCode::BadConfig, "light_dir must be unit length");
  for (const auto& p : primitives) {
    for (double c : p.surface.albedo) {
      if (!(c >= 0.0 && c <= 1.0)) fail(ErrorCode::BadConfig, "albedo outside [0,1]");
    }
  }
}

std::string to_string(Domain d) { return d == Domain::Primary ? "primary-synthetic" : "secondary-synthetic"; }

Domain domain_from_string(const std::string& s) {
  if (s == "primary" || s == "primary-synthetic") return Domain::Primary;
  if (s == "secondary" || s == "secondary-synthetic") return Domain::Secondary;
  fail(ErrorCode::BadConfig, "unknown domain: " + s);
}

RenderResult render(const Scene& s, const CameraModel& cam) {
  s.validate();
  const Intrinsics& k = cam.intrinsics;
  RenderResult out{RgbImage(k.width, k.height), DepthMap(k.width, k.height, 0.0)};
  const Eigen::Matrix3d rot_t = cam.pose.rotation.transpose();
  const Eigen::Vector3d eye = cam.pose.center();
  for (int i = 0; i < k.height; ++i) {
    for (int j = 0; j < k.width; ++j) {
      // Unit-z camera ray: the hit parameter is the camera-frame depth.
      const Eigen::Vector3d dir = rot_t * Eigen::Vector3d((j - k.cx) / k.fx, (i - k.cy) / k.fy, 1.0);
      Hit best;
      const Primitive* hit_prim = nullptr;
      for (const auto& prim : s.primitives) {
        const Hit h = std::visit([&](const auto& shape) { return intersect(shape, eye, dir); }, prim.shape);
        if (h.t < best.t) {
          best = h;
          hit_prim = &prim;
        }
      }
      if (!hit_prim) {
        out.rgb(i, j) = {0.1, 0.1, 0.1};
        continue;
      }
      out.depth(i, j) = best.t;
      Eigen::Vector3d n = best.normal;
      if (n.dot(dir) > 0.0) n = -n;
      const double shade = std::max(0.0, n.dot(s.light_dir));
      const double tex = texture_factor(hit_prim->surface, eye + best.t * dir);
      Rgb c;
      for (int ch = 0; ch < 3; ++ch) {
        c[static_cast<std::size_t>(ch)] =
            std::clamp(hit_prim->surface.albedo[static_cast<std::size_t>(ch)] * tex * shade + 0.1, 0.0, 1.0);
      }
      out.rgb(i, j) = c;
    }
  }
  return out;
}

void DegradeParams::validate() const {
  if (!(gradient_drop_percentile >= 0.0 && gradient_drop_percentile < 1.0) ||
      !(texture_drop_percentile >= 0.0 && texture_drop_percentile < 1.0)) {
    fail(ErrorCode::BadConfig, "drop percentiles must lie in [0, 1)");
  }
  if (!(noise_sigma >= 0.0)) fail(ErrorCode::BadConfig, "noise_sigma must be >= 0");
  if (blob_count < 0 || blob_radius_px < 0) fail(ErrorCode::BadConfig, "blob parameters must be >= 0");
}

Degraded sparsify_texture(const RgbImage& rgb, const DepthMap& d, double percentile) {
  if (!rgb.same_shape(d)) fail(ErrorCode::DimensionMismatch, "rgb and depth differ in size");
  if (!(percentile >= 0.0 && percentile < 1.0)) fail(ErrorCode::BadConfig, "percentile must lie in [0, 1)");
  Degraded out{d, ValidityMask::from_depth(d)};
  const auto mag = gradient_magnitude(luminance(rgb));
  const auto drop = static_cast<std::size_t>(std::floor(percentile * static_cast<double>(d.size())));
  for (std::size_t idx : lowest_ranked(mag, drop)) {
    out.depth[idx] = 0.0;
    out.mask[idx] = 0;
  }
  return out;
}

Degraded sparsify_gradient(const DepthMap& d, double percentile) {
  if (!(percentile >= 0.0 && percentile < 1.0)) fail(ErrorCode::BadConfig, "percentile must lie in [0, 1)");
  Degraded out{d, ValidityMask::from_depth(d)};
  if (percentile <= 0.0 || d.size() == 0) return out;
  const auto mag = gradient_magnitude(d);
  std::vector<double> sorted = mag;
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  const auto k = static_cast<std::size_t>(std::clamp(std::ceil(percentile * n) - 1.0, 0.0, n - 1.0));
  const double threshold = sorted[k];
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (mag[i] > threshold) {
      out.depth[i] = 0.0;
      out.mask[i] = 0;
    }
  }
  return out;
}

Degraded degrade(const DepthMap& d, const RgbImage& rgb, const DegradeParams& p) {
  p.validate();
  if (!rgb.same_shape(d)) fail(ErrorCode::DimensionMismatch, "rgb and depth differ in size");
  Degraded g = sparsify_gradient(d, p.gradient_drop_percentile);
  Degraded out = g;
  if (p.texture_drop_percentile > 0.0) {
    const Degraded t = sparsify_texture(rgb, d, p.texture_drop_percentile);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!t.mask.valid(i)) {
        out.depth[i] = 0.0;
        out.mask[i] = 0;
      }
    }
  }

  Rng rng(p.seed);
  const int w = d.width(), h = d.height();
  const int r = p.blob_radius_px;
  for (int b = 0; b < p.blob_count; ++b) {
    const int ci = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
    const int cj = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    for (int i = std::max(0, ci - r); i <= std::min(h - 1, ci + r); ++i) {
      for (int j = std::max(0, cj - r); j <= std::min(w - 1, cj + r); ++j) {
        if ((i - ci) * (i - ci) + (j - cj) * (j - cj) <= r * r) {
          out.depth(i, j) = 0.0;
          out.mask(i, j) = 0;
        }
      }
    }
  }

  if (p.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < out.depth.size(); ++i) {
      if (!out.mask.valid(i)) continue;
      // one normal draw per surviving pixel, row-major
      const double noisy = out.depth[i] + p.noise_sigma * rng.normal();
      out.depth[i] = std::max(noisy, 1e-3);
    }
  }
  return out;
}

Scene random_scene(Domain domain, Rng& rng) {
  Scene s;
  const bool primary = domain == Domain::Primary;
  const double scale = primary ? 1.0 : 4.0;

  Primitive background;
  background.shape = PlanePrim{Eigen::Vector3d(0.0, 0.0, primary ? rng.uniform(0.98, 1.05) : rng.uniform(4.5, 5.0)),
                               tilted_normal(rng, primary ? 0.15 : 0.1)};
  background.surface.albedo = primary ? random_grey(rng, 0.3, 0.7, 0.05) : random_color(rng);
  background.surface.texture_amplitude = rng.uniform(0.3, 0.6);
  background.surface.texture_period = rng.uniform(0.03, 0.08) * scale;
  s.primitives.push_back(background);

  if (!primary) {
    Primitive floor;
    floor.shape = PlanePrim{Eigen::Vector3d(0.0, rng.uniform(1.1, 1.4), 0.0), Eigen::Vector3d(0.0, -1.0, 0.0)};
    floor.surface.albedo = random_color(rng);
    floor.surface.texture_amplitude = rng.uniform(0.3, 0.6);
    floor.surface.texture_period = rng.uniform(0.1, 0.3);
    s.primitives.push_back(floor);
  }

  const int boxes = 1 + static_cast<int>(rng.below(3));
  for (int b = 0; b < boxes; ++b) {
    Primitive p;
    BoxPrim box;
    box.center = Eigen::Vector3d(rng.uniform(-0.15, 0.15) * scale, rng.uniform(-0.1, 0.1) * scale,
                                 primary ? rng.uniform(0.78, 0.9) : rng.uniform(2.4, 3.8));
    box.rotation = yaw_pitch(rng.uniform(-0.6, 0.6), rng.uniform(-0.3, 0.3));
    box.half_extents = Eigen::Vector3d(rng.uniform(0.03, 0.07), rng.uniform(0.03, 0.07), rng.uniform(0.03, 0.06)) *
                       (primary ? 1.0 : 5.0);
    p.shape = box;
    p.surface.albedo = primary ? random_grey(rng, 0.5, 0.9, 0.08) : random_color(rng);
    p.surface.texture_amplitude = rng.uniform(0.2, 0.5);
    p.surface.texture_period = rng.uniform(0.02, 0.05) * scale;
    s.primitives.push_back(p);
  }
  if (rng.uniform() < 0.6) {
    Primitive p;
    p.shape = SpherePrim{Eigen::Vector3d(rng.uniform(-0.2, 0.2) * scale, rng.uniform(-0.12, 0.12) * scale,
                                         primary ? rng.uniform(0.8, 0.9) : rng.uniform(2.5, 3.8)),
                         rng.uniform(0.03, 0.06) * (primary ? 1.0 : 5.0)};
    p.surface.albedo = primary ? random_grey(rng, 0.5, 0.9, 0.08) : random_color(rng);
    p.surface.texture_amplitude = rng.uniform(0.2, 0.5);
    p.surface.texture_period = rng.uniform(0.02, 0.05) * scale;
    s.primitives.push_back(p);
  }
  s.light_dir = Eigen::Vector3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.6, -0.1), -1.0).normalized();
  return s;
}

std::vector<CameraModel> camera_rig(Domain domain, int count, int width, int height, Rng& rng) {
  if (count < 1 || width < 2 || height < 2) fail(ErrorCode::BadConfig, "camera rig needs count >= 1 and a real image size");
  const bool primary = domain == Domain::Primary;
  const double radius = primary ? 0.1 : 0.4;
  const Eigen::Vector3d target(0.0, 0.0, primary ? 0.95 : 3.5);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<CameraModel> cams;
  for (int c = 0; c < count; ++c) {
    const double a = phase + 2.0 * std::numbers::pi * c / count + rng.uniform(-0.2, 0.2);
    const double r = radius * rng.uniform(0.8, 1.2);
    const Eigen::Vector3d eye(r * std::cos(a), r * std::sin(a), 0.0);
    CameraModel cam;
    cam.intrinsics = Intrinsics{0.95 * width, 0.95 * width, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
    cam.pose = Pose::look_at(eye, target);
    cams.push_back(cam);
  }
  return cams;
}

double DatasetSpec::resolved_voxel_size() const {
  if (voxel_size > 0.0) return voxel_size;
  return domain == Domain::Primary ? 0.005 : 0.02;
}

double DatasetSpec::resolved_truncation() const {
  return truncation > 0.0 ? truncation : 4.0 * resolved_voxel_size();
}

nlohmann::ordered_json dataset_spec_to_json(const DatasetSpec& spec) {
  nlohmann::ordered_json j;
  j["scenes"] = spec.scenes;
  j["cams_per_scene"] = spec.cams_per_scene;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["domain"] = spec.domain == Domain::Primary ? "primary" : "secondary";
  j["degrade"] = {{"gradient_drop_percentile", spec.degrade.gradient_drop_percentile},
                  {"texture_drop_percentile", spec.degrade.texture_drop_percentile},
                  {"blob_count", spec.degrade.blob_count},
                  {"blob_radius_px", spec.degrade.blob_radius_px},
                  {"noise_sigma", spec.degrade.noise_sigma}};
  j["voxel_size"] = spec.resolved_voxel_size();
  j["truncation"] = spec.resolved_truncation();
  j["seed"] = spec.seed;
  return j;
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    s.scenes = j.value("scenes", s.scenes);
    s.cams_per_scene = j.value("cams_per_scene", s.cams_per_scene);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.domain = domain_from_string(j.value("domain", std::string("primary")));
    if (j.contains("degrade")) {
      const auto& d = j.at("degrade");
      s.degrade.gradient_drop_percentile = d.value("gradient_drop_percentile", s.degrade.gradient_drop_percentile);
      s.degrade.texture_drop_percentile = d.value("texture_drop_percentile", s.degrade.texture_drop_percentile);
      s.degrade.blob_count = d.value("blob_count", s.degrade.blob_count);
      s.degrade.blob_radius_px = d.value("blob_radius_px", s.degrade.blob_radius_px);
      s.degrade.noise_sigma = d.value("noise_sigma", s.degrade.noise_sigma);
    }
    s.voxel_size = j.value("voxel_size", s.voxel_size);
    s.truncation = j.value("truncation", s.truncation);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("dataset config: ") + e.what());
  }
  if (s.scenes < 1 || s.cams_per_scene < 1) fail(ErrorCode::BadConfig, "scenes and cams_per_scene must be >= 1");
  s.degrade.validate();
  return s;
}

void make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.scenes < 1 || spec.cams_per_scene < 1) fail(ErrorCode::BadConfig, "scenes and cams_per_scene must be >= 1");
  spec.degrade.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  nlohmann::ordered_json manifest;
  manifest["generator"] = std::string(Rng::kAlgorithm);
  manifest["domain"] = to_string(spec.domain);
  manifest["generator"] = dataset_spec_to_json(spec);
  manifest["samples"] = nlohmann::ordered_json::array();

  for (int sc = 0; sc < spec.scenes; ++sc) {
    const std::uint64_t scene_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(sc));
    Rng rng(scene_seed);
    const Scene scene = random_scene(spec.domain, rng);
    const auto cams = camera_rig(spec.domain, spec.cams_per_scene, spec.width, spec.height, rng);

    std::vector<RenderResult> views;
    std::vector<Degraded> raw;
    std::vector<Frame> frames;
    for (std::size_t c = 0; c < cams.size(); ++c) {
      views.push_back(render(scene, cams[c]));
      DegradeParams dp = spec.degrade;
      dp.seed = derive_seed(scene_seed, 1000 + c);
      raw.push_back(degrade(views.back().depth, views.back().rgb, dp));
      frames.emplace_back(raw.back().depth, cams[c]);
    }
    VolumeConfig vcfg;
    try {
      vcfg = volume_for_frames(frames, spec.resolved_voxel_size(), spec.resolved_truncation());
    } catch (const Error& e) {
      fail(e.code(), "scene " + std::to_string(sc) + ": " + e.what());
    }
    const auto gt = fuse_views(frames, vcfg);

    for (std::size_t c = 0; c < cams.size(); ++c) {
      char id_buf[32];
      std::snprintf(id_buf, sizeof id_buf, "s%04d_c%zu", sc, c);
      const std::string id = id_buf;
      nlohmann::ordered_json rec;
      rec["id"] = id;
      rec["scene_id"] = sc;
      rec["rgb"] = id + "_rgb.ppm";
      rec["depth_raw"] = id + "_raw.pgm";
      rec["depth_gt"] = id + "_gt.pgm";
      rec["mask"] = id + "_mask.pgm";
      rec["camera"] = id + "_camera.json";
      rec["depth_true"] = id + "_true.pgm";
      write_rgb_ppm(out_dir / rec["rgb"].get<std::string>(), views[c].rgb);
      write_depth_pgm(out_dir / rec["depth_raw"].get<std::string>(), raw[c].depth);
      write_depth_pgm(out_dir / rec["depth_gt"].get<std::string>(), gt[c]);
      write_mask_pgm(out_dir / rec["mask"].get<std::string>(), raw[c].mask);
      write_camera_json(out_dir / rec["camera"].get<std::string>(), cams[c]);
      write_depth_pgm(out_dir / rec["depth_true"].get<std::string>(), views[c].depth);
      manifest["samples"].push_back(rec);
    }
  }

  const auto path = out_dir / "manifest.json";
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

}  // namespace depthkit
