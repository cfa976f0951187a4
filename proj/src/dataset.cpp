#include "depthkit/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "depthkit/errors.hpp"
#include "depthkit/pnm_io.hpp"

namespace depthkit {
namespace {

void scale_in_place(DepthMap& d, double factor) {
  for (auto& v : d.data()) v *= factor;
}

}  // namespace

DatasetHandle open_dataset(const std::filesystem::path& path) {
  DatasetHandle ds;
  ds.manifest = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(ds.manifest);
  if (!in) fail(ErrorCode::Io, "cannot open manifest: " + ds.manifest.string());
  nlohmann::json j;
  try {
    in >> j;
    ds.domain = domain_from_string(j.value("domain", std::string("primary")));
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.id = s.at("id").get<std::string>();
      r.scene_id = s.at("scene_id").get<int>();
      r.rgb = s.at("rgb").get<std::string>();
      r.depth_raw = s.at("depth_raw").get<std::string>();
      r.depth_gt = s.at("depth_gt").get<std::string>();
      r.mask = s.at("mask").get<std::string>();
      r.camera = s.at("camera").get<std::string>();
      r.depth_true = s.value("depth_true", std::string());
      ds.samples.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, ds.manifest.string() + ": " + e.what());
  }
  for (const auto& r : ds.samples) {
    for (const std::string* f : {&r.rgb, &r.depth_raw, &r.depth_gt, &r.mask, &r.camera}) {
      if (!std::filesystem::exists(ds.dir() / *f)) fail(ErrorCode::Io, "missing file: " + (ds.dir() / *f).string());
    }
  }
  return ds;
}

DatasetHandle scale_depth(const DatasetHandle& ds, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) fail(ErrorCode::BadFactor, "depth scale factor must be positive");
  DatasetHandle out = ds;
  out.scale = ds.scale * factor;
  return out;
}

Sample load_sample(const DatasetHandle& ds, std::size_t index) {
  const SampleRecord& r = ds.samples.at(index);
  Sample s;
  s.id = r.id;
  s.scene_id = r.scene_id;
  s.rgb = read_rgb_ppm(ds.dir() / r.rgb);
  s.depth_raw = read_depth_pgm(ds.dir() / r.depth_raw);
  s.depth_gt = read_depth_pgm(ds.dir() / r.depth_gt);
  s.mask = read_mask_pgm(ds.dir() / r.mask);
  s.camera = read_camera_json(ds.dir() / r.camera);
  if (!s.rgb.same_shape(s.depth_raw) || !s.depth_gt.same_shape(s.depth_raw) || !s.mask.same_shape(s.depth_raw)) {
    fail(ErrorCode::DimensionMismatch, "sample " + r.id + " has inconsistent image sizes");
  }
  // the mask is authoritative for the raw depth
  for (std::size_t i = 0; i < s.depth_raw.size(); ++i)
    if (!s.mask.valid(i)) s.depth_raw[i] = 0.0;
  scale_in_place(s.depth_raw, ds.scale);
  scale_in_place(s.depth_gt, ds.scale);
  return s;
}

DepthMap load_true_depth(const DatasetHandle& ds, std::size_t index) {
  const SampleRecord& r = ds.samples.at(index);
  if (r.depth_true.empty()) fail(ErrorCode::Io, "sample " + r.id + " has no analytic depth");
  DepthMap d = read_depth_pgm(ds.dir() / r.depth_true);
  scale_in_place(d, ds.scale);
  return d;
}

}  // namespace depthkit
