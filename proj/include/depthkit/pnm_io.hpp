#pragma once

// On-disk pixel formats:
//   depth: binary PGM (P5), 16-bit big-endian, millimeters, 0 = invalid
//   rgb:   binary PPM (P6), 8-bit
//   mask:  binary PGM (P5), 8-bit, 255 = valid, 0 = invalid

#include <filesystem>

#include "depthkit/grid.hpp"

namespace depthkit {

void write_depth_pgm(const std::filesystem::path& path, const DepthMap& d);
DepthMap read_depth_pgm(const std::filesystem::path& path);

void write_rgb_ppm(const std::filesystem::path& path, const RgbImage& rgb);
RgbImage read_rgb_ppm(const std::filesystem::path& path);

void write_mask_pgm(const std::filesystem::path& path, const ValidityMask& m);
ValidityMask read_mask_pgm(const std::filesystem::path& path);

}  // namespace depthkit
