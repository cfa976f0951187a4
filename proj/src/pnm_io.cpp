#include "depthkit/pnm_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "depthkit/errors.hpp"

namespace depthkit {
namespace {

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

void write_header(std::ofstream& out, const char* magic, int w, int h, int maxval) {
  out << magic << '\n' << w << ' ' << h << '\n' << maxval << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  return out;
}

void skip_space_and_comments(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

PnmHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  PnmHeader hdr;
  in >> hdr.magic;
  skip_space_and_comments(in);
  in >> hdr.width;
  skip_space_and_comments(in);
  in >> hdr.height;
  skip_space_and_comments(in);
  in >> hdr.maxval;
  in.get();  // single whitespace before the raster
  if (!in || hdr.width <= 0 || hdr.height <= 0 || hdr.maxval <= 0 || hdr.maxval > 65535) {
    fail(ErrorCode::Parse, "bad PNM header: " + path.string());
  }
  return hdr;
}

std::vector<unsigned char> read_raster(std::ifstream& in, std::size_t n, const std::filesystem::path& path) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail(ErrorCode::Parse, "truncated raster: " + path.string());
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open for reading: " + path.string());
  return in;
}

}  // namespace

void write_depth_pgm(const std::filesystem::path& path, const DepthMap& d) {
  auto out = open_out(path);
  write_header(out, "P5", d.width(), d.height(), 65535);
  std::vector<unsigned char> buf(d.size() * 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double mm = std::clamp(std::round(d[i] * 1000.0), 0.0, 65535.0);
    const auto v = static_cast<unsigned>(mm);
    buf[2 * i] = static_cast<unsigned char>(v >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

DepthMap read_depth_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader hdr = read_header(in, path);
  if (hdr.magic != "P5" || hdr.maxval < 256) fail(ErrorCode::Parse, "expected 16-bit P5 depth: " + path.string());
  const std::size_t n = static_cast<std::size_t>(hdr.width) * hdr.height;
  const auto buf = read_raster(in, n * 2, path);
  DepthMap d(hdr.width, hdr.height);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
    d[i] = v / 1000.0;
  }
  return d;
}

void write_rgb_ppm(const std::filesystem::path& path, const RgbImage& rgb) {
  auto out = open_out(path);
  write_header(out, "P6", rgb.width(), rgb.height(), 255);
  std::vector<unsigned char> buf(rgb.size() * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      buf[3 * i + c] = static_cast<unsigned char>(std::clamp(std::round(rgb[i][c] * 255.0), 0.0, 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

RgbImage read_rgb_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader hdr = read_header(in, path);
  if (hdr.magic != "P6" || hdr.maxval > 255) fail(ErrorCode::Parse, "expected 8-bit P6 rgb: " + path.string());
  const std::size_t n = static_cast<std::size_t>(hdr.width) * hdr.height;
  const auto buf = read_raster(in, n * 3, path);
  RgbImage rgb(hdr.width, hdr.height);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) rgb[i][c] = buf[3 * i + c] / static_cast<double>(hdr.maxval);
  }
  return rgb;
}

void write_mask_pgm(const std::filesystem::path& path, const ValidityMask& m) {
  auto out = open_out(path);
  write_header(out, "P5", m.width(), m.height(), 255);
  std::vector<unsigned char> buf(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) buf[i] = m.valid(i) ? 255 : 0;
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

ValidityMask read_mask_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader hdr = read_header(in, path);
  if (hdr.magic != "P5" || hdr.maxval > 255) fail(ErrorCode::Parse, "expected 8-bit P5 mask: " + path.string());
  const std::size_t n = static_cast<std::size_t>(hdr.width) * hdr.height;
  const auto buf = read_raster(in, n, path);
  ValidityMask m(hdr.width, hdr.height);
  for (std::size_t i = 0; i < n; ++i) m[i] = buf[i] != 0 ? 1 : 0;
  return m;
}

}  // namespace depthkit
