#include "depthkit/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "depthkit/errors.hpp"

namespace depthkit {
namespace {

constexpr char kMagic[8] = {'D', 'K', 'W', 'E', 'I', 'G', 'H', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_weights(const std::filesystem::path& path, std::span<const Parameter* const> params,
                  const nlohmann::json& meta) {
  nlohmann::ordered_json header;
  header["tensors"] = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const Parameter* p : params) {
    const Shape s = p->value.shape();
    header["tensors"].push_back({{"name", p->name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += p->value.size();
  }
  header["meta"] = meta;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(p->value[i]));
      put_u32(out, bits);
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

WeightFile load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open for reading: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCode::Parse, "not a weight file: " + path.string());
  }
  const std::uint32_t len = get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) fail(ErrorCode::Parse, "truncated header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  const std::size_t payload = 12 + static_cast<std::size_t>(len);
  const std::size_t n_floats = (bytes.size() - payload) / 4;

  WeightFile wf;
  wf.meta = header.value("meta", nlohmann::json::object());
  try {
    for (const auto& t : header.at("tensors")) {
      const auto dims = t.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) fail(ErrorCode::Parse, "tensor shape must have 4 dims");
      const Shape s{dims[0], dims[1], dims[2], dims[3]};
      const auto offset = t.at("offset").get<std::size_t>();
      if (offset + s.size() > n_floats) fail(ErrorCode::Parse, "tensor data past end of file");
      Tensor v(s);
      for (std::size_t i = 0; i < s.size(); ++i) {
        v[i] = static_cast<Scalar>(std::bit_cast<float>(get_u32(bytes.data() + payload + 4 * (offset + i))));
      }
      wf.tensors.push_back({t.at("name").get<std::string>(), std::move(v)});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return wf;
}

}  // namespace depthkit
