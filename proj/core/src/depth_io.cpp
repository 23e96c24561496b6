#include "v2v/depth_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace v2v {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_depth_frame(const DepthFrame& frame) {
  const auto& dm = frame.depth;
  if (dm.depth.size() != static_cast<std::size_t>(dm.width) * dm.height) {
    throw std::invalid_argument("depth frame: pixel count does not match width x height");
  }
  std::string out(kDepthMagic, 8);
  out.reserve(8 + 24 + 4 * dm.depth.size());
  put_u32(out, dm.width);
  put_u32(out, dm.height);
  for (double v : {frame.intrinsics.fx, frame.intrinsics.fy, frame.intrinsics.cx, frame.intrinsics.cy}) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  for (float d : dm.depth) put_u32(out, std::bit_cast<std::uint32_t>(d));
  return out;
}

DepthFrame decode_depth_frame(const std::string& bytes) {
  if (bytes.size() < 32 || bytes.compare(0, 8, kDepthMagic, 8) != 0) {
    throw std::runtime_error("not a V2VDPTH1 depth frame");
  }
  DepthFrame f;
  f.depth.width = get_u32(bytes, 8);
  f.depth.height = get_u32(bytes, 12);
  f.intrinsics.fx = std::bit_cast<float>(get_u32(bytes, 16));
  f.intrinsics.fy = std::bit_cast<float>(get_u32(bytes, 20));
  f.intrinsics.cx = std::bit_cast<float>(get_u32(bytes, 24));
  f.intrinsics.cy = std::bit_cast<float>(get_u32(bytes, 28));
  const std::size_t n = static_cast<std::size_t>(f.depth.width) * f.depth.height;
  if (bytes.size() != 32 + 4 * n) throw std::runtime_error("depth frame: size does not match header");
  f.depth.depth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float d = std::bit_cast<float>(get_u32(bytes, 32 + 4 * i));
    if (!(d >= 0.0f) || !std::isfinite(d)) throw std::runtime_error("depth frame: negative or non-finite depth");
    f.depth.depth[i] = d;
  }
  return f;
}

void write_depth_frame(const std::filesystem::path& path, const DepthFrame& frame) {
  const std::string bytes = encode_depth_frame(frame);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DepthFrame read_depth_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open depth frame " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_depth_frame(ss.str());
}

}  // namespace v2v
