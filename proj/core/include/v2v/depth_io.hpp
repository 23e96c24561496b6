#pragma once

// Depth frame file:
//   "V2VDPTH1" | u32 width | u32 height | f32 fx | f32 fy | f32 cx | f32 cy | height*width f32 depth (mm)
// little-endian, row-major.

#include <filesystem>
#include <string>

#include "v2v/geometry.hpp"

namespace v2v {

inline constexpr char kDepthMagic[] = "V2VDPTH1";

struct DepthFrame {
  DepthMap depth;
  CameraIntrinsics intrinsics;
};

std::string encode_depth_frame(const DepthFrame& frame);
DepthFrame decode_depth_frame(const std::string& bytes);

void write_depth_frame(const std::filesystem::path& path, const DepthFrame& frame);
DepthFrame read_depth_frame(const std::filesystem::path& path);

}  // namespace v2v
