#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "v2v/augment.hpp"
#include "v2v/depth_io.hpp"
#include "v2v/geometry.hpp"
#include "v2v/heatmap.hpp"
#include "v2v/network.hpp"

namespace v2v {

/// Bounding box of the nonzero pixels of a depth map, with its origin in the full image.
struct DepthWindow {
  std::uint32_t u0 = 0, v0 = 0;
  std::uint32_t width = 0, height = 0;
  std::vector<float> depth;

  /// Depth at full-image pixel (u, v); 0 outside the window.
  float at(long u, long v) const {
    if (u < static_cast<long>(u0) || v < static_cast<long>(v0)) return 0.0f;
    const auto du = static_cast<std::uint32_t>(u - u0), dv = static_cast<std::uint32_t>(v - v0);
    if (du >= width || dv >= height) return 0.0f;
    return depth[static_cast<std::size_t>(dv) * width + du];
  }
};

DepthWindow crop_to_content(const DepthMap& map);
PointCloud reproject(const DepthWindow& window, const CameraIntrinsics& intrinsics);

/// A loaded frame: depth content, ground truth and the candidate crop centers.
struct Frame {
  std::string id;
  CameraIntrinsics intrinsics;
  DepthWindow depth;
  KeypointSet keypoints;
  Point3 gt_ref = Point3::Zero();   ///< manifest reference (mean of joints for synthetic data)
  Point3 com_ref = Point3::Zero();  ///< depth-threshold center of mass
  std::optional<Point3> refined_ref;
};

/// Frame without ground truth; com_ref from the depth band around the nearest point.
Frame frame_from_depth(std::string id, const DepthFrame& depth, double band_width = kDefaultBandWidthMm);

/// Reads a manifest and every depth file it names. Frames whose band is empty
/// raise NoTargetError naming the frame.
std::vector<Frame> load_frames(const std::filesystem::path& manifest, double band_width = kDefaultBandWidthMm);

enum class RefSource { gt, com, refined };
std::string to_string(RefSource s);
RefSource ref_source_from_string(const std::string& s);
Point3 reference_of(const Frame& frame, RefSource source);
std::vector<Point3> references(const std::vector<Frame>& frames, RefSource source);

/// What one training or inference sample looks like.
struct SampleSpec {
  NetworkConfig net;
  double cube_mm = kHandCubeMm;
  double sigma = kDefaultSigma;

  CubicCrop crop_at(const Point3& center) const { return {center, cube_mm, net.input_grid}; }
  HeatmapSpec heatmap() const { return {sigma, net.heatmap_grid(), net.keypoints}; }
  Shape input_shape(std::size_t batch) const;
  Shape target_shape(std::size_t batch) const;
};

struct Batch {
  Tensor<float> input;   ///< [B, 1, G, G, G] occupancy
  Tensor<float> target;  ///< heatmaps [B, N, H, H, H] or normalized coordinates [B, 3N]
  std::vector<CubicCrop> crops;
};

/// Writes the occupancy of `cloud` inside `crop` into G^3 floats (0/1).
void fill_occupancy(const PointCloud& cloud, const CubicCrop& crop, float* out);

/// Coordinate-head targets: (p - min_corner) / side per axis.
void encode_coordinates(const KeypointSet& keypoints, const CubicCrop& crop, float* out);
KeypointSet decode_coordinates(const float* values, std::size_t keypoints, const CubicCrop& crop);

/// Builds a batch from frames[indices[b]] cropped at refs[b]. With `augment`
/// set, each sample draws its parameters from frame_rng(augment_seed, indices[b]).
Batch assemble_batch(const std::vector<Frame>& frames, const std::vector<std::size_t>& indices,
                     const std::vector<Point3>& refs, const SampleSpec& spec, const AugmentSpec* augment = nullptr,
                     std::uint64_t augment_seed = 0, bool with_target = true);

/// World-coordinate keypoints of sample b of a network output.
KeypointSet decode_output(const Tensor<float>& output, std::size_t b, const CubicCrop& crop, const SampleSpec& spec);

}  // namespace v2v
