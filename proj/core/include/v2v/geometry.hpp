#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace v2v {

using Point3 = Eigen::Vector3d;
using PointCloud = std::vector<Point3>;

/// Thrown when no depth point survives reference-point thresholding.
class NoTargetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 160.0;
  double cy = 160.0;

  void validate() const;
};

/// Range image in millimeters, row-major; 0 means no return.
struct DepthMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> depth;

  DepthMap() = default;
  DepthMap(std::uint32_t w, std::uint32_t h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0f) {}

  float at(std::uint32_t u, std::uint32_t v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  float& at(std::uint32_t u, std::uint32_t v) { return depth[static_cast<std::size_t>(v) * width + u]; }
};

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Back-projects every pixel with positive depth through the pinhole model.
PointCloud reproject(const DepthMap& depth_map, const CameraIntrinsics& intrinsics);
/// Forward pinhole projection; inverse of reproject for points with z > 0.
PixelDepth project(const Point3& p, const CameraIntrinsics& intrinsics);
Point3 reproject_pixel(double u, double v, double depth, const CameraIntrinsics& intrinsics);

struct DepthBand {
  double near_mm = 0.0;
  double far_mm = 0.0;
};

inline constexpr double kDefaultBandWidthMm = 400.0;

/// Center of mass of the points whose z lies in the band. Without an explicit
/// band, uses [z_min, z_min + band_width] with z_min the closest point.
/// Throws NoTargetError when nothing survives.
Point3 initial_reference_point(const PointCloud& cloud, std::optional<DepthBand> band = std::nullopt,
                               double band_width = kDefaultBandWidthMm);

/// Axis-aligned metric cube centered on the reference point.
struct CubicCrop {
  Point3 center = Point3::Zero();
  double side = 300.0;
  std::size_t grid_size = 88;

  double voxel_size() const { return side / static_cast<double>(grid_size); }
  Point3 min_corner() const { return center.array() - side / 2.0; }
  void validate() const;
};

inline constexpr double kHandCubeMm = 300.0;
inline constexpr double kBodyCubeMm = 2000.0;

/// Binary occupancy over crop.grid_size^3 cells, linear index (i * G + j) * G + k
/// with i, j, k along world x, y, z.
struct VoxelGrid {
  CubicCrop crop;
  std::vector<std::uint8_t> occupancy;

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * crop.grid_size + j) * crop.grid_size + k;
  }
  std::uint8_t at(std::size_t i, std::size_t j, std::size_t k) const { return occupancy[index(i, j, k)]; }
  std::size_t occupied_count() const;
};

/// Marks every half-open cell hit by at least one point; points outside are dropped.
VoxelGrid voxelize(const PointCloud& cloud, const CubicCrop& crop);

/// Integer cell index of a point or nullopt when it falls outside the crop.
std::optional<Eigen::Vector3i> cell_of(const Point3& p, const CubicCrop& crop);

/// Cell-center warp at the input resolution: min + (idx + 0.5) * voxel.
Point3 voxel_to_world(const Eigen::Vector3d& voxel, const CubicCrop& crop);
/// Exact inverse of voxel_to_world (fractional voxel coordinates).
Eigen::Vector3d world_to_voxel(const Point3& p, const CubicCrop& crop);

/// Same warps on a grid of `resolution` cells per axis spanning the same cube
/// (e.g. a stride-2 heatmap: resolution = grid_size / 2).
Point3 voxel_to_world(const Eigen::Vector3d& voxel, const CubicCrop& crop, std::size_t resolution);
Eigen::Vector3d world_to_voxel(const Point3& p, const CubicCrop& crop, std::size_t resolution);

}  // namespace v2v
