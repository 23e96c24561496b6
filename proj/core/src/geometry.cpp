#include "v2v/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace v2v {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera intrinsics: focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw std::invalid_argument("camera intrinsics: principal point must be finite");
}

Point3 reproject_pixel(double u, double v, double depth, const CameraIntrinsics& k) {
  return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

PointCloud reproject(const DepthMap& dm, const CameraIntrinsics& k) {
  k.validate();
  PointCloud cloud;
  for (std::uint32_t v = 0; v < dm.height; ++v) {
    for (std::uint32_t u = 0; u < dm.width; ++u) {
      const float d = dm.at(u, v);
      if (d > 0.0f) cloud.push_back(reproject_pixel(u, v, d, k));
    }
  }
  return cloud;
}

PixelDepth project(const Point3& p, const CameraIntrinsics& k) {
  return {p.x() * k.fx / p.z() + k.cx, p.y() * k.fy / p.z() + k.cy, p.z()};
}

Point3 initial_reference_point(const PointCloud& cloud, std::optional<DepthBand> band, double band_width) {
  if (!band) {
    double z_min = std::numeric_limits<double>::infinity();
    for (const auto& p : cloud) z_min = std::min(z_min, p.z());
    if (!std::isfinite(z_min)) throw NoTargetError("reference point: empty point cloud");
    band = DepthBand{z_min, z_min + band_width};
  }
  Point3 sum = Point3::Zero();
  std::size_t n = 0;
  for (const auto& p : cloud) {
    if (p.z() >= band->near_mm && p.z() <= band->far_mm) {
      sum += p;
      ++n;
    }
  }
  if (n == 0) {
    throw NoTargetError("reference point: no depth point in band [" + std::to_string(band->near_mm) + ", " +
                        std::to_string(band->far_mm) + "] mm");
  }
  return sum / static_cast<double>(n);
}

void CubicCrop::validate() const {
  if (!(side > 0.0)) throw std::invalid_argument("cubic crop: side must be positive");
  if (grid_size < 2 || grid_size % 2) throw std::invalid_argument("cubic crop: grid size must be even and >= 2");
  if (!center.allFinite()) throw std::invalid_argument("cubic crop: center must be finite");
}

std::size_t VoxelGrid::occupied_count() const {
  std::size_t n = 0;
  for (auto v : occupancy) n += v;
  return n;
}

std::optional<Eigen::Vector3i> cell_of(const Point3& p, const CubicCrop& crop) {
  const Point3 lo = crop.min_corner();
  const double g = static_cast<double>(crop.grid_size);
  Eigen::Vector3i idx;
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((p[a] - lo[a]) * g / crop.side);
    if (!(f >= 0.0) || f >= g) return std::nullopt;
    idx[a] = static_cast<int>(f);
  }
  return idx;
}

VoxelGrid voxelize(const PointCloud& cloud, const CubicCrop& crop) {
  crop.validate();
  VoxelGrid grid{crop, std::vector<std::uint8_t>(crop.grid_size * crop.grid_size * crop.grid_size, 0)};
  for (const auto& p : cloud) {
    if (auto c = cell_of(p, crop)) grid.occupancy[grid.index((*c)[0], (*c)[1], (*c)[2])] = 1;
  }
  return grid;
}

Point3 voxel_to_world(const Eigen::Vector3d& voxel, const CubicCrop& crop, std::size_t resolution) {
  const double cell = crop.side / static_cast<double>(resolution);
  return crop.min_corner().array() + (voxel.array() + 0.5) * cell;
}

Eigen::Vector3d world_to_voxel(const Point3& p, const CubicCrop& crop, std::size_t resolution) {
  return (p - crop.min_corner()).array() * static_cast<double>(resolution) / crop.side - 0.5;
}

Point3 voxel_to_world(const Eigen::Vector3d& voxel, const CubicCrop& crop) {
  return voxel_to_world(voxel, crop, crop.grid_size);
}

Eigen::Vector3d world_to_voxel(const Point3& p, const CubicCrop& crop) {
  return world_to_voxel(p, crop, crop.grid_size);
}

}  // namespace v2v
