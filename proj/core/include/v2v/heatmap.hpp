#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "v2v/geometry.hpp"

namespace v2v {

using KeypointSet = std::vector<Point3>;

inline constexpr double kDefaultSigma = 1.7;

struct HeatmapSpec {
  double sigma = kDefaultSigma;  ///< in heatmap voxels
  std::size_t grid_size = 44;    ///< heatmap cells per axis
  std::size_t keypoints = 16;

  void validate() const;
};

/// Per-keypoint likelihood volumes, layout [N, G, G, G] with the same (i, j, k)
/// axis convention as VoxelGrid.
struct HeatmapVolume {
  std::size_t grid_size = 0;
  std::size_t keypoints = 0;
  std::vector<float> values;
  /// Ground-truth volumes only: 1 where the keypoint lies outside the crop.
  std::vector<std::uint8_t> out_of_crop;

  float at(std::size_t n, std::size_t i, std::size_t j, std::size_t k) const {
    return values[((n * grid_size + i) * grid_size + j) * grid_size + k];
  }
};

/// exp(-|cell - peak|^2 / (2 sigma^2)), both in heatmap-voxel coordinates.
double gaussian_value(const Eigen::Vector3d& cell, const Eigen::Vector3d& peak, double sigma);

/// Fractional heatmap-grid coordinate of a world point.
Eigen::Vector3d heatmap_coordinate(const Point3& p, const CubicCrop& crop, std::size_t heatmap_grid);

/// Writes N * G^3 values into `out`; returns per-keypoint out-of-crop flags.
template <typename T>
std::vector<std::uint8_t> encode_into(const KeypointSet& keypoints, const CubicCrop& crop, const HeatmapSpec& spec,
                                      std::span<T> out);

HeatmapVolume encode(const KeypointSet& keypoints, const CubicCrop& crop, const HeatmapSpec& spec);

struct DecodeResult {
  KeypointSet keypoints;
  std::vector<Eigen::Vector3i> cells;
  std::vector<std::uint8_t> flat;  ///< 1 when the volume was constant (argmax defaults to cell 0)
};

/// Argmax per keypoint (smallest row-major index on ties), warped to world
/// coordinates at the heatmap resolution.
template <typename T>
DecodeResult decode(std::span<const T> values, std::size_t keypoints, std::size_t heatmap_grid,
                    const CubicCrop& crop);

DecodeResult decode(const HeatmapVolume& volume, const CubicCrop& crop);

struct PredictionRecord {
  std::string id;
  KeypointSet keypoints;
};

/// One line per frame: id then x, y, z per keypoint, tab-separated, 6 significant digits.
void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(std::istream& in);

}  // namespace v2v
