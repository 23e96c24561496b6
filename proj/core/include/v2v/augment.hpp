#pragma once

#include <cstdint>
#include <random>

#include "v2v/geometry.hpp"
#include "v2v/heatmap.hpp"

namespace v2v {

/// Ranges for training-time augmentation. Translation is in input voxels.
struct AugmentSpec {
  double rot_min_deg = -40.0, rot_max_deg = 40.0;
  double scale_min = 0.8, scale_max = 1.2;
  double trans_min_vox = -8.0, trans_max_vox = 8.0;

  void validate() const;
  static AugmentSpec none() { return {0.0, 0.0, 1.0, 1.0, 0.0, 0.0}; }
};

struct AugmentParams {
  double theta_deg = 0.0;
  double scale = 1.0;
  Eigen::Vector3d translation_vox = Eigen::Vector3d::Zero();
};

/// Uniform draws of rotation, isotropic scale and a per-axis translation.
AugmentParams sample_augment(const AugmentSpec& spec, std::mt19937_64& rng);

/// p' = c + s R_z(theta) (p - c) + t * voxel_size, with c the crop center.
Point3 apply_augment(const Point3& p, const CubicCrop& crop, const AugmentParams& params);

/// Transforms cloud and keypoints identically; the crop itself is unchanged.
void augment(PointCloud& cloud, KeypointSet& keypoints, const CubicCrop& crop, const AugmentParams& params);

/// Independent stream per (seed, frame): seeded with seed XOR frame index.
std::mt19937_64 frame_rng(std::uint64_t seed, std::uint64_t frame_index);

}  // namespace v2v
