#include "v2v/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace v2v {

void AugmentSpec::validate() const {
  if (rot_min_deg > rot_max_deg || scale_min > scale_max || trans_min_vox > trans_max_vox) {
    throw std::invalid_argument("augment: every range must satisfy min <= max");
  }
  if (!(scale_min > 0.0)) throw std::invalid_argument("augment: scale must stay positive");
}

namespace {
double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
}  // namespace

AugmentParams sample_augment(const AugmentSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  AugmentParams p;
  p.theta_deg = uniform(rng, spec.rot_min_deg, spec.rot_max_deg);
  p.scale = uniform(rng, spec.scale_min, spec.scale_max);
  for (int a = 0; a < 3; ++a) p.translation_vox[a] = uniform(rng, spec.trans_min_vox, spec.trans_max_vox);
  return p;
}

Point3 apply_augment(const Point3& p, const CubicCrop& crop, const AugmentParams& params) {
  const double th = params.theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const Point3 d = p - crop.center;
  const Point3 r{c * d.x() - s * d.y(), s * d.x() + c * d.y(), d.z()};
  return crop.center + params.scale * r + params.translation_vox * crop.voxel_size();
}

void augment(PointCloud& cloud, KeypointSet& keypoints, const CubicCrop& crop, const AugmentParams& params) {
  for (auto& p : cloud) p = apply_augment(p, crop, params);
  for (auto& k : keypoints) k = apply_augment(k, crop, params);
}

std::mt19937_64 frame_rng(std::uint64_t seed, std::uint64_t frame_index) {
  return std::mt19937_64(seed ^ frame_index);
}

}  // namespace v2v
