#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "v2v/depth_io.hpp"
#include "v2v/geometry.hpp"
#include "v2v/heatmap.hpp"
#include "v2v/manifest.hpp"

namespace v2v {

/// Sphere-swept segment; a == b gives a sphere.
struct Capsule {
  Point3 a = Point3::Zero();
  Point3 b = Point3::Zero();
  double radius = 1.0;
};

struct FingerSpec {
  std::string name;
  Point3 base;                    ///< chain root in the hand frame (mm)
  Eigen::Vector3d direction;      ///< straight-finger direction in the hand frame
  Eigen::Vector3d flex_toward;    ///< direction the chain curls toward
  std::array<double, 3> lengths;  ///< bone lengths (mm)
  std::array<double, 3> radii;    ///< bone radii (mm)
  std::array<double, 3> max_flex_deg;
  double max_abduction_deg = 15.0;
};

/// Capsule hand in a local frame: palm in the x-y plane, fingers along +y,
/// palm facing -z. Keypoints: palm center, then the three joints at the end of
/// each bone for thumb, index, middle, ring, pinky (16 total).
struct HandModelSpec {
  double palm_radius = 12.0;
  Point3 palm_center{0.0, 45.0, 0.0};
  std::vector<FingerSpec> fingers;
  std::vector<Capsule> palm_capsules;

  // Global pose ranges.
  double max_roll_deg = 30.0;
  double max_pitch_deg = 20.0;
  double max_yaw_deg = 25.0;
  double lateral_range_mm = 40.0;
  double depth_min_mm = 500.0;
  double depth_max_mm = 900.0;

  std::size_t keypoint_count() const { return 1 + 3 * fingers.size(); }
  void validate() const;
  static HandModelSpec default_hand();
};

std::vector<std::string> keypoint_names(const HandModelSpec& spec);

struct FingerAngles {
  double abduction_deg = 0.0;
  std::array<double, 3> flex_deg{0.0, 0.0, 0.0};
};

struct HandPose {
  std::vector<FingerAngles> fingers;
  double roll_deg = 0.0, pitch_deg = 0.0, yaw_deg = 0.0;
  Point3 palm_position{0.0, 0.0, 700.0};  ///< camera frame (mm)
};

struct Skeleton {
  KeypointSet keypoints;
  std::vector<Capsule> capsules;
};

/// Forward kinematics of a pose into camera-frame keypoints and capsules.
Skeleton pose_skeleton(const HandModelSpec& spec, const HandPose& pose);
HandPose sample_hand_pose(const HandModelSpec& spec, std::mt19937_64& rng);
/// Uniform joint angles within the spec ranges, then forward kinematics.
Skeleton sample_pose(const HandModelSpec& spec, std::mt19937_64& rng);

/// z-buffer splatting of front-facing surface samples; unhit pixels stay 0.
/// Surface sampling spacing is `density` times the pixel footprint at each primitive's nearest depth.
DepthMap render_depth(const std::vector<Capsule>& capsules, const CameraIntrinsics& intrinsics, std::uint32_t width,
                      std::uint32_t height, double density = 0.6);

struct SynthCamera {
  CameraIntrinsics intrinsics{500.0, 500.0, 160.0, 160.0};
  std::uint32_t width = 320;
  std::uint32_t height = 320;
};

struct SceneRecord {
  DepthFrame frame;
  KeypointSet keypoints;
  Point3 ref_point;  ///< mean of ground-truth keypoints
  std::optional<Capsule> distractor;
};

/// Distractor sphere placement relative to the palm (mm).
struct ClutterSpec {
  double radius_min = 60.0, radius_max = 90.0;
  double offset_min = 150.0, offset_max = 230.0;  ///< in the image plane
  double dz_min = -40.0, dz_max = 60.0;

  void validate() const;
};

/// One scene; in clutter mode a spherical distractor is placed beside the hand
/// inside the default depth-threshold band.
SceneRecord generate_scene(const HandModelSpec& spec, const SynthCamera& camera, bool clutter, std::mt19937_64& rng,
                           const ClutterSpec& clutter_spec = {});

struct SynthOptions {
  std::size_t count = 100;
  bool clutter = false;
  ClutterSpec clutter_spec{};
  std::uint64_t seed = 1;
  SynthCamera camera{};
  HandModelSpec hand = HandModelSpec::default_hand();
};

/// Writes frames/<id>.v2vd and manifest.jsonl under `dir`; returns the manifest.
std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& dir, const SynthOptions& opts);

}  // namespace v2v
