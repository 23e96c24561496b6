#include "v2v/synth.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "v2v/augment.hpp"
#include "v2v/parallel.hpp"

namespace v2v {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

FingerSpec finger(const char* name, Point3 base, Eigen::Vector3d dir, Eigen::Vector3d flex, std::array<double, 3> len,
                  std::array<double, 3> rad, std::array<double, 3> max_flex, double abd) {
  return {name, base, dir.normalized(), flex.normalized(), len, rad, max_flex, abd};
}

}  // namespace

HandModelSpec HandModelSpec::default_hand() {
  HandModelSpec h;
  const Eigen::Vector3d up{0, 1, 0}, palmward{0, 0, -1};
  h.fingers = {
      finger("thumb", {-25, 20, 0}, {-0.6, 0.8, 0}, {0.55, 0.2, -0.8}, {38, 30, 25}, {11, 9.5, 8.5}, {40, 60, 70}, 20),
      finger("index", {-26, 88, 0}, up, palmward, {42, 26, 20}, {9, 8.5, 7.5}, {85, 100, 70}, 15),
      finger("middle", {-9, 92, 0}, up, palmward, {46, 29, 22}, {9.5, 9, 8}, {85, 100, 70}, 10),
      finger("ring", {9, 89, 0}, up, palmward, {43, 27, 21}, {9, 8.5, 7.5}, {85, 100, 70}, 10),
      finger("pinky", {25, 82, 0}, up, palmward, {33, 21, 18}, {8, 7.5, 7}, {85, 100, 70}, 15),
  };
  const double r = h.palm_radius;
  const double wrist_x[] = {-20, -7, 7, 20};
  for (int f = 0; f < 4; ++f) h.palm_capsules.push_back({Point3{wrist_x[f], 8, 0}, h.fingers[f + 1].base, r});
  h.palm_capsules.push_back({Point3{-20, 8, 0}, Point3{20, 8, 0}, r});
  h.palm_capsules.push_back({h.fingers[1].base, h.fingers[4].base, r});
  return h;
}

void HandModelSpec::validate() const {
  if (!(palm_radius > 0.0)) throw std::invalid_argument("hand model: palm radius must be positive");
  if (fingers.empty()) throw std::invalid_argument("hand model: at least one finger required");
  for (const auto& f : fingers) {
    for (int b = 0; b < 3; ++b) {
      if (!(f.lengths[b] > 0.0) || !(f.radii[b] > 0.0)) {
        throw std::invalid_argument("hand model: finger '" + f.name + "' needs positive bone lengths and radii");
      }
      if (f.max_flex_deg[b] < 0.0 || f.max_flex_deg[b] > 120.0) {
        throw std::invalid_argument("hand model: finger '" + f.name + "' flexion range outside [0, 120] degrees");
      }
    }
    if (f.max_abduction_deg < 0.0 || f.max_abduction_deg > 45.0) {
      throw std::invalid_argument("hand model: finger '" + f.name + "' abduction range outside [0, 45] degrees");
    }
  }
  if (!(depth_min_mm > 0.0) || depth_max_mm < depth_min_mm) throw std::invalid_argument("hand model: bad depth range");
}

std::vector<std::string> keypoint_names(const HandModelSpec& spec) {
  std::vector<std::string> names{"palm"};
  for (const auto& f : spec.fingers) {
    for (const char* j : {"_1", "_2", "_tip"}) names.push_back(f.name + j);
  }
  return names;
}

Skeleton pose_skeleton(const HandModelSpec& spec, const HandPose& pose) {
  spec.validate();
  if (pose.fingers.size() != spec.fingers.size()) throw std::invalid_argument("hand pose: finger count mismatch");
  const Eigen::Matrix3d rot = (Eigen::AngleAxisd(pose.roll_deg * kDeg, Eigen::Vector3d::UnitZ()) *
                               Eigen::AngleAxisd(pose.pitch_deg * kDeg, Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(pose.yaw_deg * kDeg, Eigen::Vector3d::UnitY()))
                                  .toRotationMatrix();
  auto to_camera = [&](const Point3& p) -> Point3 { return pose.palm_position + rot * (p - spec.palm_center); };

  Skeleton sk;
  sk.keypoints.push_back(to_camera(spec.palm_center));
  for (const auto& c : spec.palm_capsules) sk.capsules.push_back({to_camera(c.a), to_camera(c.b), c.radius});
  for (std::size_t f = 0; f < spec.fingers.size(); ++f) {
    const auto& fs = spec.fingers[f];
    const auto& ang = pose.fingers[f];
    const Eigen::Vector3d dir =
        Eigen::AngleAxisd(ang.abduction_deg * kDeg, Eigen::Vector3d::UnitZ()).toRotationMatrix() * fs.direction;
    const Eigen::Vector3d flex = (fs.flex_toward - fs.flex_toward.dot(dir) * dir).normalized();
    Point3 joint = fs.base;
    double bend = 0.0;
    for (int b = 0; b < 3; ++b) {
      bend += ang.flex_deg[b] * kDeg;
      const Point3 next = joint + fs.lengths[b] * (std::cos(bend) * dir + std::sin(bend) * flex);
      sk.capsules.push_back({to_camera(joint), to_camera(next), fs.radii[b]});
      sk.keypoints.push_back(to_camera(next));
      joint = next;
    }
  }
  return sk;
}

HandPose sample_hand_pose(const HandModelSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  HandPose pose;
  for (const auto& f : spec.fingers) {
    FingerAngles a;
    a.abduction_deg = uniform(rng, -f.max_abduction_deg, f.max_abduction_deg);
    for (int b = 0; b < 3; ++b) a.flex_deg[b] = uniform(rng, 0.0, f.max_flex_deg[b]);
    pose.fingers.push_back(a);
  }
  pose.roll_deg = uniform(rng, -spec.max_roll_deg, spec.max_roll_deg);
  pose.pitch_deg = uniform(rng, -spec.max_pitch_deg, spec.max_pitch_deg);
  pose.yaw_deg = uniform(rng, -spec.max_yaw_deg, spec.max_yaw_deg);
  pose.palm_position = {uniform(rng, -spec.lateral_range_mm, spec.lateral_range_mm),
                        uniform(rng, -spec.lateral_range_mm, spec.lateral_range_mm),
                        uniform(rng, spec.depth_min_mm, spec.depth_max_mm)};
  return pose;
}

Skeleton sample_pose(const HandModelSpec& spec, std::mt19937_64& rng) {
  return pose_skeleton(spec, sample_hand_pose(spec, rng));
}

namespace {

struct Splatter {
  const CameraIntrinsics& k;
  DepthMap& dm;

  void point(const Point3& p, const Eigen::Vector3d& normal) {
    if (p.z() <= 0.0 || normal.dot(p) > 0.0) return;
    const double u = std::round(p.x() * k.fx / p.z() + k.cx);
    const double v = std::round(p.y() * k.fy / p.z() + k.cy);
    if (u < 0.0 || v < 0.0 || u >= dm.width || v >= dm.height) return;
    float& d = dm.at(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
    const float z = static_cast<float>(p.z());
    if (d == 0.0f || z < d) d = z;
  }

  // Cap of the sphere at `c` on the far side of `axis` (the whole sphere when axis is zero).
  void sphere_cap(const Point3& c, double r, const Eigen::Vector3d& axis, double step) {
    const int n_polar = std::max(2, static_cast<int>(std::ceil(std::numbers::pi * r / step)));
    for (int ip = 0; ip <= n_polar; ++ip) {
      const double th = std::numbers::pi * ip / n_polar;
      const double ring = r * std::sin(th);
      const int n_az = std::max(1, static_cast<int>(std::ceil(2.0 * std::numbers::pi * ring / step)));
      for (int ia = 0; ia < n_az; ++ia) {
        const double ph = 2.0 * std::numbers::pi * ia / n_az;
        const Eigen::Vector3d n{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
        if (n.dot(axis) > 0.0) continue;
        point(c + r * n, n);
      }
    }
  }

  void capsule(const Capsule& c, double density) {
    const double z_near = std::max(1.0, std::min(c.a.z(), c.b.z()) - c.radius);
    const double step = density * z_near / std::max(k.fx, k.fy);
    const Eigen::Vector3d axis = c.b - c.a;
    const double len = axis.norm();
    if (len == 0.0) {
      sphere_cap(c.a, c.radius, Eigen::Vector3d::Zero(), step);
      return;
    }
    const Eigen::Vector3d u = axis / len;
    const Eigen::Vector3d e1 = u.unitOrthogonal();
    const Eigen::Vector3d e2 = u.cross(e1);
    const int n_len = static_cast<int>(std::ceil(len / step));
    const int n_az = std::max(3, static_cast<int>(std::ceil(2.0 * std::numbers::pi * c.radius / step)));
    for (int it = 0; it <= n_len; ++it) {
      const Point3 on_axis = c.a + axis * (static_cast<double>(it) / n_len);
      for (int ia = 0; ia < n_az; ++ia) {
        const double ph = 2.0 * std::numbers::pi * ia / n_az;
        const Eigen::Vector3d n = std::cos(ph) * e1 + std::sin(ph) * e2;
        point(on_axis + c.radius * n, n);
      }
    }
    sphere_cap(c.a, c.radius, u, step);
    sphere_cap(c.b, c.radius, -u, step);
  }
};

}  // namespace

DepthMap render_depth(const std::vector<Capsule>& capsules, const CameraIntrinsics& intrinsics, std::uint32_t width,
                      std::uint32_t height, double density) {
  intrinsics.validate();
  if (!(density > 0.0)) throw std::invalid_argument("render: sampling density must be positive");
  DepthMap dm(width, height);
  Splatter s{intrinsics, dm};
  for (const auto& c : capsules) {
    if (!(c.radius > 0.0)) throw std::invalid_argument("render: capsule radius must be positive");
    s.capsule(c, density);
  }
  return dm;
}

void ClutterSpec::validate() const {
  if (!(radius_min > 0.0 && radius_min <= radius_max)) throw std::invalid_argument("clutter: bad radius range");
  if (!(offset_min >= 0.0 && offset_min <= offset_max)) throw std::invalid_argument("clutter: bad offset range");
  if (!(dz_min <= dz_max)) throw std::invalid_argument("clutter: bad depth offset range");
}

SceneRecord generate_scene(const HandModelSpec& spec, const SynthCamera& camera, bool clutter, std::mt19937_64& rng,
                           const ClutterSpec& cs) {
  Skeleton sk = sample_pose(spec, rng);
  SceneRecord rec;
  rec.keypoints = sk.keypoints;
  rec.ref_point = Point3::Zero();
  for (const auto& p : sk.keypoints) rec.ref_point += p;
  rec.ref_point /= static_cast<double>(sk.keypoints.size());
  if (clutter) {
    const Point3 palm = sk.keypoints.front();
    cs.validate();
    const double radius = uniform(rng, cs.radius_min, cs.radius_max);
    const double dist = uniform(rng, cs.offset_min, cs.offset_max);
    const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double dz = uniform(rng, cs.dz_min, cs.dz_max);
    Capsule blob;
    blob.a = blob.b = palm + Point3{dist * std::cos(ang), dist * std::sin(ang), dz};
    blob.radius = radius;
    sk.capsules.push_back(blob);
    rec.distractor = blob;
  }
  rec.frame.intrinsics = camera.intrinsics;
  rec.frame.depth = render_depth(sk.capsules, camera.intrinsics, camera.width, camera.height);
  return rec;
}

std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& dir, const SynthOptions& opts) {
  if (opts.count == 0) throw std::invalid_argument("synth: count must be at least 1");
  opts.hand.validate();
  std::filesystem::create_directories(dir / "frames");
  std::vector<ManifestEntry> entries(opts.count);
  parallel_for(opts.count, [&](std::size_t i) {
    auto rng = frame_rng(opts.seed, i);
    SceneRecord rec = generate_scene(opts.hand, opts.camera, opts.clutter, rng, opts.clutter_spec);
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    ManifestEntry& e = entries[i];
    e.id = id;
    e.depth_file = std::string("frames/") + id + ".v2vd";
    e.keypoints = rec.keypoints;
    e.ref_point = rec.ref_point;
    e.intrinsics = rec.frame.intrinsics;
    if (rec.distractor) e.distractor = Distractor{rec.distractor->a, rec.distractor->radius};
    write_depth_frame(dir / e.depth_file, rec.frame);
  });
  write_manifest(dir / "manifest.jsonl", entries);
  return entries;
}

}  // namespace v2v
