#pragma once

// JSON-lines dataset manifest, one frame per line:
//   {"id", "depth_file", "keypoints_mm": [[x,y,z]...], "ref_point_mm": [x,y,z],
//    "intrinsics": {"fx","fy","cx","cy"}, optional "distractor": {"center_mm", "radius_mm"}}
// depth_file is relative to the manifest's directory.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "v2v/geometry.hpp"
#include "v2v/heatmap.hpp"

namespace v2v {

struct Distractor {
  Point3 center = Point3::Zero();
  double radius = 0.0;
};

struct ManifestEntry {
  std::string id;
  std::string depth_file;
  KeypointSet keypoints;
  Point3 ref_point = Point3::Zero();
  CameraIntrinsics intrinsics;
  std::optional<Distractor> distractor;
};

std::string manifest_line(const ManifestEntry& e);
ManifestEntry parse_manifest_line(const std::string& line);

void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(std::istream& in);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace v2v
