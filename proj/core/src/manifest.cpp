#include "v2v/manifest.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace v2v {

namespace {

using nlohmann::json;

json point_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

Point3 point_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string("manifest: ") + what + " must be [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("manifest: missing field '") + key + "'");
  return *it;
}

}  // namespace

std::string manifest_line(const ManifestEntry& e) {
  json j;
  j["id"] = e.id;
  j["depth_file"] = e.depth_file;
  json kps = json::array();
  for (const auto& p : e.keypoints) kps.push_back(point_json(p));
  j["keypoints_mm"] = std::move(kps);
  j["ref_point_mm"] = point_json(e.ref_point);
  j["intrinsics"] = {{"fx", e.intrinsics.fx}, {"fy", e.intrinsics.fy}, {"cx", e.intrinsics.cx}, {"cy", e.intrinsics.cy}};
  if (e.distractor) j["distractor"] = {{"center_mm", point_json(e.distractor->center)}, {"radius_mm", e.distractor->radius}};
  return j.dump();
}

ManifestEntry parse_manifest_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& ex) {
    throw std::invalid_argument(std::string("manifest: malformed JSON: ") + ex.what());
  }
  ManifestEntry e;
  try {
    e.id = field(j, "id").get<std::string>();
    e.depth_file = field(j, "depth_file").get<std::string>();
    const auto& kps = field(j, "keypoints_mm");
    if (!kps.is_array()) throw std::invalid_argument("manifest: keypoints_mm must be an array");
    for (const auto& p : kps) e.keypoints.push_back(point_from(p, "keypoint"));
    e.ref_point = point_from(field(j, "ref_point_mm"), "ref_point_mm");
    const auto& k = field(j, "intrinsics");
    e.intrinsics = {field(k, "fx").get<double>(), field(k, "fy").get<double>(), field(k, "cx").get<double>(),
                    field(k, "cy").get<double>()};
    if (auto it = j.find("distractor"); it != j.end()) {
      e.distractor = Distractor{point_from(field(*it, "center_mm"), "distractor center"),
                                field(*it, "radius_mm").get<double>()};
    }
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("manifest: bad field type: ") + ex.what());
  }
  e.intrinsics.validate();
  return e;
}

void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries) {
  for (const auto& e : entries) out << manifest_line(e) << '\n';
}

std::vector<ManifestEntry> read_manifest(std::istream& in) {
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      entries.push_back(parse_manifest_line(line));
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  write_manifest(out, entries);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  return read_manifest(in);
}

}  // namespace v2v
