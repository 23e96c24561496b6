#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "v2v/depth_io.hpp"
#include "v2v/synth.hpp"

using namespace v2v;
using v2v::testing::TempDir;

TEST(HandModel, SixteenNamedKeypoints) {
  const auto spec = HandModelSpec::default_hand();
  spec.validate();
  const auto names = keypoint_names(spec);
  ASSERT_EQ(names.size(), 16u);
  EXPECT_EQ(names.front(), "palm");
  EXPECT_EQ(names.back(), "pinky_tip");
}

TEST(HandModel, OpenHandBoneLengthsArePreserved) {
  const auto spec = HandModelSpec::default_hand();
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const Skeleton s = pose_skeleton(spec, sample_hand_pose(spec, rng));
    for (std::size_t f = 0; f < spec.fingers.size(); ++f) {
      for (int b = 1; b < 3; ++b) {
        const double len = (s.keypoints[1 + 3 * f + b] - s.keypoints[1 + 3 * f + b - 1]).norm();
        EXPECT_NEAR(len, spec.fingers[f].lengths[b], 1e-9);
      }
    }
  }
}

TEST(Render, SphereDepthMatchesAnalyticSurface) {
  const CameraIntrinsics k{500, 500, 160, 160};
  const Capsule ball{{0, 0, 600}, {0, 0, 600}, 50.0};
  const DepthMap m = render_depth({ball}, k, 320, 320);
  EXPECT_NEAR(m.at(160, 160), 550.0, 1.5);
  EXPECT_EQ(m.at(0, 0), 0.0f);
  std::size_t hit = 0;
  for (float d : m.depth) hit += d > 0.0f;
  // projected radius ~ f r / sqrt(z^2 - r^2)
  const double rp = 500.0 * 50.0 / std::sqrt(600.0 * 600.0 - 50.0 * 50.0);
  EXPECT_NEAR(static_cast<double>(hit), 3.14159 * rp * rp, 0.1 * 3.14159 * rp * rp);
}

TEST(Render, NearerSurfaceWinsTheZBuffer) {
  const CameraIntrinsics k{500, 500, 160, 160};
  const DepthMap m = render_depth({{{0, 0, 900}, {0, 0, 900}, 60.0}, {{0, 0, 600}, {0, 0, 600}, 20.0}}, k, 320, 320);
  EXPECT_NEAR(m.at(160, 160), 580.0, 1.5);
}

TEST(Scenes, DeterministicPerSeedAndKeypointsProjectIntoImage) {
  const auto spec = HandModelSpec::default_hand();
  const SynthCamera cam;
  std::mt19937_64 a(5), b(5);
  const SceneRecord s1 = generate_scene(spec, cam, true, a);
  const SceneRecord s2 = generate_scene(spec, cam, true, b);
  EXPECT_EQ(s1.frame.depth.depth, s2.frame.depth.depth);
  ASSERT_TRUE(s1.distractor.has_value());
  Point3 mean = Point3::Zero();
  for (const auto& p : s1.keypoints) {
    const auto px = project(p, cam.intrinsics);
    EXPECT_GT(px.u, 0.0);
    EXPECT_LT(px.u, cam.width);
    mean += p;
  }
  EXPECT_TRUE(s1.ref_point.isApprox(mean / 16.0));
}

TEST(Dataset, WritesManifestAndFramesThatReadBack) {
  TempDir dir("synth");
  SynthOptions o;
  o.count = 6;
  o.seed = 3;
  o.clutter = true;
  const auto entries = generate_dataset(dir.path(), o);
  ASSERT_EQ(entries.size(), 6u);
  const auto back = read_manifest(dir.path() / "manifest.jsonl");
  ASSERT_EQ(back.size(), 6u);
  EXPECT_EQ(manifest_line(back[2]), manifest_line(entries[2]));
  ASSERT_TRUE(back[0].distractor.has_value());
  const DepthFrame f = read_depth_frame(dir.path() / back[0].depth_file);
  EXPECT_EQ(f.depth.width, 320u);
  // Same seed, same bytes.
  TempDir again("synth2");
  generate_dataset(again.path(), o);
  std::ifstream x(dir.path() / back[4].depth_file, std::ios::binary), y(again.path() / back[4].depth_file, std::ios::binary);
  std::stringstream bx, by;
  bx << x.rdbuf();
  by << y.rdbuf();
  EXPECT_EQ(bx.str(), by.str());
}

TEST(DepthIo, EncodeDecodeRoundTripAndBadMagic) {
  DepthFrame f;
  f.depth = DepthMap(3, 2);
  f.depth.at(2, 1) = 612.5f;
  f.intrinsics = {400, 410, 1.5, 2.5};
  const std::string bytes = encode_depth_frame(f);
  const DepthFrame g = decode_depth_frame(bytes);
  EXPECT_EQ(g.depth.depth, f.depth.depth);
  EXPECT_EQ(g.intrinsics.fy, 410.0);
  std::string bad = bytes;
  bad[0] = 'Z';
  EXPECT_THROW(decode_depth_frame(bad), std::runtime_error);
  EXPECT_THROW(decode_depth_frame(bytes.substr(0, 10)), std::runtime_error);
}

TEST(Manifest, ParsesAndRejectsMalformedLines) {
  ManifestEntry e;
  e.id = "x1";
  e.depth_file = "frames/x1.v2vd";
  e.keypoints = {{1, 2, 3}, {4, 5, 6}};
  e.ref_point = {2.5, 3.5, 4.5};
  const auto back = parse_manifest_line(manifest_line(e));
  EXPECT_EQ(back.id, "x1");
  EXPECT_TRUE(back.keypoints[1].isApprox(e.keypoints[1]));
  EXPECT_FALSE(back.distractor.has_value());
  EXPECT_THROW(parse_manifest_line("{\"id\": \"a\"}"), std::invalid_argument);
  EXPECT_THROW(parse_manifest_line("not json"), std::invalid_argument);
  std::istringstream in(manifest_line(e) + "\n\n{\"id\": 3}\n");
  try {
    read_manifest(in);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& ex) {
    EXPECT_NE(std::string(ex.what()).find("line 3"), std::string::npos);
  }
}

TEST(Scenes, ClutterSpecPlacesTheDistractorInRange) {
  const auto spec = HandModelSpec::default_hand();
  ClutterSpec cs;
  cs.radius_min = cs.radius_max = 50.0;
  cs.offset_min = cs.offset_max = 200.0;
  cs.dz_min = cs.dz_max = 0.0;
  std::mt19937_64 rng(8);
  const SceneRecord s = generate_scene(spec, SynthCamera{}, true, rng, cs);
  ASSERT_TRUE(s.distractor.has_value());
  EXPECT_EQ(s.distractor->radius, 50.0);
  const Point3 d = s.distractor->a - s.keypoints.front();
  EXPECT_NEAR(std::hypot(d.x(), d.y()), 200.0, 1e-9);
  EXPECT_NEAR(d.z(), 0.0, 1e-9);
  cs.radius_min = 60.0;
  EXPECT_THROW(cs.validate(), std::invalid_argument);
}
