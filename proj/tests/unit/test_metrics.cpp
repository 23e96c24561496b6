#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "v2v/metrics.hpp"

using namespace v2v;

namespace {

struct Frames {
  std::vector<KeypointSet> pred, gt;
};

Frames random_frames(std::size_t frames, std::size_t joints, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> pos(0.0, 200.0), err(0.0, 40.0);
  Frames f;
  for (std::size_t i = 0; i < frames; ++i) {
    KeypointSet g, p;
    for (std::size_t j = 0; j < joints; ++j) {
      Point3 q{pos(rng), pos(rng), 700.0 + pos(rng)};
      g.push_back(q);
      p.push_back(q + Point3{err(rng), err(rng), err(rng)});
    }
    f.gt.push_back(g);
    f.pred.push_back(p);
  }
  return f;
}

double dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

TEST(Metrics, MeanErrorMatchesBruteForce) {
  const auto f = random_frames(100, 16, 1);
  double total = 0.0;
  std::vector<double> per(16, 0.0);
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      const double d = dist(f.pred[i][j], f.gt[i][j]);
      total += d;
      per[j] += d;
    }
  const auto m = mean_3d_error(f.pred, f.gt);
  EXPECT_NEAR(m.overall, total / 1600.0, 1e-9);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(m.per_joint[j], per[j] / 100.0, 1e-9);
}

TEST(Metrics, SuccessCurveMatchesBruteForceAndIsMonotone) {
  const auto f = random_frames(100, 16, 2);
  const auto thr = threshold_range(80.0, 1.0);
  ASSERT_EQ(thr.size(), 81u);
  const auto curve = success_frame_curve(f.pred, f.gt, thr);
  for (std::size_t t = 0; t < thr.size(); ++t) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      double worst = 0.0;
      for (std::size_t j = 0; j < 16; ++j) worst = std::max(worst, dist(f.pred[i][j], f.gt[i][j]));
      if (worst < thr[t]) ++ok;
    }
    EXPECT_NEAR(curve[t], ok / 100.0, 1e-9);
    if (t > 0) EXPECT_GE(curve[t], curve[t - 1]);
  }
}

TEST(Metrics, MeanJointSuccessRule) {
  const std::vector<KeypointSet> gt{{{0, 0, 0}, {0, 0, 0}}};
  const std::vector<KeypointSet> pred{{{4, 0, 0}, {14, 0, 0}}};
  EXPECT_EQ(success_frame_curve(pred, gt, {10.0}, SuccessRule::max_joint)[0], 0.0);
  EXPECT_EQ(success_frame_curve(pred, gt, {10.0}, SuccessRule::mean_joint)[0], 1.0);
}

TEST(Metrics, MapMatchesBruteForce) {
  const auto f = random_frames(100, 16, 3);
  const auto m = map_at_threshold(f.pred, f.gt, 60.0);
  double mean = 0.0;
  for (std::size_t j = 0; j < 16; ++j) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < 100; ++i) hit += dist(f.pred[i][j], f.gt[i][j]) < 60.0;
    EXPECT_NEAR(m.per_joint[j], hit / 100.0, 1e-9);
    mean += hit / 100.0;
  }
  EXPECT_NEAR(m.mean, mean / 16.0, 1e-9);
  EXPECT_EQ(map_at_threshold(f.pred, f.gt, 1e9).mean, 1.0);
}

TEST(Metrics, TwoJointExampleGivesHalfMap) {
  const std::vector<KeypointSet> gt{{{0, 0, 0}, {0, 0, 0}}};
  const std::vector<KeypointSet> pred{{{50, 0, 0}, {0, 150, 0}}};
  EXPECT_EQ(map_at_threshold(pred, gt, 100.0).mean, 0.5);
}

TEST(Metrics, SmallExamples) {
  const std::vector<KeypointSet> gt{{{0, 0, 0}}};
  EXPECT_EQ(mean_3d_error({{{3, 4, 0}}}, gt).overall, 5.0);
  EXPECT_EQ(mean_3d_error(gt, gt).overall, 0.0);
  const auto c = success_frame_curve({{{12, 0, 0}}}, gt, {10.0, 12.0, 15.0});
  EXPECT_EQ(c, (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Metrics, InvariantUnderRigidTransform) {
  auto f = random_frames(20, 4, 4);
  const auto before = evaluate(f.pred, f.gt, {"a", "b", "c", "d"});
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  for (auto* s : {&f.pred, &f.gt})
    for (auto& k : *s)
      for (auto& p : k) p = r * p + Point3{5, -3, 100};
  const auto after = evaluate(f.pred, f.gt, {"a", "b", "c", "d"});
  EXPECT_NEAR(after.error.overall, before.error.overall, 1e-9);
  EXPECT_EQ(after.curve, before.curve);
  EXPECT_EQ(after.map.per_joint, before.map.per_joint);
}

TEST(Metrics, RejectsMismatchedStreams) {
  const std::vector<KeypointSet> a{{{0, 0, 0}}}, b{{{0, 0, 0}}, {{0, 0, 0}}}, c{{{0, 0, 0}, {1, 1, 1}}};
  EXPECT_THROW(mean_3d_error(a, b), std::invalid_argument);
  EXPECT_THROW(map_at_threshold(a, c), std::invalid_argument);
}

TEST(Metrics, ReportLayoutEndsWithMeanRow) {
  const auto f = random_frames(5, 2, 5);
  const auto rep = evaluate(f.pred, f.gt, {"palm", "tip"});
  std::ostringstream csv, curve;
  write_metrics_csv(csv, rep);
  write_curve_csv(curve, rep);
  const std::string s = csv.str();
  EXPECT_EQ(s.rfind("joint,mean_error_mm,map_ratio\npalm,", 0), 0u);
  EXPECT_NE(s.find("\nMean,"), std::string::npos);
  EXPECT_EQ(curve.str().rfind("threshold_mm,success_fraction\n0,", 0), 0u);
  EXPECT_NE(format_table(rep).find("Mean"), std::string::npos);
}
