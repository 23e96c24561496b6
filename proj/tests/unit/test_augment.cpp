#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "v2v/augment.hpp"

using namespace v2v;

namespace {

const CubicCrop kCrop{{10.0, -20.0, 650.0}, 300.0, 32};

}  // namespace

TEST(Augment, PureScaleMultipliesDistanceToCenter) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> off(-100.0, 100.0);
  AugmentParams a;
  a.scale = 1.2;
  for (int i = 0; i < 100; ++i) {
    const Point3 p = kCrop.center + Point3{off(rng), off(rng), off(rng)};
    EXPECT_NEAR((apply_augment(p, kCrop, a) - kCrop.center).norm(), 1.2 * (p - kCrop.center).norm(), 1e-9);
  }
}

TEST(Augment, RotationIsAboutTheCameraAxisThroughTheCenter) {
  AugmentParams a;
  a.theta_deg = 90.0;
  const Point3 p = kCrop.center + Point3{10.0, 0.0, 5.0};
  const Point3 q = apply_augment(p, kCrop, a);
  EXPECT_NEAR(q.x() - kCrop.center.x(), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(q.y() - kCrop.center.y()), 10.0, 1e-9);
  EXPECT_NEAR(q.z(), p.z(), 1e-9);
}

TEST(Augment, TranslationIsInInputVoxels) {
  AugmentParams a;
  a.translation_vox = {2.0, -1.0, 0.5};
  const Point3 q = apply_augment(kCrop.center, kCrop, a);
  EXPECT_TRUE((q - kCrop.center).isApprox(Point3{2.0, -1.0, 0.5} * kCrop.voxel_size()));
}

TEST(Augment, CloudAndKeypointsReceiveTheSameTransform) {
  std::mt19937_64 rng(2);
  const AugmentParams a = sample_augment(AugmentSpec{}, rng);
  PointCloud cloud{{0, 0, 600}, {30, -10, 700}};
  KeypointSet kps = cloud;
  augment(cloud, kps, kCrop, a);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_TRUE(cloud[i].isApprox(kps[i]));
}

TEST(Augment, SamplesStayInRangeAndRotationIsUniform) {
  std::mt19937_64 rng(3);
  const AugmentSpec spec;
  std::vector<double> theta;
  for (int i = 0; i < 100000; ++i) {
    const auto a = sample_augment(spec, rng);
    ASSERT_GE(a.theta_deg, spec.rot_min_deg);
    ASSERT_LE(a.theta_deg, spec.rot_max_deg);
    ASSERT_GE(a.scale, spec.scale_min);
    ASSERT_LE(a.scale, spec.scale_max);
    ASSERT_LE(a.translation_vox.cwiseAbs().maxCoeff(), spec.trans_max_vox);
    theta.push_back(a.theta_deg);
  }
  std::sort(theta.begin(), theta.end());
  double d = 0.0;
  const double n = static_cast<double>(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double cdf = (theta[i] - spec.rot_min_deg) / (spec.rot_max_deg - spec.rot_min_deg);
    d = std::max({d, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
  }
  // Kolmogorov-Smirnov critical value at alpha = 0.001.
  EXPECT_LT(d, 1.95 / std::sqrt(n));
}

TEST(Augment, FrameStreamsAreDeterministicAndIndependent) {
  auto a = frame_rng(42, 7), b = frame_rng(42, 7), c = frame_rng(42, 8);
  const auto x = a(), y = b(), z = c();
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
}

TEST(Augment, NoneIsTheIdentity) {
  std::mt19937_64 rng(4);
  const auto a = sample_augment(AugmentSpec::none(), rng);
  const Point3 p{1.0, 2.0, 3.0};
  EXPECT_TRUE(apply_augment(p, kCrop, a).isApprox(p));
}

TEST(Augment, RejectsInvertedRanges) {
  AugmentSpec s;
  s.scale_min = 1.5;
  s.scale_max = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
