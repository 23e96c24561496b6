#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "v2v/gradcheck.hpp"

using namespace v2v;
using v2v::testing::random_tensor;

namespace {

// Identity forward whose backward is off by a factor; the checker must notice.
class ScaledBackward final : public Layer<double> {
 public:
  explicit ScaledBackward(double factor) : Layer<double>("scaled"), factor_(factor) {}
  Tensor<double> forward(const Tensor<double>& x, Mode) override { return x; }
  Tensor<double> backward(const Tensor<double>& g) override {
    Tensor<double> out = g;
    for (auto& v : out.data()) v *= factor_;
    return out;
  }
  Shape output_shape(const Shape& s) const override { return s; }

 private:
  double factor_;
};

}  // namespace

TEST(RelativeError, UsesLargerMagnitudeWithFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.1), (1.1 - 1.0) / 1.1);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

TEST(Gradcheck, DetectsWrongBackward) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 1, 2, 2, 2}, rng);
  ScaledBackward good(1.0), bad(1.001);
  EXPECT_TRUE(gradcheck(good, x).passed(1e-4));
  const auto r = gradcheck(bad, x);
  EXPECT_FALSE(r.passed(1e-4));
  EXPECT_NEAR(r.max_rel_error, 0.001 / 1.001, 1e-6);
}

TEST(Gradcheck, TwoPointStencilHasLargerTruncationError) {
  std::mt19937_64 rng(2);
  Sequential<double> s("s");
  s.add(std::make_unique<Conv3d<double>>("c", 1, 2, ConvGeometry{Dims3::cube(3), Dims3::cube(1), Dims3::cube(1)}, false));
  s.add(std::make_unique<BatchNorm3d<double>>("bn", 2));
  std::vector<Parameter<double>*> ps;
  s.collect_parameters(ps);
  for (auto& v : ps[0]->value.data()) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  auto x = random_tensor({2, 1, 3, 3, 3}, rng);
  GradcheckOptions two, four;
  two.stencil = Stencil::central2;
  four.stencil = Stencil::central4;
  const auto r2 = gradcheck(s, x, two);
  const auto r4 = gradcheck(s, x, four);
  EXPECT_GT(r2.max_rel_error, r4.max_rel_error);
  EXPECT_TRUE(r4.passed(1e-4));
}

TEST(Gradcheck, FunctionCheckOnQuadratic) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({5}, rng);
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = 3.0 * x[i] * x[i];
  auto f = [](const Tensor<double>& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v * v;
    return s;
  };
  const auto r = gradcheck_function(f, g, x);
  EXPECT_EQ(r.checked, 5u);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(Gradcheck, ReluKinksAreSkippedNotCompared) {
  Relu<double> relu("relu");
  Tensor<double> x({1, 1, 1, 1, 3}, {-5e-4, 0.7, -0.3});
  const auto r = gradcheck(relu, x);
  EXPECT_EQ(r.skipped_kinks, 1u);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_TRUE(r.passed(1e-4));
}

TEST(GradcheckSuite, PassesOnTwoSeeds) {
  GradcheckSuiteOptions o;
  o.seeds = 2;
  o.network_coords = 10;
  std::size_t cases = 0;
  for (const auto& c : gradcheck_suite(o)) {
    ++cases;
    EXPECT_EQ(c.seeds, 2u);
    EXPECT_TRUE(c.report.passed(1e-4)) << c.name << " " << c.report.max_rel_error << " at " << c.report.worst;
  }
  EXPECT_EQ(cases, 20u);
}
