#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "v2v/layers.hpp"

using namespace v2v;
using v2v::testing::random_tensor;

namespace {

void fill_params(Layer<double>& l, std::mt19937_64& rng) {
  std::vector<Parameter<double>*> ps;
  l.collect_parameters(ps);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto* p : ps) {
    if (p->trainable) {
      for (auto& v : p->value.data()) v = n(rng);
    }
  }
}

}  // namespace

TEST(ResidualBlock, IdentityAndProjectionShapes) {
  ResidualBlock<double> same("same", 4, 4), proj("proj", 4, 6);
  EXPECT_EQ(same.output_shape({2, 4, 5, 5, 5}), (Shape{2, 4, 5, 5, 5}));
  EXPECT_EQ(proj.output_shape({2, 4, 5, 5, 5}), (Shape{2, 6, 5, 5, 5}));
  std::vector<Parameter<double>*> a, b;
  same.collect_parameters(a);
  proj.collect_parameters(b);
  // two convs + two batchnorms (4 tensors each); projection adds a 1x1 conv and a batchnorm
  EXPECT_EQ(a.size(), 2u + 2u * 4u);
  EXPECT_EQ(b.size(), a.size() + 1u + 4u);
}

TEST(SkipAdd, DisabledSkipDropsTheInputTerm) {
  std::mt19937_64 rng(1);
  auto inner = std::make_unique<Sequential<double>>("inner");
  inner->add(make_basic_block<double>("b", 2, 2, 3));
  SkipAdd<double> skip("skip", std::move(inner));
  fill_params(skip, rng);
  auto x = random_tensor({2, 2, 3, 3, 3}, rng);
  const auto with = skip.forward(x, Mode::infer);
  skip.set_enabled(false);
  const auto without = skip.forward(x, Mode::infer);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(with[i] - without[i], x[i], 1e-12);
}

TEST(UpsampleBlock, DoublesSpatialExtent) {
  auto up = make_upsample_block<float>("up", 4, 2);
  EXPECT_EQ(up->output_shape({1, 4, 3, 3, 3}), (Shape{1, 2, 6, 6, 6}));
}

TEST(Sequential, TraceListsChildren) {
  Sequential<float> s("s");
  s.add(make_basic_block<float>("a", 1, 2, 3));
  s.add(std::make_unique<MaxPool3d<float>>("p", Dims3::cube(2)));
  const auto lines = s.trace({1, 1, 4, 4, 4});
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_NE(lines[1].find("p"), std::string::npos);
  EXPECT_EQ(s.output_shape({1, 1, 4, 4, 4}), (Shape{1, 2, 2, 2, 2}));
}

TEST(FiniteCheckScope, NamesTheLayerThatProducedNaN) {
  Sequential<double> s("s");
  s.add(std::make_unique<Relu<double>>("first"));
  s.add(std::make_unique<Conv3d<double>>("culprit", 1, 1, ConvGeometry{Dims3::cube(1), Dims3::cube(1), Dims3::cube(0)},
                                         false));
  std::vector<Parameter<double>*> ps;
  s.collect_parameters(ps);
  ps[0]->value[0] = std::numeric_limits<double>::infinity();
  Tensor<double> x({1, 1, 1, 1, 2}, {0.0, 1.0});
  FiniteCheckScope guard;
  try {
    s.forward(x, Mode::train);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("culprit"), std::string::npos);
  }
}

TEST(Conv3dLayer, InputGradientCanBeSkipped) {
  std::mt19937_64 rng(2);
  Conv3d<float> c("c", 1, 2, {Dims3::cube(3), Dims3::cube(1), Dims3::cube(1)}, true);
  auto x = random_tensor<float>({1, 1, 4, 4, 4}, rng);
  const auto y = c.forward(x, Mode::train);
  c.set_input_grad(false);
  EXPECT_TRUE(c.backward(y).empty());
  c.set_input_grad(true);
  c.forward(x, Mode::train);
  EXPECT_EQ(c.backward(y).shape(), x.shape());
}

TEST(Layers, FloatAndDoubleAgree) {
  std::mt19937_64 rng(3);
  ResidualBlock<double> d("r", 2, 3);
  ResidualBlock<float> f("r", 2, 3);
  fill_params(d, rng);
  std::vector<Parameter<double>*> pd;
  std::vector<Parameter<float>*> pf;
  d.collect_parameters(pd);
  f.collect_parameters(pf);
  for (std::size_t i = 0; i < pd.size(); ++i)
    for (std::size_t j = 0; j < pd[i]->value.size(); ++j) pf[i]->value[j] = static_cast<float>(pd[i]->value[j]);
  auto x = random_tensor({2, 2, 4, 4, 4}, rng);
  const auto yd = d.forward(x, Mode::train);
  const auto yf = f.forward(x.cast<float>(), Mode::train);
  for (std::size_t i = 0; i < yd.size(); ++i) EXPECT_NEAR(yd[i], yf[i], 2e-4);
}
