#include <random>

#include "v2v/gradcheck.hpp"
#include "v2v/ops.hpp"

namespace v2v {

namespace {

void randomize(std::vector<Parameter<double>*> params, double weight_std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> var(0.5, 2.0);
  for (auto* p : params) {
    for (auto& v : p->value.data()) {
      switch (p->role) {
        case ParamRole::weight: v = weight_std * normal(rng); break;
        case ParamRole::bias:
        case ParamRole::bn_shift:
        case ParamRole::running_mean: v = 0.1 * normal(rng); break;
        case ParamRole::bn_scale: v = 1.0 + 0.2 * normal(rng); break;
        case ParamRole::running_var: v = var(rng); break;
      }
    }
  }
}

Tensor<double> gaussian(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

struct Case {
  std::string name;
  std::function<GradcheckReport(std::mt19937_64&, const GradcheckOptions&)> run;
};

template <typename L>
Case layer_case(std::string name, std::function<std::unique_ptr<L>()> make, Shape input, Mode mode = Mode::train,
                double weight_std = 1.0) {
  return {std::move(name), [=](std::mt19937_64& rng, const GradcheckOptions& base) {
            auto layer = make();
            std::vector<Parameter<double>*> params;
            layer->collect_parameters(params);
            randomize(params, weight_std, rng);
            GradcheckOptions o = base;
            o.mode = mode;
            return gradcheck(*layer, gaussian(input, rng), o);
          }};
}

Case network_case(std::string name, std::function<Network<double>()> make, std::size_t batch, double weight_std,
                  std::size_t coords) {
  return {std::move(name), [=](std::mt19937_64& rng, const GradcheckOptions& base) {
            Network<double> net = make();
            randomize(net.parameters(), weight_std, rng);
            Shape in = net.sample_input_shape();
            in[0] = batch;
            GradcheckOptions o = base;
            o.max_coords = coords;
            return gradcheck(net, gaussian(in, rng), o);
          }};
}

std::vector<Case> suite_cases(const GradcheckSuiteOptions& s) {
  using D = double;
  const ConvGeometry k3{Dims3::cube(3), Dims3::cube(1), Dims3::cube(1)};
  const ConvGeometry k3s2{Dims3::cube(3), Dims3::cube(2), Dims3::cube(1)};
  const ConvGeometry k7{Dims3::cube(7), Dims3::cube(1), Dims3::cube(3)};
  const ConvGeometry k1{Dims3::cube(1), Dims3::cube(1), Dims3::cube(0)};
  const ConvGeometry up{Dims3::cube(2), Dims3::cube(2), Dims3::cube(0)};
  std::vector<Case> cases;
  cases.push_back(layer_case<Conv3d<D>>("conv3d.k3", [=] { return std::make_unique<Conv3d<D>>("conv", 2, 3, k3, true); },
                                        {2, 2, 5, 5, 5}));
  cases.push_back(layer_case<Conv3d<D>>("conv3d.k3.stride2",
                                        [=] { return std::make_unique<Conv3d<D>>("conv", 2, 3, k3s2, false); },
                                        {2, 2, 6, 6, 6}));
  cases.push_back(layer_case<Conv3d<D>>("conv3d.k3.sparse", [=] {
    auto c = std::make_unique<Conv3d<D>>("conv", 2, 3, k3, true);
    c->set_path(ConvPath::sparse);
    return c;
  }, {2, 2, 5, 5, 5}));
  cases.push_back(layer_case<Conv3d<D>>("conv3d.k7", [=] { return std::make_unique<Conv3d<D>>("conv", 1, 2, k7, false); },
                                        {2, 1, 4, 4, 4}));
  cases.push_back(layer_case<Conv3d<D>>("conv3d.k1", [=] { return std::make_unique<Conv3d<D>>("conv", 3, 2, k1, true); },
                                        {2, 3, 4, 4, 4}));
  cases.push_back(layer_case<Deconv3d<D>>("deconv3d.k2.stride2",
                                          [=] { return std::make_unique<Deconv3d<D>>("deconv", 3, 2, up, true); },
                                          {2, 3, 3, 3, 3}));
  cases.push_back(layer_case<BatchNorm3d<D>>("batchnorm.train", [] { return std::make_unique<BatchNorm3d<D>>("bn", 3); },
                                             {2, 3, 4, 4, 4}));
  cases.push_back(layer_case<BatchNorm3d<D>>("batchnorm.infer", [] { return std::make_unique<BatchNorm3d<D>>("bn", 3); },
                                             {2, 3, 4, 4, 4}, Mode::infer));
  cases.push_back(layer_case<Relu<D>>("relu", [] { return std::make_unique<Relu<D>>("relu"); }, {2, 2, 4, 4, 4}));
  cases.push_back(layer_case<MaxPool3d<D>>("maxpool.k2",
                                           [] { return std::make_unique<MaxPool3d<D>>("pool", Dims3::cube(2)); },
                                           {2, 2, 4, 4, 4}));
  cases.push_back(layer_case<FullyConnected<D>>("fully_connected",
                                                [] { return std::make_unique<FullyConnected<D>>("fc", 24, 5); },
                                                {2, 3, 2, 2, 2}));
  cases.push_back(layer_case<ResidualBlock<D>>("residual.identity",
                                               [] { return std::make_unique<ResidualBlock<D>>("res", 2, 2); },
                                               {2, 2, 4, 4, 4}));
  cases.push_back(layer_case<ResidualBlock<D>>("residual.projection",
                                               [] { return std::make_unique<ResidualBlock<D>>("res", 2, 3); },
                                               {2, 2, 4, 4, 4}));
  cases.push_back(layer_case<Layer<D>>("basic_block.k3", [] { return make_basic_block<D>("basic", 2, 3, 3); },
                                       {2, 2, 4, 4, 4}));
  cases.push_back(layer_case<Layer<D>>("upsample_block", [] { return make_upsample_block<D>("up", 3, 2); },
                                       {2, 3, 2, 2, 2}));
  cases.push_back(layer_case<SkipAdd<D>>("skip_add", [] {
    auto inner = std::make_unique<Sequential<D>>("inner");
    inner->add(std::make_unique<MaxPool3d<D>>("down", Dims3::cube(2)));
    inner->add(make_basic_block<D>("mid", 2, 2, 3));
    inner->add(make_upsample_block<D>("up", 2, 2));
    return std::make_unique<SkipAdd<D>>("skip", std::move(inner));
  }, {2, 2, 4, 4, 4}));

  cases.push_back({"mse_loss", [](std::mt19937_64& rng, const GradcheckOptions& o) {
                     const Tensor<double> target = gaussian({2, 3, 4}, rng);
                     const Tensor<double> pred = gaussian({2, 3, 4}, rng);
                     const auto loss = mse_loss(pred, target);
                     return gradcheck_function([&](const Tensor<double>& p) { return mse_loss(p, target).loss; },
                                               loss.grad, pred, o);
                   }});

  NetworkConfig nc;
  nc.input_grid = 8;
  nc.base_channels = 2;
  nc.down_stages = 1;
  nc.keypoints = 2;
  nc.v2c_hidden = 8;
  cases.push_back(network_case("network.v2v", [=] { return build_v2v<double>(nc); }, 2, 0.5, s.network_coords));
  cases.push_back(network_case("network.v2c", [=] { return build_v2c<double>(nc); }, 2, 0.5, s.network_coords));
  RefineNetConfig rc;
  rc.patch_size = 16;
  rc.channels = 2;
  rc.hidden = 8;
  cases.push_back(network_case("network.refine", [=] { return build_refinement_net<double>(rc); }, 2, 0.5,
                               s.network_coords));
  return cases;
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite(const GradcheckSuiteOptions& opts,
                                           const std::function<void(const GradcheckCase&)>& on_case) {
  std::vector<GradcheckCase> out;
  for (const Case& c : suite_cases(opts)) {
    GradcheckCase result{c.name, {}, 0};
    for (std::size_t k = 0; k < opts.seeds; ++k) {
      const std::uint64_t seed = opts.base_seed + k;
      std::mt19937_64 rng(seed);
      GradcheckOptions o;
      o.step = opts.step;
      o.stencil = opts.stencil;
      o.seed = seed;
      const GradcheckReport r = c.run(rng, o);
      result.report.checked += r.checked;
      result.report.skipped_kinks += r.skipped_kinks;
      if (r.max_rel_error > result.report.max_rel_error || result.seeds == 0) {
        result.report.max_rel_error = r.max_rel_error;
        result.report.worst = r.worst + " seed " + std::to_string(seed);
      }
      ++result.seeds;
    }
    if (on_case) on_case(result);
    out.push_back(std::move(result));
  }
  return out;
}

}  // namespace v2v
