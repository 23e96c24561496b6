#include "v2v/network.hpp"

#include <sstream>
#include <stdexcept>

#include "kv_text.hpp"

namespace v2v {

namespace {

using detail::fmt_double;
using detail::get_double;
using detail::get_size;
using detail::parse_kv;

template <typename T>
void add_encoder_decoder(Sequential<T>& parent, const std::vector<std::size_t>& channels, std::size_t stage,
                         const BatchNormOptions& bn, std::vector<SkipAdd<T>*>& skips) {
  const std::string p = "stage" + std::to_string(stage);
  auto inner = std::make_unique<Sequential<T>>(p + ".inner");
  inner->add(std::make_unique<MaxPool3d<T>>(p + ".down", Dims3::cube(2)));
  inner->add(std::make_unique<ResidualBlock<T>>(p + ".enc_res", channels[stage], channels[stage + 1], bn));
  if (stage + 2 < channels.size()) add_encoder_decoder(*inner, channels, stage + 1, bn, skips);
  inner->add(std::make_unique<ResidualBlock<T>>(p + ".dec_res", channels[stage + 1], channels[stage + 1], bn));
  inner->add(make_upsample_block<T>(p + ".up", channels[stage + 1], channels[stage], bn));
  auto skip = std::make_unique<SkipAdd<T>>(p + ".skip", std::move(inner));
  skips.push_back(skip.get());
  parent.add(std::move(skip));
}

template <typename T>
std::unique_ptr<Sequential<T>> build_trunk(const NetworkConfig& c, std::vector<SkipAdd<T>*>& skips) {
  c.validate();
  const auto ch = c.channel_schedule();
  auto root = std::make_unique<Sequential<T>>(to_string(c.variant));
  root->add(make_basic_block<T>("front.basic7", 1, ch[0], 7, c.batchnorm));
  if (c.output_stride == 2) root->add(std::make_unique<MaxPool3d<T>>("front.down", Dims3::cube(2)));
  for (int i = 1; i <= 3; ++i) {
    root->add(std::make_unique<ResidualBlock<T>>("front.res" + std::to_string(i), ch[0], ch[0], c.batchnorm));
  }
  add_encoder_decoder(*root, ch, 0, c.batchnorm, skips);
  return root;
}

void mix(std::uint64_t& h, std::uint64_t v) { h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2); }

}  // namespace

std::string to_string(Variant v) { return v == Variant::v2v ? "v2v" : "v2c"; }

Variant variant_from_string(const std::string& s) {
  if (s == "v2v") return Variant::v2v;
  if (s == "v2c") return Variant::v2c;
  throw std::invalid_argument("unknown network variant '" + s + "' (expected v2v or v2c)");
}

std::vector<std::size_t> NetworkConfig::channel_schedule() const {
  std::vector<std::size_t> ch;
  for (std::size_t s = 0; s <= down_stages; ++s) ch.push_back(base_channels << s);
  return ch;
}

void NetworkConfig::validate() const {
  if (base_channels == 0 || keypoints == 0) throw std::invalid_argument("network config: channels and keypoints must be positive");
  if (down_stages == 0) throw std::invalid_argument("network config: at least one encoder stage is required");
  if (output_stride != 1 && output_stride != 2) throw std::invalid_argument("network config: output_stride must be 1 or 2");
  std::size_t size = input_grid;
  if (size == 0) throw std::invalid_argument("network config: input grid must be positive");
  if (output_stride == 2) {
    if (size % 2) {
      throw std::invalid_argument("network config: front downsampling: spatial size " + std::to_string(size) +
                                  " is not divisible by 2");
    }
    size /= 2;
  }
  for (std::size_t s = 0; s < down_stages; ++s) {
    if (size % 2 || size < 2) {
      throw std::invalid_argument("network config: encoder stage " + std::to_string(s) + ": spatial size " +
                                  std::to_string(size) + " is not divisible by 2");
    }
    size /= 2;
  }
  if (variant == Variant::v2c && v2c_hidden == 0) throw std::invalid_argument("network config: v2c_hidden must be positive");
}

std::string NetworkConfig::to_text() const {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << "\n"
     << "input_grid=" << input_grid << "\n"
     << "base_channels=" << base_channels << "\n"
     << "down_stages=" << down_stages << "\n"
     << "keypoints=" << keypoints << "\n"
     << "output_stride=" << output_stride << "\n"
     << "v2c_hidden=" << v2c_hidden << "\n"
     << "bn_epsilon=" << fmt_double(batchnorm.epsilon) << "\n"
     << "bn_momentum=" << fmt_double(batchnorm.momentum) << "\n";
  return os.str();
}

NetworkConfig NetworkConfig::from_text(const std::string& text) {
  const auto kv = parse_kv(text);
  NetworkConfig c;
  if (auto it = kv.find("variant"); it != kv.end()) c.variant = variant_from_string(it->second);
  c.input_grid = get_size(kv, "input_grid", c.input_grid);
  c.base_channels = get_size(kv, "base_channels", c.base_channels);
  c.down_stages = get_size(kv, "down_stages", c.down_stages);
  c.keypoints = get_size(kv, "keypoints", c.keypoints);
  c.output_stride = get_size(kv, "output_stride", c.output_stride);
  c.v2c_hidden = get_size(kv, "v2c_hidden", c.v2c_hidden);
  c.batchnorm.epsilon = get_double(kv, "bn_epsilon", c.batchnorm.epsilon);
  c.batchnorm.momentum = get_double(kv, "bn_momentum", c.batchnorm.momentum);
  return c;
}

void RefineNetConfig::validate() const {
  if (patch_size < 16) throw std::invalid_argument("refine net: patch_size must be >= 16");
  if (patch_size % 8) throw std::invalid_argument("refine net: patch_size must be divisible by 8 (three 2x2 poolings)");
  if (channels == 0 || hidden == 0) throw std::invalid_argument("refine net: channel counts must be positive");
}

std::string RefineNetConfig::to_text() const {
  std::ostringstream os;
  os << "patch_size=" << patch_size << "\n"
     << "channels=" << channels << "\n"
     << "hidden=" << hidden << "\n"
     << "bn_epsilon=" << fmt_double(batchnorm.epsilon) << "\n"
     << "bn_momentum=" << fmt_double(batchnorm.momentum) << "\n";
  return os.str();
}

RefineNetConfig RefineNetConfig::from_text(const std::string& text) {
  const auto kv = parse_kv(text);
  RefineNetConfig c;
  c.patch_size = get_size(kv, "patch_size", c.patch_size);
  c.channels = get_size(kv, "channels", c.channels);
  c.hidden = get_size(kv, "hidden", c.hidden);
  c.batchnorm.epsilon = get_double(kv, "bn_epsilon", c.batchnorm.epsilon);
  c.batchnorm.momentum = get_double(kv, "bn_momentum", c.batchnorm.momentum);
  return c;
}

// --- Network ----------------------------------------------------------------

template <typename T>
Network<T>::Network(std::string kind, std::string config_text, Shape sample_input_shape,
                    std::unique_ptr<Sequential<T>> root, std::vector<SkipAdd<T>*> skips)
    : kind_(std::move(kind)),
      config_text_(std::move(config_text)),
      sample_input_shape_(std::move(sample_input_shape)),
      root_(std::move(root)),
      skips_(std::move(skips)) {
  root_->set_input_grad(false);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, Mode mode) {
  Shape expected = sample_input_shape_;
  expected[0] = input.rank() ? input.dim(0) : 0;
  if (input.shape() != expected) {
    throw ShapeError(kind_ + " forward: input " + shape_str(input.shape()) + " expected " + shape_str(expected));
  }
  return root_->forward(input, mode);
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_out) {
  return root_->backward(grad_out);
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  root_->collect_parameters(out);
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : parameters()) {
    if (p->trainable) p->grad.fill(T{0});
  }
}

template <typename T>
std::size_t Network<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

template <typename T>
std::uint64_t Network<T>::kink_signature() const {
  std::uint64_t h = 0;
  root_->mix_kink_signature(h);
  mix(h, 1);
  return h;
}

template <typename T>
void Network<T>::set_skips_enabled(bool on) {
  for (auto* s : skips_) s->set_enabled(on);
}

template <typename T>
std::vector<std::string> Network<T>::trace(std::size_t batch) const {
  Shape s = sample_input_shape_;
  s[0] = batch;
  return root_->trace(s);
}

template <typename T>
std::map<std::string, Tensor<float>> Network<T>::state() {
  std::map<std::string, Tensor<float>> st;
  for (auto* p : parameters()) st.emplace(p->name, p->value.template cast<float>());
  return st;
}

template <typename T>
void Network<T>::load_state(const std::map<std::string, Tensor<float>>& state) {
  for (auto* p : parameters()) {
    auto it = state.find(p->name);
    if (it == state.end()) throw std::runtime_error("checkpoint lacks tensor '" + p->name + "'");
    if (it->second.shape() != p->value.shape()) {
      throw ShapeError("checkpoint tensor '" + p->name + "' has shape " + shape_str(it->second.shape()) +
                       ", network expects " + shape_str(p->value.shape()));
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(it->second[i]);
  }
}

// --- builders ---------------------------------------------------------------

template <typename T>
Network<T> build_v2v(const NetworkConfig& config) {
  NetworkConfig c = config;
  c.variant = Variant::v2v;
  std::vector<SkipAdd<T>*> skips;
  auto root = build_trunk<T>(c, skips);
  const std::size_t ch = c.base_channels;
  root->add(make_basic_block<T>("back.basic1a", ch, ch, 1, c.batchnorm));
  root->add(make_basic_block<T>("back.basic1b", ch, ch, 1, c.batchnorm));
  root->add(std::make_unique<Conv3d<T>>("back.out", ch, c.keypoints,
                                        ConvGeometry{Dims3::cube(1), Dims3::cube(1), Dims3::cube(0)}, true));
  const std::size_t g = c.input_grid;
  return Network<T>("v2v", c.to_text(), Shape{1, 1, g, g, g}, std::move(root), std::move(skips));
}

template <typename T>
Network<T> build_v2c(const NetworkConfig& config) {
  NetworkConfig c = config;
  c.variant = Variant::v2c;
  std::vector<SkipAdd<T>*> skips;
  auto root = build_trunk<T>(c, skips);
  const std::size_t hg = c.heatmap_grid();
  const std::size_t features = c.base_channels * hg * hg * hg;
  root->add(std::make_unique<FullyConnected<T>>("head.fc1", features, c.v2c_hidden));
  root->add(std::make_unique<Relu<T>>("head.relu"));
  root->add(std::make_unique<FullyConnected<T>>("head.fc2", c.v2c_hidden, 3 * c.keypoints));
  const std::size_t g = c.input_grid;
  return Network<T>("v2c", c.to_text(), Shape{1, 1, g, g, g}, std::move(root), std::move(skips));
}

template <typename T>
Network<T> build_network(const NetworkConfig& config) {
  return config.variant == Variant::v2v ? build_v2v<T>(config) : build_v2c<T>(config);
}

template <typename T>
Network<T> build_refinement_net(const RefineNetConfig& config) {
  config.validate();
  const std::size_t c = config.channels;
  const auto& bn = config.batchnorm;
  auto root = std::make_unique<Sequential<T>>("refine");
  auto conv_block = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k) {
    const ConvGeometry g{{1, k, k}, Dims3::cube(1), {0, k / 2, k / 2}};
    root->add(std::make_unique<Conv3d<T>>(name + ".conv", cin, cout, g, false));
    root->add(std::make_unique<BatchNorm3d<T>>(name + ".bn", cout, bn));
    root->add(std::make_unique<Relu<T>>(name + ".relu"));
    root->add(std::make_unique<MaxPool3d<T>>(name + ".down", Dims3{1, 2, 2}));
  };
  conv_block("refine.block1", 1, c, 5);
  conv_block("refine.block2", c, 2 * c, 5);
  conv_block("refine.block3", 2 * c, 4 * c, 3);
  const std::size_t s = config.patch_size / 8;
  root->add(std::make_unique<FullyConnected<T>>("refine.fc1", 4 * c * s * s, config.hidden));
  root->add(std::make_unique<Relu<T>>("refine.fc1.relu"));
  root->add(std::make_unique<FullyConnected<T>>("refine.fc2", config.hidden, 3));
  return Network<T>("refine", config.to_text(), Shape{1, 1, 1, config.patch_size, config.patch_size},
                    std::move(root));
}

template <typename T>
Network<T> build_from_record(const std::string& kind, const std::string& config_text) {
  if (kind == "refine") return build_refinement_net<T>(RefineNetConfig::from_text(config_text));
  NetworkConfig c = NetworkConfig::from_text(config_text);
  if (kind == "v2v") return build_v2v<T>(c);
  if (kind == "v2c") return build_v2c<T>(c);
  throw std::invalid_argument("unknown network kind '" + kind + "'");
}

template class Network<float>;
template class Network<double>;
template Network<float> build_v2v<float>(const NetworkConfig&);
template Network<double> build_v2v<double>(const NetworkConfig&);
template Network<float> build_v2c<float>(const NetworkConfig&);
template Network<double> build_v2c<double>(const NetworkConfig&);
template Network<float> build_network<float>(const NetworkConfig&);
template Network<double> build_network<double>(const NetworkConfig&);
template Network<float> build_refinement_net<float>(const RefineNetConfig&);
template Network<double> build_refinement_net<double>(const RefineNetConfig&);
template Network<float> build_from_record<float>(const std::string&, const std::string&);
template Network<double> build_from_record<double>(const std::string&, const std::string&);

}  // namespace v2v
