#include "v2v/layers.hpp"

namespace v2v {

namespace {

thread_local bool t_finite_check = false;

void mix(std::uint64_t& h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& g) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

Dims3 spatial(const Shape& s) {
  if (s.size() != 5) throw ShapeError("expected [B,C,D,H,W], got " + shape_str(s));
  return {s[2], s[3], s[4]};
}

}  // namespace

FiniteCheckScope::FiniteCheckScope() : previous_(t_finite_check) { t_finite_check = true; }
FiniteCheckScope::~FiniteCheckScope() { t_finite_check = previous_; }
bool FiniteCheckScope::active() { return t_finite_check; }

// --- Conv3d -----------------------------------------------------------------

template <typename T>
Conv3d<T>::Conv3d(std::string name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry,
                  bool bias)
    : Layer<T>(std::move(name)),
      geometry_(geometry),
      weight_(this->name() + ".weight", ParamRole::weight,
              {out_channels, in_channels, geometry.kernel.d, geometry.kernel.h, geometry.kernel.w}) {
  if (bias) bias_ = std::make_unique<Parameter<T>>(this->name() + ".bias", ParamRole::bias, Shape{out_channels});
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& input, Mode) {
  input_ = input;
  return conv3d_forward(input, weight_.value, bias_ ? &bias_->value : nullptr, geometry_, path_);
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& grad_out) {
  auto g = conv3d_backward(input_, weight_.value, grad_out, geometry_, need_input_grad_, bias_ != nullptr, path_);
  accumulate(weight_.grad, g.weight);
  if (bias_) accumulate(bias_->grad, g.bias);
  return std::move(g.input);
}

template <typename T>
Shape Conv3d<T>::output_shape(const Shape& input) const {
  const Dims3 in = spatial(input);
  if (input[1] != weight_.value.dim(1)) {
    throw ShapeError(this->name() + ": input has " + std::to_string(input[1]) + " channels, kernel expects " +
                     std::to_string(weight_.value.dim(1)));
  }
  const Dims3 out = conv_output_dims(in, geometry_);
  return {input[0], weight_.value.dim(0), out.d, out.h, out.w};
}

template <typename T>
void Conv3d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(bias_.get());
}

// --- Deconv3d ---------------------------------------------------------------

template <typename T>
Deconv3d<T>::Deconv3d(std::string name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry,
                      bool bias)
    : Layer<T>(std::move(name)),
      geometry_(geometry),
      weight_(this->name() + ".weight", ParamRole::weight,
              {in_channels, out_channels, geometry.kernel.d, geometry.kernel.h, geometry.kernel.w}) {
  if (bias) bias_ = std::make_unique<Parameter<T>>(this->name() + ".bias", ParamRole::bias, Shape{out_channels});
}

template <typename T>
Tensor<T> Deconv3d<T>::forward(const Tensor<T>& input, Mode) {
  input_ = input;
  return deconv3d_forward(input, weight_.value, bias_ ? &bias_->value : nullptr, geometry_);
}

template <typename T>
Tensor<T> Deconv3d<T>::backward(const Tensor<T>& grad_out) {
  auto g = deconv3d_backward(input_, weight_.value, grad_out, geometry_, true, bias_ != nullptr);
  accumulate(weight_.grad, g.weight);
  if (bias_) accumulate(bias_->grad, g.bias);
  return std::move(g.input);
}

template <typename T>
Shape Deconv3d<T>::output_shape(const Shape& input) const {
  const Dims3 in = spatial(input);
  if (input[1] != weight_.value.dim(0)) {
    throw ShapeError(this->name() + ": input has " + std::to_string(input[1]) + " channels, kernel expects " +
                     std::to_string(weight_.value.dim(0)));
  }
  const Dims3 out = deconv_output_dims(in, geometry_);
  return {input[0], weight_.value.dim(1), out.d, out.h, out.w};
}

template <typename T>
void Deconv3d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(bias_.get());
}

// --- BatchNorm3d ------------------------------------------------------------

template <typename T>
BatchNorm3d<T>::BatchNorm3d(std::string name, std::size_t channels, BatchNormOptions opts)
    : Layer<T>(std::move(name)),
      opts_(opts),
      gamma_(this->name() + ".gamma", ParamRole::bn_scale, {channels}),
      beta_(this->name() + ".beta", ParamRole::bn_shift, {channels}),
      running_mean_(this->name() + ".running_mean", ParamRole::running_mean, {channels}, false),
      running_var_(this->name() + ".running_var", ParamRole::running_var, {channels}, false) {
  gamma_.value.fill(T{1});
  running_var_.value.fill(T{1});
}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward(const Tensor<T>& input, Mode mode) {
  return batchnorm_forward(input, gamma_.value, beta_.value, running_mean_.value, running_var_.value,
                           mode == Mode::train, opts_, cache_);
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward(const Tensor<T>& grad_out) {
  auto g = batchnorm_backward(grad_out, gamma_.value, cache_);
  accumulate(gamma_.grad, g.gamma);
  accumulate(beta_.grad, g.beta);
  return std::move(g.input);
}

template <typename T>
void BatchNorm3d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// --- Relu -------------------------------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& input, Mode) {
  input_ = input;
  return relu_forward(input);
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_out) {
  return relu_backward(input_, grad_out);
}

template <typename T>
void Relu<T>::mix_kink_signature(std::uint64_t& hash) const {
  std::uint64_t word = 0;
  std::size_t bits = 0;
  for (std::size_t i = 0; i < input_.size(); ++i) {
    word = (word << 1) | (input_[i] > T{0} ? 1u : 0u);
    if (++bits == 64) {
      mix(hash, word);
      word = 0;
      bits = 0;
    }
  }
  mix(hash, word);
}

// --- MaxPool3d --------------------------------------------------------------

template <typename T>
Tensor<T> MaxPool3d<T>::forward(const Tensor<T>& input, Mode) {
  input_shape_ = input.shape();
  auto r = maxpool3d_forward(input, window_);
  argmax_ = std::move(r.argmax);
  return std::move(r.output);
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward(const Tensor<T>& grad_out) {
  return maxpool3d_backward(grad_out, argmax_, input_shape_);
}

template <typename T>
Shape MaxPool3d<T>::output_shape(const Shape& input) const {
  const Dims3 in = spatial(input);
  const Dims3 out{in.d / window_.d, in.h / window_.h, in.w / window_.w};
  if (out.volume() == 0) throw ShapeError(this->name() + ": window larger than input " + dims_str(in));
  return {input[0], input[1], out.d, out.h, out.w};
}

template <typename T>
void MaxPool3d<T>::mix_kink_signature(std::uint64_t& hash) const {
  for (std::uint32_t i : argmax_) mix(hash, i);
}

// --- FullyConnected ---------------------------------------------------------

template <typename T>
FullyConnected<T>::FullyConnected(std::string name, std::size_t in_features, std::size_t out_features)
    : Layer<T>(std::move(name)),
      weight_(this->name() + ".weight", ParamRole::weight, {out_features, in_features}),
      bias_(this->name() + ".bias", ParamRole::bias, {out_features}) {}

template <typename T>
Tensor<T> FullyConnected<T>::forward(const Tensor<T>& input, Mode) {
  input_ = input;
  return fc_forward(input, weight_.value, bias_.value);
}

template <typename T>
Tensor<T> FullyConnected<T>::backward(const Tensor<T>& grad_out) {
  auto g = fc_backward(input_, weight_.value, grad_out);
  accumulate(weight_.grad, g.weight);
  accumulate(bias_.grad, g.bias);
  if (!need_input_grad_) return {};
  return std::move(g.input);
}

template <typename T>
Shape FullyConnected<T>::output_shape(const Shape& input) const {
  const std::size_t features = shape_numel(input) / input.at(0);
  if (features != weight_.value.dim(1)) {
    throw ShapeError(this->name() + ": input " + shape_str(input) + " has " + std::to_string(features) +
                     " features, expected " + std::to_string(weight_.value.dim(1)));
  }
  return {input[0], weight_.value.dim(0)};
}

template <typename T>
void FullyConnected<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// --- Sequential -------------------------------------------------------------

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& input, Mode mode) {
  Tensor<T> x = input;
  for (auto& layer : layers_) {
    x = layer->forward(x, mode);
    if (FiniteCheckScope::active() && !x.all_finite()) {
      throw NumericError("non-finite output from layer " + layer->name());
    }
  }
  return x;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->backward(g);
    if (FiniteCheckScope::active() && !g.all_finite()) {
      throw NumericError("non-finite gradient from layer " + (*it)->name());
    }
  }
  return g;
}

template <typename T>
Shape Sequential<T>::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& layer : layers_) s = layer->output_shape(s);
  return s;
}

template <typename T>
void Sequential<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

template <typename T>
void Sequential<T>::mix_kink_signature(std::uint64_t& hash) const {
  for (const auto& layer : layers_) layer->mix_kink_signature(hash);
}

template <typename T>
void Sequential<T>::set_input_grad(bool on) {
  if (!layers_.empty()) layers_.front()->set_input_grad(on);
}

template <typename T>
std::vector<std::string> Sequential<T>::trace(const Shape& input) const {
  std::vector<std::string> lines;
  Shape s = input;
  for (const auto& layer : layers_) {
    Shape next = layer->output_shape(s);
    lines.push_back(layer->name() + ": " + shape_str(s) + " -> " + shape_str(next));
    s = std::move(next);
  }
  return lines;
}

// --- ResidualBlock ----------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(std::string name, std::size_t in_channels, std::size_t out_channels,
                                BatchNormOptions bn)
    : Layer<T>(std::move(name)), main_(this->name() + ".main"), out_relu_(this->name() + ".relu") {
  const ConvGeometry g3{Dims3::cube(3), Dims3::cube(1), Dims3::cube(1)};
  main_.add(std::make_unique<Conv3d<T>>(this->name() + ".conv1", in_channels, out_channels, g3, false));
  main_.add(std::make_unique<BatchNorm3d<T>>(this->name() + ".bn1", out_channels, bn));
  main_.add(std::make_unique<Relu<T>>(this->name() + ".relu1"));
  main_.add(std::make_unique<Conv3d<T>>(this->name() + ".conv2", out_channels, out_channels, g3, false));
  main_.add(std::make_unique<BatchNorm3d<T>>(this->name() + ".bn2", out_channels, bn));
  if (in_channels != out_channels) {
    shortcut_ = std::make_unique<Sequential<T>>(this->name() + ".shortcut");
    shortcut_->add(std::make_unique<Conv3d<T>>(this->name() + ".proj", in_channels, out_channels,
                                               ConvGeometry{Dims3::cube(1), Dims3::cube(1), Dims3::cube(0)}, false));
    shortcut_->add(std::make_unique<BatchNorm3d<T>>(this->name() + ".proj_bn", out_channels, bn));
  }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& input, Mode mode) {
  Tensor<T> m = main_.forward(input, mode);
  Tensor<T> sum = shortcut_ ? add(m, shortcut_->forward(input, mode)) : add(m, input);
  return out_relu_.forward(sum, mode);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = out_relu_.backward(grad_out);
  Tensor<T> gx = main_.backward(g);
  return add(gx, shortcut_ ? shortcut_->backward(g) : g);
}

template <typename T>
Shape ResidualBlock<T>::output_shape(const Shape& input) const {
  Shape m = main_.output_shape(input);
  Shape s = shortcut_ ? shortcut_->output_shape(input) : input;
  if (m != s) throw ShapeError(this->name() + ": residual branches disagree " + shape_str(m) + " vs " + shape_str(s));
  return m;
}

template <typename T>
void ResidualBlock<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  main_.collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

template <typename T>
void ResidualBlock<T>::mix_kink_signature(std::uint64_t& hash) const {
  main_.mix_kink_signature(hash);
  if (shortcut_) shortcut_->mix_kink_signature(hash);
  out_relu_.mix_kink_signature(hash);
}

// --- SkipAdd ----------------------------------------------------------------

template <typename T>
Tensor<T> SkipAdd<T>::forward(const Tensor<T>& input, Mode mode) {
  Tensor<T> y = inner_->forward(input, mode);
  if (!enabled_) return y;
  if (y.shape() != input.shape()) {
    throw ShapeError(this->name() + ": skip connection joins " + shape_str(y.shape()) + " with " +
                     shape_str(input.shape()));
  }
  return add(y, input);
}

template <typename T>
Tensor<T> SkipAdd<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = inner_->backward(grad_out);
  return enabled_ ? add(g, grad_out) : g;
}

template <typename T>
Shape SkipAdd<T>::output_shape(const Shape& input) const {
  Shape s = inner_->output_shape(input);
  if (s != input) {
    throw ShapeError(this->name() + ": decoder output " + shape_str(s) + " does not match encoder input " +
                     shape_str(input));
  }
  return s;
}

// --- factories --------------------------------------------------------------

template <typename T>
LayerPtr<T> make_basic_block(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                             std::size_t kernel, BatchNormOptions bn) {
  auto seq = std::make_unique<Sequential<T>>(name);
  const ConvGeometry g{Dims3::cube(kernel), Dims3::cube(1), Dims3::cube(kernel / 2)};
  seq->add(std::make_unique<Conv3d<T>>(name + ".conv", in_channels, out_channels, g, false));
  seq->add(std::make_unique<BatchNorm3d<T>>(name + ".bn", out_channels, bn));
  seq->add(std::make_unique<Relu<T>>(name + ".relu"));
  return seq;
}

template <typename T>
LayerPtr<T> make_upsample_block(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                                BatchNormOptions bn) {
  auto seq = std::make_unique<Sequential<T>>(name);
  const ConvGeometry g{Dims3::cube(2), Dims3::cube(2), Dims3::cube(0)};
  seq->add(std::make_unique<Deconv3d<T>>(name + ".deconv", in_channels, out_channels, g, false));
  seq->add(std::make_unique<BatchNorm3d<T>>(name + ".bn", out_channels, bn));
  seq->add(std::make_unique<Relu<T>>(name + ".relu"));
  return seq;
}

#define V2V_INSTANTIATE_LAYERS(T)                                                                            \
  template class Conv3d<T>;                                                                                  \
  template class Deconv3d<T>;                                                                                \
  template class BatchNorm3d<T>;                                                                             \
  template class Relu<T>;                                                                                    \
  template class MaxPool3d<T>;                                                                               \
  template class FullyConnected<T>;                                                                          \
  template class Sequential<T>;                                                                              \
  template class ResidualBlock<T>;                                                                           \
  template class SkipAdd<T>;                                                                                 \
  template LayerPtr<T> make_basic_block<T>(const std::string&, std::size_t, std::size_t, std::size_t,        \
                                           BatchNormOptions);                                                \
  template LayerPtr<T> make_upsample_block<T>(const std::string&, std::size_t, std::size_t, BatchNormOptions);

V2V_INSTANTIATE_LAYERS(float)
V2V_INSTANTIATE_LAYERS(double)

}  // namespace v2v
