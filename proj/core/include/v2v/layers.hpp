#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "v2v/ops.hpp"
#include "v2v/tensor.hpp"

namespace v2v {

enum class Mode { train, infer };

enum class ParamRole { weight, bias, bn_scale, bn_shift, running_mean, running_var };

/// A named tensor owned by a layer. Running statistics are parameters with
/// trainable == false: checkpointed, never touched by the optimizer.
template <typename T>
struct Parameter {
  std::string name;
  ParamRole role = ParamRole::weight;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, ParamRole r, Shape shape, bool train = true)
      : name(std::move(n)), role(r), value(shape), grad(train ? Tensor<T>(shape) : Tensor<T>()), trainable(train) {}
};

/// Base class for network building blocks. forward() caches whatever backward()
/// needs; backward() accumulates parameter gradients and returns the input gradient.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const noexcept { return name_; }

  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  virtual void collect_parameters(std::vector<Parameter<T>*>&) {}
  /// Mixes the layer's current piecewise-linear decisions (ReLU masks, pool
  /// argmaxes) into `hash`. Finite differences are only meaningful when this
  /// does not change under the perturbation.
  virtual void mix_kink_signature(std::uint64_t&) const {}
  /// First layers fed with raw data can skip the input gradient.
  virtual void set_input_grad(bool) {}

 private:
  std::string name_;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv3d final : public Layer<T> {
 public:
  Conv3d(std::string name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry, bool bias);

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void set_input_grad(bool on) override { need_input_grad_ = on; }
  void set_path(ConvPath path) { path_ = path; }

  const ConvGeometry& geometry() const { return geometry_; }
  Parameter<T>& weight() { return weight_; }

 private:
  ConvGeometry geometry_;
  Parameter<T> weight_;
  std::unique_ptr<Parameter<T>> bias_;
  Tensor<T> input_;
  bool need_input_grad_ = true;
  ConvPath path_ = ConvPath::automatic;
};

template <typename T>
class Deconv3d final : public Layer<T> {
 public:
  Deconv3d(std::string name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry, bool bias);

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;

 private:
  ConvGeometry geometry_;
  Parameter<T> weight_;
  std::unique_ptr<Parameter<T>> bias_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm3d final : public Layer<T> {
 public:
  BatchNorm3d(std::string name, std::size_t channels, BatchNormOptions opts = {});

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return input; }
  void collect_parameters(std::vector<Parameter<T>*>& out) override;

 private:
  BatchNormOptions opts_;
  Parameter<T> gamma_, beta_, running_mean_, running_var_;
  BatchNormCache<T> cache_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return input; }
  void mix_kink_signature(std::uint64_t& hash) const override;

 private:
  Tensor<T> input_;
};

template <typename T>
class MaxPool3d final : public Layer<T> {
 public:
  MaxPool3d(std::string name, Dims3 window) : Layer<T>(std::move(name)), window_(window) {}
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void mix_kink_signature(std::uint64_t& hash) const override;

 private:
  Dims3 window_;
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
};

/// Affine map on the flattened per-sample features; output [B, out_features].
template <typename T>
class FullyConnected final : public Layer<T> {
 public:
  FullyConnected(std::string name, std::size_t in_features, std::size_t out_features);
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void set_input_grad(bool on) override { need_input_grad_ = on; }

 private:
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
  bool need_input_grad_ = true;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Sequential& add(LayerPtr<T> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void mix_kink_signature(std::uint64_t& hash) const override;
  void set_input_grad(bool on) override;

  /// Human-readable "name: in -> out" lines for every direct child.
  std::vector<std::string> trace(const Shape& input) const;

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// Two-convolution residual unit with a 1x1x1 conv + batchnorm projection on the
/// shortcut whenever the channel count changes; identity otherwise.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(std::string name, std::size_t in_channels, std::size_t out_channels, BatchNormOptions bn = {});

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void mix_kink_signature(std::uint64_t& hash) const override;

 private:
  Sequential<T> main_;
  std::unique_ptr<Sequential<T>> shortcut_;
  Relu<T> out_relu_;
};

/// y = inner(x) + x. With the skip disabled the block degenerates to y = inner(x).
template <typename T>
class SkipAdd final : public Layer<T> {
 public:
  SkipAdd(std::string name, LayerPtr<T> inner) : Layer<T>(std::move(name)), inner_(std::move(inner)) {}

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override { inner_->collect_parameters(out); }
  void mix_kink_signature(std::uint64_t& hash) const override { inner_->mix_kink_signature(hash); }

  void set_enabled(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }
  Layer<T>& inner() { return *inner_; }

 private:
  LayerPtr<T> inner_;
  bool enabled_ = true;
};

/// conv (no bias) -> batchnorm -> relu.
template <typename T>
LayerPtr<T> make_basic_block(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                             std::size_t kernel, BatchNormOptions bn = {});

/// deconv 2x2x2 stride 2 (no bias) -> batchnorm -> relu.
template <typename T>
LayerPtr<T> make_upsample_block(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                                BatchNormOptions bn = {});

/// When enabled on the current thread, Sequential checks every child's output
/// and throws NumericError naming the first layer that produced NaN/Inf.
class FiniteCheckScope {
 public:
  FiniteCheckScope();
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;
  static bool active();

 private:
  bool previous_;
};

}  // namespace v2v
