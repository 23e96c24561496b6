#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "v2v/layers.hpp"

namespace v2v {

enum class Variant { v2v, v2c };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Architecture hyperparameters of the volumetric networks.
struct NetworkConfig {
  std::size_t input_grid = 32;
  std::size_t base_channels = 16;
  std::size_t down_stages = 2;
  std::size_t keypoints = 16;
  /// 2 keeps the pooling block after the 7x7x7 front block; 1 drops it.
  std::size_t output_stride = 2;
  Variant variant = Variant::v2v;
  /// Width of the hidden fully connected layer of the coordinate-regression head.
  std::size_t v2c_hidden = 64;
  BatchNormOptions batchnorm{};

  /// base, 2 base, 4 base, ... (down_stages + 1 entries).
  std::vector<std::size_t> channel_schedule() const;
  std::size_t heatmap_grid() const { return input_grid / output_stride; }
  /// Throws std::invalid_argument naming the offending stage.
  void validate() const;

  std::string to_text() const;
  static NetworkConfig from_text(const std::string& text);
};

/// Layout of the 2D reference refinement network (realized with depth-1 volumetric layers).
struct RefineNetConfig {
  std::size_t patch_size = 32;
  std::size_t channels = 8;
  std::size_t hidden = 64;
  BatchNormOptions batchnorm{};

  void validate() const;
  std::string to_text() const;
  static RefineNetConfig from_text(const std::string& text);
};

/// An assembled network: the layer graph plus the text record of its configuration.
template <typename T>
class Network {
 public:
  Network(std::string kind, std::string config_text, Shape sample_input_shape, std::unique_ptr<Sequential<T>> root,
          std::vector<SkipAdd<T>*> skips = {});

  const std::string& kind() const { return kind_; }
  const std::string& config_text() const { return config_text_; }
  /// Input shape with batch extent 1.
  const Shape& sample_input_shape() const { return sample_input_shape_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  /// Returns the input gradient only when enabled with set_input_grad (off by default).
  Tensor<T> backward(const Tensor<T>& grad_out);
  void set_input_grad(bool on) { root_->set_input_grad(on); }
  Shape output_shape(const Shape& input) const { return root_->output_shape(input); }

  std::vector<Parameter<T>*> parameters();
  void zero_grad();
  /// Learnable scalar count (running statistics excluded).
  std::size_t parameter_count();
  std::uint64_t kink_signature() const;

  /// Toggles every encoder/decoder skip addition.
  void set_skips_enabled(bool on);
  std::vector<std::string> trace(std::size_t batch = 1) const;

  Sequential<T>& root() { return *root_; }

  /// Copies parameter values (including running statistics) from a network of the same layout.
  template <typename U>
  void copy_parameters_from(Network<U>& other);

  /// name -> value snapshot (float), used by checkpoints.
  std::map<std::string, Tensor<float>> state();
  void load_state(const std::map<std::string, Tensor<float>>& state);

 private:
  std::string kind_;
  std::string config_text_;
  Shape sample_input_shape_;
  std::unique_ptr<Sequential<T>> root_;
  std::vector<SkipAdd<T>*> skips_;
};

template <typename T>
Network<T> build_v2v(const NetworkConfig& config);
/// Same trunk as build_v2v up to the decoder output, then flatten -> FC -> ReLU -> FC(3N).
template <typename T>
Network<T> build_v2c(const NetworkConfig& config);
/// Dispatches on config.variant.
template <typename T>
Network<T> build_network(const NetworkConfig& config);
template <typename T>
Network<T> build_refinement_net(const RefineNetConfig& config);

/// Rebuilds a network from a checkpoint's kind and configuration text.
template <typename T>
Network<T> build_from_record(const std::string& kind, const std::string& config_text);

template <typename T>
template <typename U>
void Network<T>::copy_parameters_from(Network<U>& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw ShapeError("copy_parameters_from: parameter lists differ in length");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->value.shape() != src[i]->value.shape()) {
      throw ShapeError("copy_parameters_from: " + dst[i]->name + " shape mismatch");
    }
    for (std::size_t j = 0; j < dst[i]->value.size(); ++j) dst[i]->value[j] = static_cast<T>(src[i]->value[j]);
  }
}

}  // namespace v2v
