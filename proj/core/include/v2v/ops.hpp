#pragma once

// Stateless forward/backward kernels for every layer type used by the networks.
// Volumetric tensors are [B, C, D, H, W]; fully connected inputs are [B, F...].
// All kernels are instantiated for float (training) and double (gradient checks).

#include <cstdint>
#include <optional>

#include "v2v/tensor.hpp"

namespace v2v {

struct ConvGeometry {
  Dims3 kernel = Dims3::cube(3);
  Dims3 stride = Dims3::cube(1);
  Dims3 pad = Dims3::cube(0);
};

/// Output spatial extent of a convolution; throws ShapeError when the kernel
/// does not fit inside the padded input.
Dims3 conv_output_dims(const Dims3& input, const ConvGeometry& g);
/// Output spatial extent of a transposed convolution: (in - 1) * stride + kernel - 2 * pad.
Dims3 deconv_output_dims(const Dims3& input, const ConvGeometry& g);

enum class ConvPath {
  automatic,  ///< sparse scatter when the input is mostly zeros, GEMM otherwise
  dense,      ///< im2col + GEMM
  sparse,     ///< scatter from nonzero input voxels
};

/// Fraction of nonzero input entries below which the automatic path scatters.
inline constexpr double kSparseDensityThreshold = 0.05;

template <typename T>
struct ConvGrads {
  Tensor<T> input;   ///< empty when the input gradient was not requested
  Tensor<T> weight;
  Tensor<T> bias;    ///< empty when the layer has no bias
};

// conv3d: weight [C_out, C_in, kd, kh, kw], bias [C_out] or null.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                         const ConvGeometry& g, ConvPath path = ConvPath::automatic);
template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             const ConvGeometry& g, bool need_input_grad, bool has_bias,
                             ConvPath path = ConvPath::automatic);

// deconv3d (transposed convolution): weight [C_in, C_out, kd, kh, kw], bias [C_out] or null.
template <typename T>
Tensor<T> deconv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvGeometry& g);
template <typename T>
ConvGrads<T> deconv3d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               const ConvGeometry& g, bool need_input_grad, bool has_bias);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
/// Subgradient at exactly zero is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  ///< linear input index per output element
};

/// Max pooling with window == stride. Ties resolve to the first element in
/// row-major window order.
template <typename T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& input, const Dims3& window);
template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& argmax,
                             const Shape& input_shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;          ///< x_hat, same shape as input
  std::vector<double> inv_std;   ///< per channel
  bool train = true;
};

/// Per-channel normalization over batch and spatial axes. In train mode the
/// running statistics are updated in place (momentum EMA, unbiased variance).
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                            const BatchNormOptions& opts, BatchNormCache<T>& cache);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                     const BatchNormCache<T>& cache);

// Fully connected: input [B, F...] flattened to [B, F]; weight [G, F]; bias [G].
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
ConvGrads<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

/// Sum (not mean) of squared differences; grad = 2 (pred - target).
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

// im2col / col2im over one sample [C, D, H, W]; col is [C*kd*kh*kw, Do*Ho*Wo].
template <typename T>
void im2col(const T* image, std::size_t channels, const Dims3& in, const ConvGeometry& g, const Dims3& out,
            T* col);
/// Accumulates (+=) the column buffer back into the image.
template <typename T>
void col2im(const T* col, std::size_t channels, const Dims3& in, const ConvGeometry& g, const Dims3& out,
            T* image);

}  // namespace v2v
