#pragma once

#include <map>
#include <random>
#include <span>
#include <string>

#include "v2v/checkpoint.hpp"
#include "v2v/network.hpp"

namespace v2v {

inline constexpr double kLearningRate = 2.5e-4;
inline constexpr double kInitStd = 0.001;

struct RmsPropOptions {
  double learning_rate = kLearningRate;
  double alpha = 0.99;
  double epsilon = 1e-8;
};

/// v <- alpha v + (1 - alpha) g^2 ;  p <- p - lr g / (sqrt(v) + eps).
/// Throws NumericError (before touching anything) if g has a NaN/Inf entry.
template <typename T>
void rmsprop_update(std::span<T> param, std::span<const T> grad, std::span<T> mean_square, const RmsPropOptions& opts);

/// RMSProp over every trainable parameter of a network, with state keyed by parameter name.
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(RmsPropOptions opts = {}) : opts_(opts) {}

  void step(Network<T>& net);
  const RmsPropOptions& options() const { return opts_; }

  /// Stores state as "rmsprop.<param>" tensors.
  void save_to(Checkpoint& ck) const;
  void load_from(const Checkpoint& ck);
  const std::map<std::string, Tensor<T>>& state() const { return mean_square_; }

 private:
  RmsPropOptions opts_;
  std::map<std::string, Tensor<T>> mean_square_;
};

/// Conv/deconv/FC weights ~ N(0, std^2); biases and BN shifts 0; BN scales 1;
/// running mean 0, running variance 1.
template <typename T>
void init_weights(Network<T>& net, double std, std::mt19937_64& rng);

}  // namespace v2v
