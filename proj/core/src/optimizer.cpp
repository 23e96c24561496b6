#include "v2v/optimizer.hpp"

#include <cmath>

namespace v2v {

template <typename T>
void rmsprop_update(std::span<T> param, std::span<const T> grad, std::span<T> mean_square, const RmsPropOptions& o) {
  if (param.size() != grad.size() || param.size() != mean_square.size()) {
    throw ShapeError("rmsprop: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NumericError("rmsprop: non-finite gradient at index " + std::to_string(i));
  }
  const T alpha = static_cast<T>(o.alpha);
  const T lr = static_cast<T>(o.learning_rate);
  const T eps = static_cast<T>(o.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    mean_square[i] = alpha * mean_square[i] + (T{1} - alpha) * g * g;
    param[i] -= lr * g / (std::sqrt(mean_square[i]) + eps);
  }
}

template <typename T>
void RmsProp<T>::step(Network<T>& net) {
  for (auto* p : net.parameters()) {
    if (!p->trainable) continue;
    auto it = mean_square_.find(p->name);
    if (it == mean_square_.end()) it = mean_square_.emplace(p->name, Tensor<T>(p->value.shape())).first;
    try {
      rmsprop_update<T>(p->value.data(), p->grad.data(), it->second.data(), opts_);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in parameter " + p->name);
    }
  }
}

template <typename T>
void RmsProp<T>::save_to(Checkpoint& ck) const {
  for (const auto& [name, t] : mean_square_) ck.put("rmsprop." + name, t.template cast<float>());
}

template <typename T>
void RmsProp<T>::load_from(const Checkpoint& ck) {
  mean_square_.clear();
  const std::string prefix = "rmsprop.";
  for (const auto& e : ck.entries()) {
    if (e.name.rfind(prefix, 0) == 0) mean_square_.emplace(e.name.substr(prefix.size()), e.tensor.template cast<T>());
  }
}

template <typename T>
void init_weights(Network<T>& net, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std);
  for (auto* p : net.parameters()) {
    switch (p->role) {
      case ParamRole::weight:
        for (auto& v : p->value.data()) v = static_cast<T>(normal(rng));
        break;
      case ParamRole::bias:
      case ParamRole::bn_shift:
      case ParamRole::running_mean:
        p->value.fill(T{0});
        break;
      case ParamRole::bn_scale:
      case ParamRole::running_var:
        p->value.fill(T{1});
        break;
    }
  }
}

template void rmsprop_update<float>(std::span<float>, std::span<const float>, std::span<float>, const RmsPropOptions&);
template void rmsprop_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                     const RmsPropOptions&);
template class RmsProp<float>;
template class RmsProp<double>;
template void init_weights<float>(Network<float>&, double, std::mt19937_64&);
template void init_weights<double>(Network<double>&, double, std::mt19937_64&);

}  // namespace v2v
