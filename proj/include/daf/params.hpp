#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "daf/rng.hpp"
#include "daf/tensor.hpp"

namespace daf {

/// A named trainable tensor with its gradient and momentum buffers.
template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  TensorT<T> momentum;
};

/// Ordered collection of parameters. Iteration order is creation order, which
/// keeps optimizer updates and checkpoint layout deterministic.
template <typename T>
class ParamStoreT {
 public:
  ParamT<T>& create(const std::string& name, TensorT<T> init) {
    if (byname_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<ParamT<T>>();
    p->name = name;
    p->grad = TensorT<T>::zeros(init.shape);
    p->momentum = TensorT<T>::zeros(init.shape);
    p->value = std::move(init);
    ParamT<T>* raw = p.get();
    order_.push_back(std::move(p));
    byname_[name] = raw;
    return *raw;
  }

  bool contains(const std::string& name) const { return byname_.count(name) > 0; }

  ParamT<T>& at(const std::string& name) {
    auto it = byname_.find(name);
    if (it == byname_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return *it->second;
  }
  const ParamT<T>& at(const std::string& name) const {
    auto it = byname_.find(name);
    if (it == byname_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return *it->second;
  }

  std::size_t size() const { return order_.size(); }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& p : order_) n += p->value.size();
    return n;
  }

  std::vector<ParamT<T>*> ordered() {
    std::vector<ParamT<T>*> v;
    v.reserve(order_.size());
    for (auto& p : order_) v.push_back(p.get());
    return v;
  }
  std::vector<const ParamT<T>*> ordered() const {
    std::vector<const ParamT<T>*> v;
    v.reserve(order_.size());
    for (const auto& p : order_) v.push_back(p.get());
    return v;
  }

  void zero_grads() {
    for (auto& p : order_) std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
  }

  /// Classic momentum SGD with decoupled-from-nothing L2 weight decay:
  ///   v <- mu*v + (g*grad_scale + wd*theta);  theta <- theta - lr*v
  void sgd_momentum_step(T lr, T mu, T weight_decay, T grad_scale) {
    for (auto& p : order_) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const T g = p->grad[i] * grad_scale + weight_decay * p->value[i];
        p->momentum[i] = mu * p->momentum[i] + g;
        p->value[i] -= lr * p->momentum[i];
      }
    }
  }

 private:
  std::vector<std::unique_ptr<ParamT<T>>> order_;
  std::unordered_map<std::string, ParamT<T>*> byname_;
};

using ParamStore = ParamStoreT<float>;

/// He-style uniform init: U(-a, a) with a = sqrt(6 / fan_in).
template <typename T>
TensorT<T> he_uniform(Rng& rng, Shape shape, int fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  TensorT<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace daf
