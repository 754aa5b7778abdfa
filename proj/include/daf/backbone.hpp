#pragma once

#include <array>
#include <string>

#include "daf/params.hpp"
#include "daf/rng.hpp"
#include "daf/tape.hpp"

namespace daf {

/// Three-stage feature extractor. Each stage is conv3x3 (stride 1, pad 1),
/// bias, ReLU, then 2x2 max pooling, so every stage halves the spatial
/// resolution and the pyramid shapes follow S/2, S/4, S/8.
struct BackboneConfig {
  std::array<int, 3> stage_channels{8, 16, 32};
  int input_size = 64;
  int n_class = 8;
  int in_channels = 3;

  void validate() const {
    if (input_size % 8 != 0)
      throw std::invalid_argument("input_size must be divisible by 8, got " + std::to_string(input_size));
    if (n_class < 2) throw std::invalid_argument("n_class must be >= 2");
    for (int c : stage_channels)
      if (c < 1) throw std::invalid_argument("stage channels must be positive");
    if (in_channels < 1) throw std::invalid_argument("in_channels must be positive");
  }

  /// Pyramid side length of level l (1-based).
  int level_extent(int level) const { return input_size >> level; }
};

template <typename T>
void init_backbone_params(ParamStoreT<T>& store, const BackboneConfig& cfg, Rng& rng,
                          const std::string& prefix) {
  cfg.validate();
  int cin = cfg.in_channels;
  for (int s = 0; s < 3; ++s) {
    const int cout = cfg.stage_channels[s];
    const std::string base = prefix + "/stage" + std::to_string(s + 1);
    store.create(base + "/kernel", he_uniform<T>(rng, Shape{3, 3, cin, cout}, 9 * cin));
    store.create(base + "/bias", TensorT<T>::zeros(Shape{cout}));
    cin = cout;
  }
  store.create(prefix + "/fc/weight",
               he_uniform<T>(rng, Shape{cfg.n_class, cfg.stage_channels[2]}, cfg.stage_channels[2]));
  store.create(prefix + "/fc/bias", TensorT<T>::zeros(Shape{cfg.n_class}));
}

template <typename T>
struct BackboneOutT {
  std::array<typename TapeT<T>::Var, 3> pyramid;  // post-ReLU stage activations
  typename TapeT<T>::Var logits;
};

/// Forward pass: pyramid of the three stage activations plus classifier
/// logits from a global-mean-pooled linear head.
template <typename T>
BackboneOutT<T> backbone_forward(TapeT<T>& tape, typename TapeT<T>::Var image, ParamStoreT<T>& store,
                                 const BackboneConfig& cfg, const std::string& prefix) {
  const TensorT<T>& img = tape.value(image);
  if (img.rank() != 3 || img.extent(0) != cfg.input_size || img.extent(1) != cfg.input_size)
    throw std::invalid_argument("backbone input must be [" + std::to_string(cfg.input_size) + "," +
                                std::to_string(cfg.input_size) + ",c], got " + shape_to_string(img.shape));
  if (img.extent(2) != cfg.in_channels)
    throw std::invalid_argument("backbone expects " + std::to_string(cfg.in_channels) +
                                " input channels, got " + std::to_string(img.extent(2)));
  BackboneOutT<T> out;
  auto x = image;
  for (int s = 0; s < 3; ++s) {
    const std::string base = prefix + "/stage" + std::to_string(s + 1);
    x = tape.conv2d(x, tape.param(store.at(base + "/kernel")), 1, 1);
    x = tape.bias_add(x, tape.param(store.at(base + "/bias")));
    x = tape.relu(x);
    x = tape.maxpool2(x);
    out.pyramid[s] = x;
  }
  auto pooled = tape.reduce_mean(x, {0, 1});
  out.logits = tape.add(tape.matvec(tape.param(store.at(prefix + "/fc/weight")), pooled),
                        tape.param(store.at(prefix + "/fc/bias")));
  return out;
}

}  // namespace daf
