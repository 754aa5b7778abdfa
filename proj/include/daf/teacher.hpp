#pragma once

#include <string>

#include "daf/backbone.hpp"
#include "daf/heatmap.hpp"
#include "daf/paf.hpp"
#include "daf/tape.hpp"

namespace daf {

/// Teacher configuration: a 5-channel backbone plus the grouped bilinear
/// head. The attention channels make in_channels = 3 (RGB) + heatmap + mask.
struct TeacherConfig {
  BackboneConfig backbone;  // in_channels must be 5
  int groups = 4;
};

/// Stack image, location heatmap and saliency mask into the fixed channel
/// order (R, G, B, heatmap, mask). All three must be at the same resolution
/// and in [0,1].
template <typename T>
TensorT<T> build_teacher_input(const TensorT<T>& image, const TensorT<T>& heatmap,
                               const TensorT<T>& mask) {
  if (image.rank() != 3 || image.extent(2) != 3)
    throw std::invalid_argument("teacher input image must be [S,S,3], got " + shape_to_string(image.shape));
  const int s = image.extent(0);
  if (image.extent(1) != s) throw std::invalid_argument("teacher input image must be square");
  if (heatmap.rank() != 2 || heatmap.extent(0) != s || heatmap.extent(1) != s)
    throw std::invalid_argument("heatmap resolution " + shape_to_string(heatmap.shape) +
                                " does not match image " + shape_to_string(image.shape));
  if (mask.rank() != 2 || mask.extent(0) != s || mask.extent(1) != s)
    throw std::invalid_argument("mask resolution " + shape_to_string(mask.shape) +
                                " does not match image " + shape_to_string(image.shape));
  TensorT<T> out(Shape{s, s, 5});
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      for (int c = 0; c < 3; ++c) out.at3(i, j, c) = image.at3(i, j, c);
      out.at3(i, j, 3) = heatmap.at2(i, j);
      out.at3(i, j, 4) = mask.at2(i, j);
    }
  }
  for (T v : out.data) {
    if (v < T(0) || v > T(1))
      throw std::invalid_argument("teacher input values must lie in [0,1]");
  }
  return out;
}

template <typename T>
void init_teacher_params(ParamStoreT<T>& store, const TeacherConfig& cfg, Rng& rng,
                         const std::string& prefix = "teacher") {
  if (cfg.backbone.in_channels != 5)
    throw std::invalid_argument("teacher backbone must take 5 input channels");
  init_backbone_params<T>(store, cfg.backbone, rng, prefix);
  const int d = cfg.backbone.stage_channels[2];
  // Small asymmetric init so the groups specialize instead of staying tied.
  TensorT<T> assign(Shape{d, cfg.groups});
  for (auto& v : assign.data) v = static_cast<T>(rng.uniform(-0.5, 0.5));
  store.create(prefix + "/group_assign", std::move(assign));
  const int bl = cfg.groups * d * (d + 1) / 2;
  store.create(prefix + "/bilinear_fc/weight",
               he_uniform<T>(rng, Shape{cfg.backbone.n_class, bl}, bl));
  store.create(prefix + "/bilinear_fc/bias", TensorT<T>::zeros(Shape{cfg.backbone.n_class}));
}

template <typename T>
struct TeacherOutT {
  typename TapeT<T>::Var logits;
  typename TapeT<T>::Var hint;  // stage-2 activation, the designated hint layer
};

/// Teacher forward: shared 3-stage trunk on the 5-channel input, part
/// attention filtering of the stage-3 features by the mask channel, grouped
/// bilinear pooling, then a linear classifier. With an all-zero mask the
/// bilinear vector vanishes and the logits reduce to the classifier bias.
template <typename T>
TeacherOutT<T> teacher_forward(TapeT<T>& tape, typename TapeT<T>::Var input, ParamStoreT<T>& store,
                               const TeacherConfig& cfg, const std::string& prefix = "teacher") {
  const TensorT<T>& in = tape.value(input);
  if (in.rank() != 3 || in.extent(2) != 5)
    throw std::invalid_argument("teacher_forward expects a [S,S,5] input, got " + shape_to_string(in.shape));
  auto trunk = backbone_forward<T>(tape, input, store, cfg.backbone, prefix);

  // The mask channel is a detached attention input by construction; pull it
  // out of the plain input tensor rather than slicing on the tape.
  const int s = in.extent(0);
  TensorT<T> mask(Shape{s, s});
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) mask.at2(i, j) = in.at3(i, j, 4);
  auto mask_var = tape.input(std::move(mask));

  const TensorT<T>& a3 = tape.value(trunk.pyramid[2]);
  auto adapted = adapt_mask<T>(tape, mask_var, a3.extent(0), a3.extent(1));
  auto filtered = filter_features<T>(tape, trunk.pyramid[2], adapted);
  auto bilinear = group_bilinear<T>(tape, filtered, tape.param(store.at(prefix + "/group_assign")));
  auto logits = tape.add(tape.matvec(tape.param(store.at(prefix + "/bilinear_fc/weight")), bilinear),
                         tape.param(store.at(prefix + "/bilinear_fc/bias")));
  return TeacherOutT<T>{logits, trunk.pyramid[1]};
}

}  // namespace daf
