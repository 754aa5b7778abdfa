#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "daf/boxes.hpp"
#include "daf/heatmap.hpp"
#include "daf/params.hpp"
#include "daf/rng.hpp"
#include "daf/tape.hpp"
#include "daf/tensor.hpp"

namespace daf {

/// One default box per feature cell per pyramid level: square, centered on
/// the cell, side = 4x the level stride.
struct Anchor {
  float cx = 0, cy = 0, side = 0;
  int level = 0;    // 1-based
  int cell_y = 0, cell_x = 0;
};

struct AnchorSet {
  std::vector<Anchor> anchors;
  std::array<int, 3> level_extent{};  // feature-map side length per level
  std::array<int, 3> level_offset{};  // index of the level's first anchor
  int image_size = 0;

  static AnchorSet build(int image_size, const std::array<int, 3>& level_extents) {
    AnchorSet set;
    set.image_size = image_size;
    for (int l = 0; l < 3; ++l) {
      const int n = level_extents[l];
      const float stride = static_cast<float>(image_size) / static_cast<float>(n);
      set.level_extent[l] = n;
      set.level_offset[l] = static_cast<int>(set.anchors.size());
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          Anchor a;
          a.cx = (static_cast<float>(j) + 0.5f) * stride;
          a.cy = (static_cast<float>(i) + 0.5f) * stride;
          a.side = 4.0f * stride;
          a.level = l + 1;
          a.cell_y = i;
          a.cell_x = j;
          set.anchors.push_back(a);
        }
      }
    }
    return set;
  }
};

/// Box regression bounds: log-scale offsets are clamped to +-kOffsetLogClamp
/// and the center is clamped so the decoded box always stays inside the
/// image with positive area.
inline constexpr double kOffsetLogClamp = 2.0;

/// Decode (dx, dy, dw, dh) against an anchor: center shift in units of the
/// anchor side, width/height on a clamped log scale, then the center is
/// pulled inside the image. Plain-value twin of decode_box_on_tape; the two
/// must perform the identical arithmetic in the identical order.
template <typename T>
std::array<T, 4> decode_box(const Anchor& a, T dx, T dy, T dw, T dh, T image_size) {
  const T lo = static_cast<T>(-kOffsetLogClamp), hi = static_cast<T>(kOffsetLogClamp);
  auto clampv = [&](T v) { return v < lo ? lo : (v > hi ? hi : v); };
  T w = static_cast<T>(a.side) * std::exp(clampv(dw));
  T h = static_cast<T>(a.side) * std::exp(clampv(dh));
  w = std::min(w, image_size);
  h = std::min(h, image_size);
  T cx = static_cast<T>(a.cx) + dx * static_cast<T>(a.side);
  T cy = static_cast<T>(a.cy) + dy * static_cast<T>(a.side);
  const T hw = w / T(2), hh = h / T(2);
  cx = std::max(std::min(cx, image_size - hw), hw);
  cy = std::max(std::min(cy, image_size - hh), hh);
  return {cx - hw, cy - hh, cx + hw, cy + hh};
}

template <typename T>
struct BoxVarT {
  typename TapeT<T>::Var x0, y0, x1, y1;
  typename TapeT<T>::Var score;
};

/// Differentiable re-decode of one anchor from its offset map node, for the
/// boxes that survived selection. Mirrors decode_box step for step.
template <typename T>
BoxVarT<T> decode_box_on_tape(TapeT<T>& tape, const Anchor& a, typename TapeT<T>::Var offsets4,
                              typename TapeT<T>::Var score, T image_size) {
  using Var = typename TapeT<T>::Var;
  const T lo = static_cast<T>(-kOffsetLogClamp), hi = static_cast<T>(kOffsetLogClamp);
  Var dx = tape.gather(offsets4, {0});
  Var dy = tape.gather(offsets4, {1});
  Var dw = tape.gather(offsets4, {2});
  Var dh = tape.gather(offsets4, {3});
  Var w = tape.scale(tape.exp_(tape.clamp(dw, lo, hi)), static_cast<T>(a.side));
  Var h = tape.scale(tape.exp_(tape.clamp(dh, lo, hi)), static_cast<T>(a.side));
  Var img = tape.scalar(image_size);
  w = tape.min2(w, img);
  h = tape.min2(h, img);
  Var cx = tape.add_const(tape.scale(dx, static_cast<T>(a.side)), static_cast<T>(a.cx));
  Var cy = tape.add_const(tape.scale(dy, static_cast<T>(a.side)), static_cast<T>(a.cy));
  Var hw = tape.scale(w, T(0.5));
  Var hh = tape.scale(h, T(0.5));
  cx = tape.max2(tape.min2(cx, tape.sub(img, hw)), hw);
  cy = tape.max2(tape.min2(cy, tape.sub(img, hh)), hh);
  BoxVarT<T> b;
  b.x0 = tape.sub(cx, hw);
  b.y0 = tape.sub(cy, hh);
  b.x1 = tape.add(cx, hw);
  b.y1 = tape.add(cy, hh);
  b.score = score;
  return b;
}

/// Per-level 3x3 convolution heads: one score channel and four offset
/// channels, applied to each pyramid activation.
template <typename T>
void init_sppn_params(ParamStoreT<T>& store, const std::array<int, 3>& level_channels, Rng& rng,
                      const std::string& prefix = "sppn") {
  for (int l = 0; l < 3; ++l) {
    const int d = level_channels[l];
    const std::string base = prefix + "/l" + std::to_string(l + 1);
    store.create(base + "/cls_k", he_uniform<T>(rng, Shape{3, 3, d, 1}, 9 * d));
    store.create(base + "/cls_b", TensorT<T>::zeros(Shape{1}));
    store.create(base + "/reg_k", he_uniform<T>(rng, Shape{3, 3, d, 4}, 9 * d));
    store.create(base + "/reg_b", TensorT<T>::zeros(Shape{4}));
  }
}

template <typename T>
struct SppnMapsT {
  std::array<typename TapeT<T>::Var, 3> score;    // [h,w,1] per level
  std::array<typename TapeT<T>::Var, 3> offsets;  // [h,w,4] per level
};

template <typename T>
SppnMapsT<T> sppn_forward(TapeT<T>& tape, const std::array<typename TapeT<T>::Var, 3>& pyramid,
                          ParamStoreT<T>& store, const std::string& prefix = "sppn") {
  SppnMapsT<T> maps;
  for (int l = 0; l < 3; ++l) {
    const std::string base = prefix + "/l" + std::to_string(l + 1);
    maps.score[l] = tape.bias_add(tape.conv2d(pyramid[l], tape.param(store.at(base + "/cls_k")), 1, 1),
                                  tape.param(store.at(base + "/cls_b")));
    maps.offsets[l] = tape.bias_add(tape.conv2d(pyramid[l], tape.param(store.at(base + "/reg_k")), 1, 1),
                                    tape.param(store.at(base + "/reg_b")));
  }
  return maps;
}

/// Decode every anchor from plain score/offset map values. One proposal per
/// anchor, clipped to the image.
std::vector<ProposalBox> decode_all(const AnchorSet& anchors, const std::array<Tensor, 3>& score_maps,
                                    const std::array<Tensor, 3>& offset_maps);

/// Keep the boxes whose center pixel lies in the majority-activated area of
/// the heatmap. May return an empty list; callers fall back to the
/// unfiltered set.
std::vector<ProposalBox> filter_positives(const std::vector<ProposalBox>& boxes,
                                          const LocationHeatmap& heatmap);

/// Top-M survivors by score; when NMS left fewer than M, pad with the best
/// suppressed boxes. Ties always break by box_tiebreak_less.
std::vector<ProposalBox> select_top(const std::vector<ProposalBox>& survivors,
                                    const std::vector<ProposalBox>& all_boxes, int m);

enum class RegionClass { Keep, Noise, Blur };

/// Pixel membership with keep > noise > blur priority. A pixel belongs to a
/// box when its center (x+0.5, y+0.5) lies in [x0,x1) x [y0,y1).
RegionClass classify_region_pixel(const std::vector<ProposalBox>& boxes, int k, int x, int y);

/// Separable Gaussian blur with edge clamping; sigma <= 0 is the identity.
Tensor gaussian_blur(const Tensor& image, float sigma);

/// Self-supervised region views: box k kept verbatim, the other boxes
/// overlaid with additive Gaussian noise, everything else heavily blurred.
/// Deterministic for a fixed seed; output stays in [0,1].
Tensor preprocess_region(const Tensor& image, const std::vector<ProposalBox>& boxes, int k,
                         float blur_sigma, float noise_std, std::uint64_t seed);

/// Binary union mask of the boxes at resolution [s,s].
Tensor saliency_mask(const std::vector<ProposalBox>& boxes, int s);

}  // namespace daf
