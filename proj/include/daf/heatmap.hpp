#pragma once

#include <array>

#include "daf/tensor.hpp"

namespace daf {

/// Depth-summed activation map, entries >= 0 for post-ReLU inputs.
struct AggregationMap {
  Tensor values;  // [h, w]
};

/// Coarse object localization at input resolution. Values lie in
/// {0, 1/3, 2/3, 1}; a pixel counts as part of the object when at least two
/// of the three pyramid levels vote for it.
struct LocationHeatmap {
  Tensor values;       // [S, S]
  int object_area = 0; // number of pixels with value >= kActivated
};

/// Majority vote threshold for the fused three-level heatmap.
inline constexpr float kHeatmapActivated = 2.0f / 3.0f;

/// Sum a [h,w,d] activation tensor over its depth axis.
AggregationMap aggregate(const Tensor& activation);

/// 1 where the value is strictly above the map mean, 0 elsewhere. A constant
/// map yields all zeros. The mean is taken in double so the output is
/// invariant under positive rescaling of the input.
Tensor binarize(const AggregationMap& map);

/// Nearest-neighbor upsample of a rank-2 map to size [s, s].
Tensor upsample_nearest(const Tensor& map, int s);

/// Upsample three binary level masks to [s, s], average them, and count the
/// majority-activated pixels as the object area.
LocationHeatmap fuse_masks(const std::array<Tensor, 3>& masks, int s);

}  // namespace daf
