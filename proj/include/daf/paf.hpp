#pragma once

#include "daf/tape.hpp"

namespace daf {

/// Part attention filtering: resize a [S,S] saliency mask to a feature map's
/// spatial shape by area averaging. Values stay in [0,1] because averaging is
/// a convex combination.
template <typename T>
typename TapeT<T>::Var adapt_mask(TapeT<T>& tape, typename TapeT<T>::Var saliency, int h, int w) {
  return tape.avg_downsample(saliency, h, w);
}

/// Highlight informative locations: out[i,j,k] = features[i,j,k] * mask[i,j].
template <typename T>
typename TapeT<T>::Var filter_features(TapeT<T>& tape, typename TapeT<T>::Var features,
                                       typename TapeT<T>::Var mask) {
  return tape.mul_spatial(features, mask);
}

/// Grouped second-order pooling. Channels are sum-pooled over space, each
/// group re-weights the pooled vector by its (row-softmaxed) soft-assignment
/// column, and the upper triangle of each group's outer product is
/// concatenated and l2-normalized. A zero input stays zero.
template <typename T>
typename TapeT<T>::Var group_bilinear(TapeT<T>& tape, typename TapeT<T>::Var features,
                                      typename TapeT<T>::Var assignment_logits) {
  using Var = typename TapeT<T>::Var;
  const TensorT<T>& f = tape.value(features);
  const TensorT<T>& a = tape.value(assignment_logits);
  if (f.rank() != 3) throw std::invalid_argument("group_bilinear expects [h,w,d] features");
  if (a.rank() != 2 || a.extent(0) != f.extent(2))
    throw std::invalid_argument("assignment must be [d,G] with d matching features, got " +
                                shape_to_string(a.shape));
  const int d = f.extent(2);
  const int groups = a.extent(1);
  Var assignment = tape.row_softmax(assignment_logits);
  Var pooled = tape.reduce_sum(features, {0, 1});  // [d]
  std::vector<Var> parts;
  parts.reserve(groups);
  for (int g = 0; g < groups; ++g) {
    std::vector<int> col(d);
    for (int k = 0; k < d; ++k) col[k] = k * groups + g;
    Var weights = tape.gather(assignment, col);
    Var sub = tape.mul(pooled, weights);
    parts.push_back(tape.triangle_outer(sub));
  }
  return tape.l2_normalize(tape.concat(parts));
}

}  // namespace daf
