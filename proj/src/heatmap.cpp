#include "daf/heatmap.hpp"

#include <stdexcept>

namespace daf {

AggregationMap aggregate(const Tensor& activation) {
  if (activation.rank() != 3)
    throw std::invalid_argument("aggregate expects a [h,w,d] activation, got " +
                                shape_to_string(activation.shape));
  const int h = activation.extent(0), w = activation.extent(1), d = activation.extent(2);
  Tensor out(Shape{h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += activation.at3(i, j, k);
      out.at2(i, j) = static_cast<float>(acc);
    }
  }
  return AggregationMap{std::move(out)};
}

Tensor binarize(const AggregationMap& map) {
  const Tensor& a = map.values;
  double mean = 0.0;
  for (float v : a.data) mean += v;
  mean /= static_cast<double>(a.size());
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data[i] = static_cast<double>(a.data[i]) > mean ? 1.0f : 0.0f;
  return out;
}

Tensor upsample_nearest(const Tensor& map, int s) {
  if (map.rank() != 2) throw std::invalid_argument("upsample_nearest expects a rank-2 map");
  const int h = map.extent(0), w = map.extent(1);
  if (s < h || s < w)
    throw std::invalid_argument("upsample target " + std::to_string(s) + " smaller than source " +
                                shape_to_string(map.shape));
  Tensor out(Shape{s, s});
  for (int i = 0; i < s; ++i) {
    const int si = i * h / s;
    for (int j = 0; j < s; ++j) {
      out.at2(i, j) = map.at2(si, j * w / s);
    }
  }
  return out;
}

LocationHeatmap fuse_masks(const std::array<Tensor, 3>& masks, int s) {
  LocationHeatmap hm;
  hm.values = Tensor::zeros(Shape{s, s});
  for (const Tensor& m : masks) {
    Tensor up = upsample_nearest(m, s);
    for (std::size_t i = 0; i < hm.values.size(); ++i) hm.values.data[i] += up.data[i];
  }
  hm.object_area = 0;
  for (auto& v : hm.values.data) {
    v /= 3.0f;
    if (v >= kHeatmapActivated) ++hm.object_area;
  }
  return hm;
}

}  // namespace daf
