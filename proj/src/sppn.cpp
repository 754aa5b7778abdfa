#include "daf/sppn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace daf {

std::vector<ProposalBox> decode_all(const AnchorSet& anchors, const std::array<Tensor, 3>& score_maps,
                                    const std::array<Tensor, 3>& offset_maps) {
  std::vector<ProposalBox> boxes;
  boxes.reserve(anchors.anchors.size());
  const float s = static_cast<float>(anchors.image_size);
  for (const Anchor& a : anchors.anchors) {
    const int l = a.level - 1;
    const Tensor& sm = score_maps[l];
    const Tensor& om = offset_maps[l];
    const float dx = om.at3(a.cell_y, a.cell_x, 0);
    const float dy = om.at3(a.cell_y, a.cell_x, 1);
    const float dw = om.at3(a.cell_y, a.cell_x, 2);
    const float dh = om.at3(a.cell_y, a.cell_x, 3);
    const auto c = decode_box<float>(a, dx, dy, dw, dh, s);
    ProposalBox b;
    b.x0 = c[0];
    b.y0 = c[1];
    b.x1 = c[2];
    b.y1 = c[3];
    b.score = sm.at3(a.cell_y, a.cell_x, 0);
    b.level = a.level;
    boxes.push_back(b);
  }
  return boxes;
}

std::vector<ProposalBox> filter_positives(const std::vector<ProposalBox>& boxes,
                                          const LocationHeatmap& heatmap) {
  const int s = heatmap.values.extent(0);
  std::vector<ProposalBox> kept;
  for (const ProposalBox& b : boxes) {
    int cx = static_cast<int>(std::floor((b.x0 + b.x1) * 0.5f));
    int cy = static_cast<int>(std::floor((b.y0 + b.y1) * 0.5f));
    cx = std::clamp(cx, 0, s - 1);
    cy = std::clamp(cy, 0, s - 1);
    if (heatmap.values.at2(cy, cx) >= kHeatmapActivated) kept.push_back(b);
  }
  return kept;
}

std::vector<ProposalBox> select_top(const std::vector<ProposalBox>& survivors,
                                    const std::vector<ProposalBox>& all_boxes, int m) {
  if (m < 1) throw std::invalid_argument("select_top needs m >= 1");
  if (all_boxes.empty()) throw std::invalid_argument("select_top: no proposals to select from");
  if (static_cast<int>(all_boxes.size()) < m)
    throw std::invalid_argument("select_top: only " + std::to_string(all_boxes.size()) +
                                " proposals for m=" + std::to_string(m));
  std::vector<ProposalBox> out(survivors.begin(),
                               survivors.begin() + std::min<std::size_t>(survivors.size(), m));
  if (static_cast<int>(out.size()) < m) {
    auto is_taken = [&](const ProposalBox& b) {
      for (const ProposalBox& t : out)
        if (t.x0 == b.x0 && t.y0 == b.y0 && t.x1 == b.x1 && t.y1 == b.y1 && t.level == b.level &&
            t.score == b.score)
          return true;
      return false;
    };
    std::vector<ProposalBox> rest = all_boxes;
    sort_by_score(rest);
    for (const ProposalBox& b : rest) {
      if (static_cast<int>(out.size()) == m) break;
      if (!is_taken(b)) out.push_back(b);
    }
  }
  return out;
}

RegionClass classify_region_pixel(const std::vector<ProposalBox>& boxes, int k, int x, int y) {
  const float px = static_cast<float>(x) + 0.5f;
  const float py = static_cast<float>(y) + 0.5f;
  auto inside = [&](const ProposalBox& b) { return px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1; };
  if (inside(boxes[k])) return RegionClass::Keep;
  for (int i = 0; i < static_cast<int>(boxes.size()); ++i) {
    if (i != k && inside(boxes[i])) return RegionClass::Noise;
  }
  return RegionClass::Blur;
}

Tensor gaussian_blur(const Tensor& image, float sigma) {
  if (image.rank() != 3) throw std::invalid_argument("gaussian_blur expects [h,w,c]");
  if (sigma <= 0.0f) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i / static_cast<double>(sigma)) * (i / static_cast<double>(sigma)));
    kernel[i + radius] = static_cast<float>(v);
    ksum += v;
  }
  for (auto& v : kernel) v = static_cast<float>(v / ksum);

  const int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  Tensor horiz(image.shape);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int jj = std::clamp(j + t, 0, w - 1);
          acc += kernel[t + radius] * image.at3(i, jj, ch);
        }
        horiz.at3(i, j, ch) = static_cast<float>(acc);
      }
    }
  }
  Tensor out(image.shape);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int ii = std::clamp(i + t, 0, h - 1);
          acc += kernel[t + radius] * horiz.at3(ii, j, ch);
        }
        out.at3(i, j, ch) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor preprocess_region(const Tensor& image, const std::vector<ProposalBox>& boxes, int k,
                         float blur_sigma, float noise_std, std::uint64_t seed) {
  if (image.rank() != 3) throw std::invalid_argument("preprocess_region expects [h,w,c]");
  if (k < 0 || k >= static_cast<int>(boxes.size()))
    throw std::invalid_argument("preprocess_region: box index " + std::to_string(k) + " out of range");
  const int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  const Tensor blurred = gaussian_blur(image, blur_sigma);
  Rng rng(Rng::mix(seed, 0x7265670Aull));
  Tensor out(image.shape);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      switch (classify_region_pixel(boxes, k, x, y)) {
        case RegionClass::Keep:
          for (int ch = 0; ch < c; ++ch) out.at3(y, x, ch) = image.at3(y, x, ch);
          break;
        case RegionClass::Noise:
          for (int ch = 0; ch < c; ++ch) {
            const float v = image.at3(y, x, ch) + noise_std * static_cast<float>(rng.normal());
            out.at3(y, x, ch) = std::clamp(v, 0.0f, 1.0f);
          }
          break;
        case RegionClass::Blur:
          for (int ch = 0; ch < c; ++ch) out.at3(y, x, ch) = std::clamp(blurred.at3(y, x, ch), 0.0f, 1.0f);
          break;
      }
    }
  }
  return out;
}

Tensor saliency_mask(const std::vector<ProposalBox>& boxes, int s) {
  Tensor mask = Tensor::zeros(Shape{s, s});
  for (const ProposalBox& b : boxes) {
    for (int y = 0; y < s; ++y) {
      const float py = static_cast<float>(y) + 0.5f;
      if (py < b.y0 || py >= b.y1) continue;
      for (int x = 0; x < s; ++x) {
        const float px = static_cast<float>(x) + 0.5f;
        if (px >= b.x0 && px < b.x1) mask.at2(y, x) = 1.0f;
      }
    }
  }
  return mask;
}

}  // namespace daf
