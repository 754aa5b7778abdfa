#include "daf/boxes.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace daf {

float box_intersection(const ProposalBox& a, const ProposalBox& b) {
  const float ix = std::max(0.0f, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const float iy = std::max(0.0f, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  return ix * iy;
}

float box_iou(const ProposalBox& a, const ProposalBox& b) {
  const float inter = box_intersection(a, b);
  const float uni = a.area() + b.area() - inter;
  return uni > 0.0f ? inter / uni : 0.0f;
}

bool box_tiebreak_less(const ProposalBox& a, const ProposalBox& b) {
  return std::tie(a.level, a.y0, a.x0, a.y1, a.x1) < std::tie(b.level, b.y0, b.x0, b.y1, b.x1);
}

void sort_by_score(std::vector<ProposalBox>& boxes) {
  std::sort(boxes.begin(), boxes.end(), [](const ProposalBox& a, const ProposalBox& b) {
    if (a.score != b.score) return a.score > b.score;
    return box_tiebreak_less(a, b);
  });
}

std::vector<ProposalBox> nms(std::vector<ProposalBox> boxes, float iou_threshold) {
  if (!(iou_threshold > 0.0f && iou_threshold < 1.0f))
    throw std::invalid_argument("nms threshold must lie in (0,1), got " + std::to_string(iou_threshold));
  sort_by_score(boxes);
  std::vector<ProposalBox> kept;
  for (const ProposalBox& cand : boxes) {
    bool suppressed = false;
    for (const ProposalBox& k : kept) {
      if (box_iou(cand, k) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace daf
