#pragma once

#include <vector>

#include "daf/tensor.hpp"

namespace daf {

/// Scored axis-aligned rectangle in input-image pixel coordinates, with the
/// pyramid level (1-based) it was proposed from.
struct ProposalBox {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float score = 0;
  int level = 0;

  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
  float area() const { return width() * height(); }
};

/// Overlap area of two boxes (0 when disjoint).
float box_intersection(const ProposalBox& a, const ProposalBox& b);

/// Intersection over union.
float box_iou(const ProposalBox& a, const ProposalBox& b);

/// Deterministic ordering used to break score ties everywhere: lower pyramid
/// level first, then (y0, x0, y1, x1) lexicographically.
bool box_tiebreak_less(const ProposalBox& a, const ProposalBox& b);

/// Sort by descending score, ties broken by box_tiebreak_less.
void sort_by_score(std::vector<ProposalBox>& boxes);

/// Greedy non-maximum suppression: repeatedly keep the highest-scored box and
/// drop every remaining box whose IoU with any kept box exceeds the
/// threshold. Output is in keep order (descending score).
std::vector<ProposalBox> nms(std::vector<ProposalBox> boxes, float iou_threshold);

}  // namespace daf
