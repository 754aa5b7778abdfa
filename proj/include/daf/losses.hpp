#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "daf/sppn.hpp"
#include "daf/tape.hpp"

namespace daf {

/// Weights of every loss term. The three alphas of the formulation are
/// distinct knobs here: the total-loss alpha, the pairwise-overlap alpha and
/// the hint alpha are independent.
struct LossWeights {
  double alpha = 1.0;       // student total weight
  double beta = 1.0;        // teacher total weight
  double gamma = 1.0;       // fusion total weight
  double alpha_iou = 1.0;   // pairwise overlap penalty
  double alpha_hint = 1.0;  // hint regression weight
  double beta_soft = 0.5;   // soft-target weight
  double margin = 0.1;      // ranking hinge margin
  double temperature = 4.0; // soft-target temperature
  int n_parts = 4;          // expected parts per object for the area prior
};

struct LossTerms {
  double ranking = 0, area = 0, iou = 0, hint = 0, pred = 0, con = 0;
  double teacher_pred = 0, csf_pred = 0;
};

struct LossReport {
  LossTerms terms;
  double student_total = 0, teacher_total = 0, csf_total = 0, grand_total = 0;
};

/// Assemble the per-net totals:
///   student = ranking + area + iou + hint + pred + con
///   teacher = teacher_pred,  csf = csf_pred
///   grand   = alpha*student + beta*teacher + gamma*csf
inline LossReport total_losses(const LossTerms& t, const LossWeights& w) {
  LossReport r;
  r.terms = t;
  r.student_total = t.ranking + t.area + t.iou + t.hint + t.pred + t.con;
  r.teacher_total = t.teacher_pred;
  r.csf_total = t.csf_pred;
  r.grand_total = w.alpha * r.student_total + w.beta * r.teacher_total + w.gamma * r.csf_total;
  return r;
}

/// Softmax probabilities, computed in double for stability.
inline std::vector<double> softmax_probs(const std::vector<double>& logits, double temperature = 1.0) {
  std::vector<double> p(logits.size());
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double se = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / temperature);
    se += p[i];
  }
  for (auto& v : p) v /= se;
  return p;
}

/// Pairwise-overlap penalty over unordered box pairs:
///   sum_{i<j} alpha * |B_i n B_j| / (|B_i| + |B_j|)
/// The soft rectangle intersection max(0, min(x1,x1')-max(x0,x0')) keeps it
/// differentiable in the coordinates, with zero subgradient at the hinge.
template <typename T>
typename TapeT<T>::Var r_iou_loss(TapeT<T>& tape, std::span<const BoxVarT<T>> boxes, T alpha_iou) {
  using Var = typename TapeT<T>::Var;
  if (boxes.empty()) throw std::invalid_argument("r_iou_loss needs at least one box");
  Var total = tape.scalar(T(0));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const auto& a = boxes[i];
      const auto& b = boxes[j];
      Var ix = tape.relu(tape.sub(tape.min2(a.x1, b.x1), tape.max2(a.x0, b.x0)));
      Var iy = tape.relu(tape.sub(tape.min2(a.y1, b.y1), tape.max2(a.y0, b.y0)));
      Var inter = tape.mul(ix, iy);
      Var area_a = tape.mul(tape.sub(a.x1, a.x0), tape.sub(a.y1, a.y0));
      Var area_b = tape.mul(tape.sub(b.x1, b.x0), tape.sub(b.y1, b.y0));
      total = tape.add(total, tape.div(inter, tape.add(area_a, area_b)));
    }
  }
  return tape.scale(total, alpha_iou);
}

/// Area prior: each box should cover about 1/n_parts of the object,
///   (1/M) * sum_i |area(B_i) - S_obj/n_parts| / max(S_obj, 1)
template <typename T>
typename TapeT<T>::Var r_area_loss(TapeT<T>& tape, std::span<const BoxVarT<T>> boxes, T object_area,
                                   int n_parts) {
  using Var = typename TapeT<T>::Var;
  if (boxes.empty()) throw std::invalid_argument("r_area_loss needs at least one box");
  if (n_parts < 1) throw std::invalid_argument("r_area_loss needs n_parts >= 1");
  if (object_area < T(0)) throw std::invalid_argument("r_area_loss needs a non-negative object area");
  const T target = object_area / static_cast<T>(n_parts);
  const T denom = std::max(object_area, T(1));
  Var total = tape.scalar(T(0));
  for (const auto& b : boxes) {
    Var area = tape.mul(tape.sub(b.x1, b.x0), tape.sub(b.y1, b.y0));
    total = tape.add(total, tape.abs_(tape.add_const(area, -target)));
  }
  return tape.scale(total, T(1) / (denom * static_cast<T>(boxes.size())));
}

/// Count of discordant pairs: confidence says j outranks i but the proposal
/// score disagrees (ties in score count as wrong).
inline int ranking_wrong_pairs(const std::vector<double>& scores, const std::vector<double>& confidences) {
  int wrong = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (confidences[i] < confidences[j] && scores[i] >= scores[j]) ++wrong;
    }
  }
  return wrong;
}

inline int ranking_pair_count(const std::vector<double>& confidences) {
  int pairs = 0;
  for (std::size_t i = 0; i < confidences.size(); ++i)
    for (std::size_t j = 0; j < confidences.size(); ++j)
      if (confidences[i] < confidences[j]) ++pairs;
  return pairs;
}

/// Differentiable ranking surrogate: over every ordered pair whose
/// confidences say c_i < c_j, penalize max(0, s_i - s_j + margin), averaged
/// over the pair count. At margin 0 the hinge's support recovers the 0/1
/// wrong-pair indicator.
template <typename T>
typename TapeT<T>::Var ranking_loss(TapeT<T>& tape, std::span<const typename TapeT<T>::Var> scores,
                                    const std::vector<double>& confidences, T margin) {
  using Var = typename TapeT<T>::Var;
  if (scores.size() < 2) throw std::invalid_argument("ranking_loss needs at least two regions");
  if (scores.size() != confidences.size())
    throw std::invalid_argument("ranking_loss: score/confidence count mismatch");
  const int pairs = ranking_pair_count(confidences);
  if (pairs == 0) return tape.scalar(T(0));
  Var total = tape.scalar(T(0));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (confidences[i] < confidences[j]) {
        total = tape.add(total, tape.relu(tape.add_const(tape.sub(scores[i], scores[j]), margin)));
      }
    }
  }
  return tape.scale(total, T(1) / static_cast<T>(pairs));
}

/// Cross-entropy of the averaged per-region logits against the true class.
template <typename T>
typename TapeT<T>::Var concentrate_loss(TapeT<T>& tape,
                                        std::span<const typename TapeT<T>::Var> region_logits,
                                        int true_class) {
  using Var = typename TapeT<T>::Var;
  if (region_logits.empty()) throw std::invalid_argument("concentrate_loss needs at least one region");
  Var mean = region_logits[0];
  for (std::size_t i = 1; i < region_logits.size(); ++i) mean = tape.add(mean, region_logits[i]);
  mean = tape.scale(mean, T(1) / static_cast<T>(region_logits.size()));
  return tape.softmax_xent(mean, true_class);
}

/// Distillation loss: a squared-error hint term between the teacher hint
/// layer and the regressed student guide layer, plus a soft-target
/// cross-entropy term against the temperature-softened teacher distribution:
///   (alpha_hint/2) * ||f_hint - r(f_guide)||^2
///     + beta_soft * CE(softmax(student), soften(teacher))
/// The regressor is a 1x1 convolution mapping guide channels to hint
/// channels. The teacher side enters as plain values (no gradient to it).
template <typename T>
typename TapeT<T>::Var hint_loss(TapeT<T>& tape, typename TapeT<T>::Var f_hint,
                                 typename TapeT<T>::Var f_guide, ParamT<T>& reg_kernel,
                                 ParamT<T>& reg_bias, const TensorT<T>& teacher_logits,
                                 typename TapeT<T>::Var student_logits, T alpha_hint, T beta_soft,
                                 T temperature) {
  using Var = typename TapeT<T>::Var;
  Var regressed = tape.bias_add(tape.conv2d(f_guide, tape.param(reg_kernel), 1, 0),
                                tape.param(reg_bias));
  const TensorT<T>& h = tape.value(f_hint);
  const TensorT<T>& r = tape.value(regressed);
  if (!h.same_shape(r))
    throw std::invalid_argument("hint layer " + shape_to_string(h.shape) +
                                " does not match regressed guide layer " + shape_to_string(r.shape));
  Var diff = tape.sub(f_hint, regressed);
  Var hint_term = tape.scale(tape.reduce_sum(tape.mul(diff, diff)), alpha_hint / T(2));

  std::vector<double> tl(teacher_logits.data.size());
  for (std::size_t i = 0; i < tl.size(); ++i) tl[i] = static_cast<double>(teacher_logits.data[i]);
  const std::vector<double> soft = softmax_probs(tl, static_cast<double>(temperature));
  TensorT<T> soft_t(teacher_logits.shape);
  for (std::size_t i = 0; i < soft.size(); ++i) soft_t.data[i] = static_cast<T>(soft[i]);
  Var soft_term = tape.scale(tape.softmax_xent_soft(student_logits, std::move(soft_t)), beta_soft);
  return tape.add(hint_term, soft_term);
}

}  // namespace daf
