#pragma once

#include <string>

#include "daf/params.hpp"
#include "daf/tape.hpp"

namespace daf {

/// Class score fusion: a learned linear map from the concatenated student and
/// teacher logits to final logits. Initialized to the elementwise mean of the
/// two vectors, so at step 0 the fused prediction is exactly the average
/// ensemble.
template <typename T>
void init_csf_params(ParamStoreT<T>& store, int n_class, const std::string& prefix = "csf") {
  TensorT<T> w = TensorT<T>::zeros(Shape{n_class, 2 * n_class});
  for (int i = 0; i < n_class; ++i) {
    w.at2(i, i) = T(0.5);
    w.at2(i, n_class + i) = T(0.5);
  }
  store.create(prefix + "/weight", std::move(w));
  store.create(prefix + "/bias", TensorT<T>::zeros(Shape{n_class}));
}

template <typename T>
typename TapeT<T>::Var fuse_scores(TapeT<T>& tape, typename TapeT<T>::Var student_logits,
                                   typename TapeT<T>::Var teacher_logits, ParamStoreT<T>& store,
                                   const std::string& prefix = "csf") {
  const TensorT<T>& s = tape.value(student_logits);
  const TensorT<T>& t = tape.value(teacher_logits);
  if (s.rank() != 1 || !s.same_shape(t))
    throw std::invalid_argument("fuse_scores needs two equal-length logit vectors, got " +
                                shape_to_string(s.shape) + " and " + shape_to_string(t.shape));
  auto joint = tape.concat({student_logits, teacher_logits});
  return tape.add(tape.matvec(tape.param(store.at(prefix + "/weight")), joint),
                  tape.param(store.at(prefix + "/bias")));
}

/// Parameter-free fallback fusion: the plain elementwise mean.
template <typename T>
typename TapeT<T>::Var fuse_scores_mean(TapeT<T>& tape, typename TapeT<T>::Var student_logits,
                                        typename TapeT<T>::Var teacher_logits) {
  const TensorT<T>& s = tape.value(student_logits);
  const TensorT<T>& t = tape.value(teacher_logits);
  if (s.rank() != 1 || !s.same_shape(t))
    throw std::invalid_argument("fuse_scores_mean needs two equal-length logit vectors");
  return tape.scale(tape.add(student_logits, teacher_logits), T(0.5));
}

}  // namespace daf
