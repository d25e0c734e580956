// SPDX-License-Identifier: Apache-2.0
//
// Cross-entropy, KL-to-teacher and l2 prompt regularization, with analytic
// gradients. Batch losses are means over examples. The teacher distribution
// is a constant: no gradient flows through it.

#pragma once

#include <vector>

#include "gradalign/vlm.hpp"

namespace gradalign {

struct Batch {
  RowMatrix features;       // one image feature per row
  std::vector<int> labels;  // class index per row

  std::size_t size() const { return labels.size(); }
  void validate(int num_classes, int feat_dim) const;
};

struct GradPair {
  Vector g_ce;
  Vector g_kl;
};

/// -log p[y].
double ce_loss(const ProbVector& p, int y);

/// sum_i q_i log(q_i / p_i) with 0 log 0 = 0.
double kl_loss(const ProbVector& p, const ProbVector& p_zs);

double batch_ce_loss(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);
double batch_kl_loss(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);
double batch_ce_loss(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch);
double batch_kl_loss(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch);

/// Gradients with respect to the flattened context vectors (row-major).
Vector grad_ce(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);
Vector grad_kl(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);
GradPair grad_pair(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);

/// Gradient of the single summed objective L_ce + L_kl through one backward
/// pass with a combined upstream signal.
Vector grad_summed(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);

/// Gradients with respect to the flattened classifier weights (row-major).
/// The teacher is still the VLM's zero-shot prediction.
GradPair grad_pair(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch);

/// alpha * (v - v_zs) / ||v - v_zs||, the gradient of alpha * ||v - v_zs||;
/// zero at v == v_zs.
Vector grad_l2reg(const Eigen::Ref<const Vector>& params, const Eigen::Ref<const Vector>& params_zs, double alpha);

inline Vector grad_l2reg(const PromptState& prompt, const PromptState& prompt_zs, double alpha) {
  return grad_l2reg(prompt.flat(), prompt_zs.flat(), alpha);
}

/// Forward + backward on one minibatch: both gradients and both mean losses.
struct StepEval {
  GradPair grads;
  double loss_ce = 0.0;
  double loss_kl = 0.0;
};

StepEval evaluate_step(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch);
StepEval evaluate_step(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch);

}  // namespace gradalign
