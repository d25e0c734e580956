// SPDX-License-Identifier: Apache-2.0
#include "gradalign/losses.hpp"

#include <limits>

namespace gradalign {

void Batch::validate(int num_classes, int feat_dim) const {
  if (labels.empty()) throw ConfigError("batch: empty");
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw DimensionError("batch: feature and label counts differ");
  if (features.cols() != feat_dim) throw DimensionError("batch: features have wrong dimension");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw ConfigError("batch: label out of range");
}

double ce_loss(const ProbVector& p, int y) {
  if (y < 0 || y >= p.size()) throw DimensionError("ce_loss: label out of range");
  if (!(p[y] > 0.0)) throw InfiniteLossError("ce_loss: zero probability on the true class");
  return -std::log(p[y]);
}

double kl_loss(const ProbVector& p, const ProbVector& p_zs) {
  detail::require_same_size(p, p_zs, "kl_loss");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p_zs[i] == 0.0) continue;
    if (!(p[i] > 0.0)) throw InfiniteLossError("kl_loss: student assigns zero mass where teacher does not");
    total += p_zs[i] * std::log(p_zs[i] / p[i]);
  }
  return total;
}

namespace {

// Pre-normalization directions and their norms for each class row. In prompt
// mode these are the tanh outputs; in classifier mode the raw weights.
struct Directions {
  RowMatrix raw;
  Vector norms;
  RowMatrix unit;
};

Directions prompt_directions(const FrozenVLM& vlm, const PromptState& prompt) {
  const auto& d = vlm.dims();
  if (prompt.v.rows() != d.context_len || prompt.v.cols() != d.tok_dim)
    throw DimensionError("prompt: shape does not match vlm");
  Directions out{RowMatrix(d.num_classes, d.feat_dim), Vector(d.num_classes), RowMatrix(d.num_classes, d.feat_dim)};
  for (int i = 0; i < d.num_classes; ++i) {
    const Vector u = encoder_activation(vlm, prompt.v, vlm.class_tokens().row(i).transpose());
    const double n = u.norm();
    if (!(n > 1e-300)) throw DegenerateInputError("encode_text: encoder output is numerically zero");
    out.raw.row(i) = u.transpose();
    out.norms[i] = n;
    out.unit.row(i) = (u / n).transpose();
  }
  return out;
}

Directions classifier_directions(const CosineClassifier& cls) {
  Directions out{cls.weights, Vector(cls.weights.rows()), RowMatrix(cls.weights.rows(), cls.weights.cols())};
  for (Eigen::Index i = 0; i < cls.weights.rows(); ++i) {
    out.norms[i] = cls.weights.row(i).norm();
    if (out.norms[i] == 0.0) throw DegenerateInputError("cosine classifier: zero weight row");
    out.unit.row(i) = cls.weights.row(i) / out.norms[i];
  }
  return out;
}

struct Forward {
  RowMatrix student;  // N x K
  RowMatrix teacher;  // N x K
  RowMatrix unit_x;   // N x feat
};

Forward forward(const FrozenVLM& vlm, const RowMatrix& features, const Batch& batch) {
  const auto& d = vlm.dims();
  batch.validate(d.num_classes, d.feat_dim);
  const auto n = static_cast<Eigen::Index>(batch.size());
  Forward f{RowMatrix(n, d.num_classes), RowMatrix(n, d.num_classes), RowMatrix(n, d.feat_dim)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vector x = batch.features.row(r).transpose();
    const double nx = x.norm();
    if (nx == 0.0) throw DegenerateInputError("forward: zero image feature");
    f.student.row(r) = probs_from_features(features, x, vlm.tau()).transpose();
    f.teacher.row(r) = zero_shot_probs(vlm, x).transpose();
    f.unit_x.row(r) = x.transpose() / nx;
  }
  return f;
}

enum class Upstream { kCe, kKl, kSum };

// dL/ds for the mean loss, where s are the cosine similarities (N x K).
RowMatrix upstream(const Forward& f, const Batch& batch, Upstream which, double tau) {
  const auto n = f.student.rows();
  RowMatrix ce = f.student;
  for (Eigen::Index r = 0; r < n; ++r) ce(r, batch.labels[static_cast<std::size_t>(r)]) -= 1.0;
  const RowMatrix kl = f.student - f.teacher;
  const double scale = 1.0 / (tau * static_cast<double>(n));
  switch (which) {
    case Upstream::kCe:
      return ce * scale;
    case Upstream::kKl:
      return kl * scale;
    case Upstream::kSum:
      break;
  }
  return (ce + kl) * scale;
}

// Back through s_i = cos(raw_i, x): gradient with respect to raw rows.
RowMatrix through_cosine(const Directions& dirs, const RowMatrix& ds, const RowMatrix& unit_x) {
  const RowMatrix g_unit = ds.transpose() * unit_x;  // K x feat
  RowMatrix g_raw(g_unit.rows(), g_unit.cols());
  for (Eigen::Index i = 0; i < g_unit.rows(); ++i) {
    const double along = dirs.unit.row(i).dot(g_unit.row(i));
    g_raw.row(i) = (g_unit.row(i) - along * dirs.unit.row(i)) / dirs.norms[i];
  }
  return g_raw;
}

Vector prompt_backward(const FrozenVLM& vlm, const Directions& dirs, const RowMatrix& ds, const RowMatrix& unit_x) {
  const RowMatrix g_tanh = through_cosine(dirs, ds, unit_x);
  const RowMatrix g_pre = (g_tanh.array() * (1.0 - dirs.raw.array().square())).matrix();
  const Vector summed = g_pre.colwise().sum().transpose();
  return vlm.enc_weights().leftCols(vlm.dims().prompt_size()).transpose() * summed;
}

Vector classifier_backward(const Directions& dirs, const RowMatrix& ds, const RowMatrix& unit_x) {
  RowMatrix g = through_cosine(dirs, ds, unit_x);
  return Eigen::Map<const Vector>(g.data(), g.size());
}

double mean_ce(const Forward& f, const Batch& batch) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < f.student.rows(); ++r)
    total += ce_loss(f.student.row(r).transpose(), batch.labels[static_cast<std::size_t>(r)]);
  return total / static_cast<double>(f.student.rows());
}

double mean_kl(const Forward& f) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < f.student.rows(); ++r)
    total += kl_loss(f.student.row(r).transpose(), f.teacher.row(r).transpose());
  return total / static_cast<double>(f.student.rows());
}

}  // namespace

double batch_ce_loss(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  return mean_ce(forward(vlm, class_features(vlm, prompt), batch), batch);
}

double batch_kl_loss(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  return mean_kl(forward(vlm, class_features(vlm, prompt), batch));
}

double batch_ce_loss(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch) {
  return mean_ce(forward(vlm, classifier_directions(cls).unit, batch), batch);
}

double batch_kl_loss(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch) {
  return mean_kl(forward(vlm, classifier_directions(cls).unit, batch));
}

Vector grad_ce(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  const Directions dirs = prompt_directions(vlm, prompt);
  const Forward f = forward(vlm, dirs.unit, batch);
  return prompt_backward(vlm, dirs, upstream(f, batch, Upstream::kCe, vlm.tau()), f.unit_x);
}

Vector grad_kl(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  const Directions dirs = prompt_directions(vlm, prompt);
  const Forward f = forward(vlm, dirs.unit, batch);
  return prompt_backward(vlm, dirs, upstream(f, batch, Upstream::kKl, vlm.tau()), f.unit_x);
}

GradPair grad_pair(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  return evaluate_step(vlm, prompt, batch).grads;
}

Vector grad_summed(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  const Directions dirs = prompt_directions(vlm, prompt);
  const Forward f = forward(vlm, dirs.unit, batch);
  return prompt_backward(vlm, dirs, upstream(f, batch, Upstream::kSum, vlm.tau()), f.unit_x);
}

GradPair grad_pair(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch) {
  return evaluate_step(vlm, cls, batch).grads;
}

Vector grad_l2reg(const Eigen::Ref<const Vector>& params, const Eigen::Ref<const Vector>& params_zs, double alpha) {
  detail::require_same_size(params, params_zs, "grad_l2reg");
  if (!(alpha >= 0.0)) throw ParameterError("grad_l2reg: alpha must be non-negative");
  const Vector diff = params - params_zs;
  const double n = diff.norm();
  if (n == 0.0 || alpha == 0.0) return Vector::Zero(params.size());
  return alpha * diff / n;
}

StepEval evaluate_step(const FrozenVLM& vlm, const PromptState& prompt, const Batch& batch) {
  const Directions dirs = prompt_directions(vlm, prompt);
  const Forward f = forward(vlm, dirs.unit, batch);
  StepEval out;
  out.grads.g_ce = prompt_backward(vlm, dirs, upstream(f, batch, Upstream::kCe, vlm.tau()), f.unit_x);
  out.grads.g_kl = prompt_backward(vlm, dirs, upstream(f, batch, Upstream::kKl, vlm.tau()), f.unit_x);
  out.loss_ce = mean_ce(f, batch);
  out.loss_kl = mean_kl(f);
  return out;
}

StepEval evaluate_step(const FrozenVLM& vlm, const CosineClassifier& cls, const Batch& batch) {
  const Directions dirs = classifier_directions(cls);
  const Forward f = forward(vlm, dirs.unit, batch);
  StepEval out;
  out.grads.g_ce = classifier_backward(dirs, upstream(f, batch, Upstream::kCe, vlm.tau()), f.unit_x);
  out.grads.g_kl = classifier_backward(dirs, upstream(f, batch, Upstream::kKl, vlm.tau()), f.unit_x);
  out.loss_ce = mean_ce(f, batch);
  out.loss_kl = mean_kl(f);
  return out;
}

}  // namespace gradalign
