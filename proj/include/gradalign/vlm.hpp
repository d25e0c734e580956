// SPDX-License-Identifier: Apache-2.0
//
// A small frozen vision-language model. The text encoder maps
// (context vectors, class token) to a unit feature through
//   w = normalize(tanh(W * flatten(context, class_token) + b)),
// and classification is a temperature softmax over cosine similarities
// between class features and an image feature.

#pragma once

#include <cstdint>
#include <string>

#include "gradalign/numerics.hpp"

namespace gradalign {

struct VlmDims {
  int context_len = 16;  // M
  int hand_len = 4;      // tokens in the hand-crafted prompt, <= M
  int tok_dim = 8;
  int feat_dim = 32;
  int num_classes = 10;  // K
  double tau = 0.01;
  std::uint64_t seed = 1;

  int input_dim() const { return (context_len + 1) * tok_dim; }
  int prompt_size() const { return context_len * tok_dim; }

  void validate() const;
};

/// Learnable context vectors, one row per context token.
struct PromptState {
  RowMatrix v;

  Eigen::Map<const Vector> flat() const { return {v.data(), v.size()}; }
  Eigen::Map<Vector> flat() { return {v.data(), v.size()}; }
};

/// Cosine classifier over image features, one weight row per class.
struct CosineClassifier {
  RowMatrix weights;

  Eigen::Map<const Vector> flat() const { return {weights.data(), weights.size()}; }
  Eigen::Map<Vector> flat() { return {weights.data(), weights.size()}; }
};

class FrozenVLM {
 public:
  FrozenVLM(const VlmDims& dims, Matrix enc_weights, Vector enc_bias, RowMatrix class_tokens,
            RowMatrix hand_prompt);

  /// Draws every frozen parameter from RngStream(dims.seed): encoder weights
  /// (row-major) and bias ~ N(0, 1/fan_in), then class tokens and hand
  /// prompt ~ N(0, 1).
  static FrozenVLM random(const VlmDims& dims);

  const VlmDims& dims() const { return dims_; }
  double tau() const { return dims_.tau; }
  const Matrix& enc_weights() const { return enc_weights_; }
  const Vector& enc_bias() const { return enc_bias_; }
  const RowMatrix& class_tokens() const { return class_tokens_; }
  const RowMatrix& hand_prompt() const { return hand_prompt_; }

  /// Class features under the zero-padded hand-crafted prompt (rows).
  const RowMatrix& teacher_features() const { return teacher_features_; }

 private:
  VlmDims dims_;
  Matrix enc_weights_;
  Vector enc_bias_;
  RowMatrix class_tokens_;
  RowMatrix hand_prompt_;
  RowMatrix teacher_features_;
};

/// Zero rows followed by the hand-crafted prompt verbatim.
PromptState init_prompt(const FrozenVLM& vlm);

/// tanh(W * flatten(context, class_token) + b), before normalization.
Vector encoder_activation(const FrozenVLM& vlm, const RowMatrix& context, const Eigen::Ref<const Vector>& class_token);

Vector encode_text(const FrozenVLM& vlm, const RowMatrix& context, const Eigen::Ref<const Vector>& class_token);

/// Row i is the text feature of class i.
RowMatrix class_features(const FrozenVLM& vlm, const PromptState& prompt);

/// softmax_i(cos(feature_i, x) / tau) for a given set of class features.
ProbVector probs_from_features(const RowMatrix& features, const Eigen::Ref<const Vector>& x, double tau);

ProbVector predict_probs(const FrozenVLM& vlm, const PromptState& prompt, const Eigen::Ref<const Vector>& x);

ProbVector zero_shot_probs(const FrozenVLM& vlm, const Eigen::Ref<const Vector>& x);

ProbVector cosine_classifier_probs(const CosineClassifier& cls, const Eigen::Ref<const Vector>& x, double tau);

/// Seeded N(0, 1/feat_dim) weights.
CosineClassifier init_cosine_classifier(const FrozenVLM& vlm, std::uint64_t seed);

/// First index of the maximum entry.
int argmax(const Eigen::Ref<const Vector>& v);

std::string vlm_to_json(const FrozenVLM& vlm);
FrozenVLM vlm_from_json(const std::string& text);

}  // namespace gradalign
