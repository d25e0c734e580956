// SPDX-License-Identifier: Apache-2.0
#include "gradalign/vlm.hpp"

#include <json.hpp>

#include <utility>

namespace gradalign {

void VlmDims::validate() const {
  if (context_len < 1 || tok_dim < 1 || feat_dim < 1) throw ConfigError("vlm: dimensions must be positive");
  if (num_classes < 1) throw ConfigError("vlm: need at least one class");
  if (hand_len < 0 || hand_len > context_len) throw ConfigError("vlm: hand_len must lie in [0, context_len]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("vlm: tau must be positive and finite");
}

FrozenVLM::FrozenVLM(const VlmDims& dims, Matrix enc_weights, Vector enc_bias, RowMatrix class_tokens,
                     RowMatrix hand_prompt)
    : dims_(dims),
      enc_weights_(std::move(enc_weights)),
      enc_bias_(std::move(enc_bias)),
      class_tokens_(std::move(class_tokens)),
      hand_prompt_(std::move(hand_prompt)) {
  dims_.validate();
  if (enc_weights_.rows() != dims_.feat_dim || enc_weights_.cols() != dims_.input_dim())
    throw DimensionError("vlm: enc_weights must be feat_dim x (M+1)*tok_dim");
  if (enc_bias_.size() != dims_.feat_dim) throw DimensionError("vlm: enc_bias must have feat_dim entries");
  if (class_tokens_.rows() != dims_.num_classes || class_tokens_.cols() != dims_.tok_dim)
    throw DimensionError("vlm: class_tokens must be K x tok_dim");
  if (hand_prompt_.rows() != dims_.hand_len || hand_prompt_.cols() != dims_.tok_dim)
    throw DimensionError("vlm: hand_prompt must be hand_len x tok_dim");
  if (!enc_weights_.allFinite() || !enc_bias_.allFinite() || !class_tokens_.allFinite() ||
      !hand_prompt_.allFinite())
    throw NumericalError("vlm: frozen parameters must be finite");
  teacher_features_ = class_features(*this, init_prompt(*this));
}

FrozenVLM FrozenVLM::random(const VlmDims& dims) {
  dims.validate();
  RngStream rng(dims.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.input_dim()));

  RowMatrix w(dims.feat_dim, dims.input_dim());
  Eigen::Map<Vector>(w.data(), w.size()) = sample_gaussian(rng, w.size(), 0.0, scale);
  Vector b = sample_gaussian(rng, dims.feat_dim, 0.0, scale);

  RowMatrix tokens(dims.num_classes, dims.tok_dim);
  Eigen::Map<Vector>(tokens.data(), tokens.size()) = sample_gaussian(rng, tokens.size(), 0.0, 1.0);

  RowMatrix hand(dims.hand_len, dims.tok_dim);
  if (hand.size() > 0)
    Eigen::Map<Vector>(hand.data(), hand.size()) = sample_gaussian(rng, hand.size(), 0.0, 1.0);

  return FrozenVLM(dims, Matrix(w), std::move(b), std::move(tokens), std::move(hand));
}

PromptState init_prompt(const FrozenVLM& vlm) {
  const auto& d = vlm.dims();
  PromptState p{RowMatrix::Zero(d.context_len, d.tok_dim)};
  p.v.bottomRows(d.hand_len) = vlm.hand_prompt();
  return p;
}

Vector encoder_activation(const FrozenVLM& vlm, const RowMatrix& context, const Eigen::Ref<const Vector>& class_token) {
  const auto& d = vlm.dims();
  if (context.rows() != d.context_len || context.cols() != d.tok_dim)
    throw DimensionError("encode_text: context must be M x tok_dim");
  if (class_token.size() != d.tok_dim) throw DimensionError("encode_text: class token must have tok_dim entries");

  const auto split = static_cast<Eigen::Index>(d.prompt_size());
  const Matrix& w = vlm.enc_weights();
  const Vector pre = w.leftCols(split) * Eigen::Map<const Vector>(context.data(), context.size()) +
                     w.rightCols(d.tok_dim) * class_token + vlm.enc_bias();
  return pre.array().tanh().matrix();
}

Vector encode_text(const FrozenVLM& vlm, const RowMatrix& context, const Eigen::Ref<const Vector>& class_token) {
  const Vector u = encoder_activation(vlm, context, class_token);
  const double n = u.norm();
  if (!(n > 1e-300)) throw DegenerateInputError("encode_text: encoder output is numerically zero");
  return u / n;
}

RowMatrix class_features(const FrozenVLM& vlm, const PromptState& prompt) {
  const auto& d = vlm.dims();
  RowMatrix out(d.num_classes, d.feat_dim);
  for (int i = 0; i < d.num_classes; ++i) {
    out.row(i) = encode_text(vlm, prompt.v, vlm.class_tokens().row(i).transpose()).transpose();
  }
  return out;
}

ProbVector probs_from_features(const RowMatrix& features, const Eigen::Ref<const Vector>& x, double tau) {
  if (x.size() != features.cols()) throw DimensionError("predict: image feature has wrong length");
  Vector sims(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) sims[i] = cosine_sim(features.row(i).transpose(), x);
  return softmax(sims, tau);
}

ProbVector predict_probs(const FrozenVLM& vlm, const PromptState& prompt, const Eigen::Ref<const Vector>& x) {
  return probs_from_features(class_features(vlm, prompt), x, vlm.tau());
}

ProbVector zero_shot_probs(const FrozenVLM& vlm, const Eigen::Ref<const Vector>& x) {
  return probs_from_features(vlm.teacher_features(), x, vlm.tau());
}

ProbVector cosine_classifier_probs(const CosineClassifier& cls, const Eigen::Ref<const Vector>& x, double tau) {
  for (Eigen::Index i = 0; i < cls.weights.rows(); ++i) {
    if (cls.weights.row(i).squaredNorm() == 0.0)
      throw DegenerateInputError("cosine classifier: zero weight row " + std::to_string(i));
  }
  return probs_from_features(cls.weights, x, tau);
}

CosineClassifier init_cosine_classifier(const FrozenVLM& vlm, std::uint64_t seed) {
  const auto& d = vlm.dims();
  RngStream rng(seed);
  CosineClassifier cls{RowMatrix(d.num_classes, d.feat_dim)};
  cls.flat() = sample_gaussian(rng, cls.weights.size(), 0.0, 1.0 / std::sqrt(static_cast<double>(d.feat_dim)));
  return cls;
}

int argmax(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

namespace {

template <typename M>
nlohmann::json flat_array(const M& m) {
  RowMatrix rm = m;
  return std::vector<double>(rm.data(), rm.data() + rm.size());
}

RowMatrix read_matrix(const nlohmann::json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  const auto values = j.at(key).get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw ConfigError(std::string("vlm json: '") + key + "' has wrong element count");
  RowMatrix out(rows, cols);
  std::copy(values.begin(), values.end(), out.data());
  return out;
}

}  // namespace

std::string vlm_to_json(const FrozenVLM& vlm) {
  const auto& d = vlm.dims();
  nlohmann::ordered_json j;
  j["schema"] = "frozen_vlm.v1";
  j["context_len"] = d.context_len;
  j["hand_len"] = d.hand_len;
  j["tok_dim"] = d.tok_dim;
  j["feat_dim"] = d.feat_dim;
  j["num_classes"] = d.num_classes;
  j["tau"] = d.tau;
  j["seed"] = d.seed;
  j["enc_weights"] = flat_array(vlm.enc_weights());
  j["enc_bias"] = flat_array(vlm.enc_bias());
  j["class_tokens"] = flat_array(vlm.class_tokens());
  j["hand_prompt"] = flat_array(vlm.hand_prompt());
  return j.dump(1);
}

FrozenVLM vlm_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    VlmDims d;
    d.context_len = j.at("context_len").get<int>();
    d.hand_len = j.at("hand_len").get<int>();
    d.tok_dim = j.at("tok_dim").get<int>();
    d.feat_dim = j.at("feat_dim").get<int>();
    d.num_classes = j.at("num_classes").get<int>();
    d.tau = j.at("tau").get<double>();
    d.seed = j.at("seed").get<std::uint64_t>();
    d.validate();
    RowMatrix w = read_matrix(j, "enc_weights", d.feat_dim, d.input_dim());
    Vector b = read_matrix(j, "enc_bias", d.feat_dim, 1);
    return FrozenVLM(d, Matrix(w), std::move(b), read_matrix(j, "class_tokens", d.num_classes, d.tok_dim),
                     read_matrix(j, "hand_prompt", d.hand_len, d.tok_dim));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("vlm json: ") + e.what());
  }
}

}  // namespace gradalign
