// SPDX-License-Identifier: Apache-2.0
#include "gradalign/trainer.hpp"

#include <json.hpp>

#include <sstream>

#include "gradalign/metrics.hpp"

namespace gradalign {

namespace {

enum StreamTag : std::uint64_t {
  kMinibatchOrder = 31,
  kClassifierInit = 32,
};

Eigen::Map<Vector> flat_mut(Parameters& params) {
  return std::visit([](auto& p) { return p.flat(); }, params);
}

StepEval evaluate_params(const FrozenVLM& vlm, const Parameters& params, const Batch& batch) {
  return std::visit([&](const auto& p) { return evaluate_step(vlm, p, batch); }, params);
}

}  // namespace

std::string_view to_string(Target target) {
  return target == Target::kPrompt ? "prompt" : "cosine_classifier";
}

Target target_from_string(std::string_view name) {
  if (name == "prompt") return Target::kPrompt;
  if (name == "cosine_classifier") return Target::kCosineClassifier;
  throw ConfigError("unknown training target '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  rule.validate();
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("train: lr0 must be non-negative");
  if (!(warmup_lr >= 0.0) || !std::isfinite(warmup_lr)) throw ConfigError("train: warmup_lr must be non-negative");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(max_grad_norm > 0.0)) throw ConfigError("train: max_grad_norm must be positive");
}

int default_epochs(int shots) {
  if (shots <= 1) return 50;
  if (shots <= 4) return 100;
  return 200;
}

Eigen::Map<const Vector> flat(const Parameters& params) {
  return std::visit([](const auto& p) { return p.flat(); }, params);
}

double RunRecord::mean_late_angle() const {
  if (steps.empty()) return 0.0;
  const std::size_t late = std::max<std::size_t>(1, (steps.size() + 3) / 4);
  double total = 0.0;
  for (std::size_t i = steps.size() - late; i < steps.size(); ++i) total += steps[i].angle_deg;
  return total / static_cast<double>(late);
}

double lr_schedule(const TrainConfig& cfg, std::size_t step, std::size_t total_steps, std::size_t steps_per_epoch) {
  if (step >= total_steps) throw ParameterError("lr_schedule: step out of range");
  if (step < steps_per_epoch) return cfg.warmup_lr;
  const std::size_t t = step - steps_per_epoch;
  const std::size_t last = total_steps - steps_per_epoch - 1;
  const double frac = last == 0 ? 0.0 : static_cast<double>(t) / static_cast<double>(last);
  return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<std::vector<int>> minibatch_plan(int train_size, int batch_size, int epochs, std::uint64_t seed) {
  if (train_size < 1) throw ConfigError("minibatch_plan: empty training set");
  const int batch = std::min(batch_size, train_size);
  const int per_epoch = (train_size + batch - 1) / batch;
  RngStream rng(derive_seed(seed, kMinibatchOrder));
  std::vector<std::vector<int>> plan;
  plan.reserve(static_cast<std::size_t>(epochs) * static_cast<std::size_t>(per_epoch));
  for (int e = 0; e < epochs; ++e) {
    const std::vector<int> order = shuffled_indices(rng, train_size);
    for (int b = 0; b < per_epoch; ++b) {
      const auto begin = order.begin() + b * batch;
      const auto end = order.begin() + std::min(train_size, (b + 1) * batch);
      plan.emplace_back(begin, end);
    }
  }
  return plan;
}

Batch select(const Batch& batch, const std::vector<int>& rows) {
  Batch out{RowMatrix(static_cast<Eigen::Index>(rows.size()), batch.features.cols()), {}};
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = batch.features.row(rows[i]);
    out.labels.push_back(batch.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Parameters initial_parameters(const FrozenVLM& vlm, const TrainConfig& cfg) {
  if (cfg.target == Target::kPrompt) return init_prompt(vlm);
  return init_cosine_classifier(vlm, derive_seed(cfg.seed, kClassifierInit));
}

std::vector<int> predict(const FrozenVLM& vlm, const Parameters& params, const Batch& batch) {
  const RowMatrix features = std::holds_alternative<PromptState>(params)
                                 ? class_features(vlm, std::get<PromptState>(params))
                                 : std::get<CosineClassifier>(params).weights;
  std::vector<int> out;
  out.reserve(batch.size());
  for (Eigen::Index r = 0; r < batch.features.rows(); ++r)
    out.push_back(argmax(probs_from_features(features, batch.features.row(r).transpose(), vlm.tau())));
  return out;
}

std::vector<int> predict_zero_shot(const FrozenVLM& vlm, const Batch& batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (Eigen::Index r = 0; r < batch.features.rows(); ++r)
    out.push_back(argmax(zero_shot_probs(vlm, batch.features.row(r).transpose())));
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
  if (labels.empty()) throw ConfigError("accuracy: empty batch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const FrozenVLM& vlm, const Parameters& params, const Batch& batch) {
  return accuracy(predict(vlm, params, batch), batch.labels);
}

FinalMetrics final_metrics(const FrozenVLM& vlm, const Parameters& params, const Episode& episode) {
  const std::vector<int> pred = predict(vlm, params, episode.test);
  const auto& labels = episode.test.labels;
  std::vector<char> is_base(static_cast<std::size_t>(vlm.dims().num_classes), 0);
  for (int k : episode.base_classes) is_base[static_cast<std::size_t>(k)] = 1;

  std::size_t base_n = 0, base_ok = 0, new_n = 0, new_ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool ok = pred[i] == labels[i];
    if (is_base[static_cast<std::size_t>(labels[i])]) {
      ++base_n;
      base_ok += ok ? 1 : 0;
    } else {
      ++new_n;
      new_ok += ok ? 1 : 0;
    }
  }
  FinalMetrics m;
  m.acc_overall = accuracy(pred, labels);
  m.acc_base = base_n ? static_cast<double>(base_ok) / static_cast<double>(base_n) : 0.0;
  m.acc_new = new_n ? static_cast<double>(new_ok) / static_cast<double>(new_n) : 0.0;
  m.harmonic_mean = harmonic_mean(m.acc_base, m.acc_new);
  m.acc_zero_shot = accuracy(predict_zero_shot(vlm, episode.test), labels);
  return m;
}

TrainResult train(const FrozenVLM& vlm, const Episode& episode, const TrainConfig& cfg) {
  cfg.validate();
  const auto& d = vlm.dims();
  episode.train.validate(d.num_classes, d.feat_dim);

  TrainResult result{initial_parameters(vlm, cfg), {}};
  const Vector params_zs = flat(result.params);

  const int n = static_cast<int>(episode.train.size());
  const auto plan = minibatch_plan(n, cfg.batch_size, cfg.epochs, cfg.seed);
  const std::size_t per_epoch = plan.size() / static_cast<std::size_t>(cfg.epochs);
  result.record.steps.reserve(plan.size());

  for (std::size_t step = 0; step < plan.size(); ++step) {
    const Batch mb = select(episode.train, plan[step]);
    const StepEval eval = evaluate_params(vlm, result.params, mb);
    std::optional<Vector> g_reg;
    if (cfg.rule.tag == RuleTag::kL2Reg) g_reg = grad_l2reg(flat(result.params), params_zs, cfg.rule.alpha);
    const SurgeryOutcome outcome = apply_rule(cfg.rule, eval.grads, g_reg, step);

    const double norm = outcome.direction.norm();
    if (!std::isfinite(norm) || norm > cfg.max_grad_norm) {
      std::ostringstream msg;
      msg << "train: update direction diverged at step " << step << " (norm " << norm << ", loss_ce "
          << eval.loss_ce << ", loss_kl " << eval.loss_kl << ")";
      throw NumericalError(msg.str());
    }

    const double lr = lr_schedule(cfg, step, plan.size(), per_epoch);
    flat_mut(result.params) -= lr * outcome.direction;

    result.record.steps.push_back(
        {step, lr, eval.loss_ce, eval.loss_kl, outcome.dot_ce_kl, outcome.angle_deg, outcome.branch});
    if (cfg.record_params) result.record.param_trace.emplace_back(flat(result.params));
  }
  result.record.final = final_metrics(vlm, result.params, episode);
  return result;
}

std::string run_record_to_json(const RunRecord& record) {
  nlohmann::ordered_json j;
  j["schema"] = "run_record.v1";
  auto& steps = j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : record.steps) {
    nlohmann::ordered_json e;
    e["step"] = s.step;
    e["lr"] = s.lr;
    e["loss_ce"] = s.loss_ce;
    e["loss_kl"] = s.loss_kl;
    e["dot_ce_kl"] = s.dot_ce_kl;
    e["angle_deg"] = s.angle_deg;
    e["branch"] = to_string(s.branch);
    steps.push_back(std::move(e));
  }
  auto& f = j["final"];
  f["acc_overall"] = record.final.acc_overall;
  f["acc_base"] = record.final.acc_base;
  f["acc_new"] = record.final.acc_new;
  f["harmonic_mean"] = record.final.harmonic_mean;
  f["acc_zero_shot"] = record.final.acc_zero_shot;
  return j.dump();
}

RunRecord run_record_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema").get<std::string>() != "run_record.v1") throw ConfigError("run record: unknown schema");
    RunRecord r;
    for (const auto& e : j.at("steps")) {
      r.steps.push_back({e.at("step").get<std::size_t>(), e.at("lr").get<double>(), e.at("loss_ce").get<double>(),
                         e.at("loss_kl").get<double>(), e.at("dot_ce_kl").get<double>(),
                         e.at("angle_deg").get<double>(), branch_from_string(e.at("branch").get<std::string>())});
    }
    const auto& f = j.at("final");
    r.final = {f.at("acc_overall").get<double>(), f.at("acc_base").get<double>(), f.at("acc_new").get<double>(),
               f.at("harmonic_mean").get<double>(), f.at("acc_zero_shot").get<double>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run record: ") + e.what());
  }
}

}  // namespace gradalign
