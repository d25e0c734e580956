// SPDX-License-Identifier: Apache-2.0
//
// Plain SGD over the prompt (or a cosine classifier) with a constant
// warm-up epoch followed by cosine annealing. Each step computes both
// gradients on the same minibatch, turns them into one direction with the
// configured rule, and records the pair's geometry.

#pragma once

#include <cstdint>
#include <string>
#include <span>
#include <variant>
#include <vector>

#include "gradalign/datagen.hpp"
#include "gradalign/surgery.hpp"

namespace gradalign {

enum class Target { kPrompt, kCosineClassifier };

std::string_view to_string(Target target);
Target target_from_string(std::string_view name);

struct TrainConfig {
  UpdateRule rule;
  double lr0 = 0.002;
  double warmup_lr = 1e-5;
  int epochs = 50;
  int batch_size = 32;
  Target target = Target::kPrompt;
  std::uint64_t seed = 0;
  double max_grad_norm = 1e6;
  bool record_params = false;  // keep the parameter vector after every step

  void validate() const;
};

/// 50 epochs at 1 shot, 100 at 2-4 shots, 200 beyond.
int default_epochs(int shots);

using Parameters = std::variant<PromptState, CosineClassifier>;

Eigen::Map<const Vector> flat(const Parameters& params);

struct StepTrace {
  std::size_t step = 0;
  double lr = 0.0;
  double loss_ce = 0.0;
  double loss_kl = 0.0;
  double dot_ce_kl = 0.0;
  double angle_deg = 0.0;
  Branch branch = Branch::kAligned;

  bool operator==(const StepTrace&) const = default;
};

struct FinalMetrics {
  double acc_overall = 0.0;
  double acc_base = 0.0;
  double acc_new = 0.0;
  double harmonic_mean = 0.0;
  double acc_zero_shot = 0.0;

  bool operator==(const FinalMetrics&) const = default;
};

struct RunRecord {
  std::vector<StepTrace> steps;
  FinalMetrics final;
  std::vector<Vector> param_trace;  // only with TrainConfig::record_params

  /// Mean angle over the final quarter of steps (at least one step).
  double mean_late_angle() const;
};

struct TrainResult {
  Parameters params;
  RunRecord record;
};

/// warmup_lr during the first epoch, then lr0 * (1 + cos(pi * t / T)) / 2
/// with t counting post-warm-up steps and T the last such index.
double lr_schedule(const TrainConfig& cfg, std::size_t step, std::size_t total_steps, std::size_t steps_per_epoch);

/// Minibatch index lists for every step: a seeded permutation per epoch,
/// cut into ceil(n / batch) consecutive chunks.
std::vector<std::vector<int>> minibatch_plan(int train_size, int batch_size, int epochs, std::uint64_t seed);

Batch select(const Batch& batch, const std::vector<int>& rows);

Parameters initial_parameters(const FrozenVLM& vlm, const TrainConfig& cfg);

/// Per-example predicted class (argmax, ties to the lowest index).
std::vector<int> predict(const FrozenVLM& vlm, const Parameters& params, const Batch& batch);
std::vector<int> predict_zero_shot(const FrozenVLM& vlm, const Batch& batch);

double accuracy(std::span<const int> predictions, std::span<const int> labels);
double evaluate(const FrozenVLM& vlm, const Parameters& params, const Batch& batch);

FinalMetrics final_metrics(const FrozenVLM& vlm, const Parameters& params, const Episode& episode);

TrainResult train(const FrozenVLM& vlm, const Episode& episode, const TrainConfig& cfg);

std::string run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const std::string& text);

}  // namespace gradalign
