// SPDX-License-Identifier: Apache-2.0
//
// Experiment protocols over the synthetic stack. Every protocol expands the
// config into independent runs, executes them on a worker pool, and returns
// rows sorted by (rule, lambda, alpha, shots, gap, seed) so the output does
// not depend on scheduling.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gradalign/config.hpp"
#include "gradalign/gradcheck.hpp"
#include "gradalign/metrics.hpp"

namespace gradalign {

struct ResultRow {
  std::string experiment;
  std::string rule;
  double lambda = 0.0;
  double alpha = 0.0;
  int shots = 0;
  std::uint64_t seed = 0;
  double acc_overall = 0.0;
  double acc_base = 0.0;
  double acc_new = 0.0;
  double harmonic_mean = 0.0;
  double acc_zero_shot = 0.0;
  double mean_late_angle = 0.0;
  double wallclock_ms = 0.0;
  double gap_rotation_deg = 0.0;  // domainshift only
  double gap_shift = 0.0;         // domainshift only
  std::string status = "ok";      // "ok" or the failure message
};

struct AggregateRow {
  std::string experiment;
  std::string rule;
  double lambda = 0.0;
  double alpha = 0.0;
  int shots = 0;
  double gap_rotation_deg = 0.0;
  double gap_shift = 0.0;
  MeanCi acc_overall, acc_base, acc_new, harmonic_mean, acc_zero_shot, mean_late_angle;
};

struct TraceRow {
  std::string rule;
  double lambda = 0.0;
  int shots = 0;
  std::uint64_t seed = 0;
  StepTrace step;
};

/// Fraction of PROGRAD-only failures (wrong where CE is right) that the
/// zero-shot teacher also gets wrong, per (shots, seed, lambda).
struct OverlapRow {
  double lambda = 0.0;
  int shots = 0;
  std::uint64_t seed = 0;
  std::optional<double> overlap;
  std::size_t failures = 0;
};

enum class Command { kFewShot, kBase2New, kDomainShift, kLambdaSweep, kAngles };

std::string_view to_string(Command command);

struct ExperimentOutput {
  Command command = Command::kFewShot;
  std::vector<ResultRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<TraceRow> trace;      // angles only
  std::vector<OverlapRow> overlap;  // fewshot / base2new when CE and PROGRAD both ran
  bool any_failure() const;
};

struct RunOptions {
  int threads = 1;
  bool timing = false;  // record wall-clock time; otherwise wallclock_ms = 0
};

ExperimentOutput run_fewshot(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutput run_base2new(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutput run_domainshift(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutput run_lambda_sweep(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutput run_angles(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentOutput run_command(Command command, const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Groups rows by everything but the seed and summarizes each metric with
/// mean_ci95. Failed rows are excluded.
std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

/// Strict weak order (rule, lambda, alpha, shots, gap, seed).
bool row_less(const ResultRow& a, const ResultRow& b);

}  // namespace gradalign
