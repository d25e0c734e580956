// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradalign/datagen.hpp"
#include "gradalign/trainer.hpp"

namespace gradalign {

struct GapSpec {
  double rotation_deg = 0.0;
  double shift = 0.0;
};

struct TrainSettings {
  double lr0 = 0.002;
  double warmup_lr = 1e-5;
  int epochs = 0;  // 0: default_epochs(shots)
  int batch_size = 32;
  Target target = Target::kPrompt;
};

struct GradCheckSettings {
  int instances = 100;
  double tolerance = 1e-6;
};

/// One experiment document. Every field has a default, so an empty JSON
/// object is a valid config.
struct ExperimentConfig {
  std::string experiment = "default";
  VlmDims vlm;
  DomainSpec domain;
  std::vector<int> shots{1, 2, 4, 8, 16};
  std::vector<UpdateRule> rules{UpdateRule::ce(), UpdateRule::prograd(1.0)};
  std::vector<double> lambdas{0.0, 0.2, 0.4, 0.7, 0.9, 1.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t master_seed = 0;
  TrainSettings train;
  std::vector<GapSpec> gaps{{0.0, 0.0}, {30.0, 0.0}, {60.0, 0.0}, {90.0, 0.0}};
  GradCheckSettings gradcheck;
  std::string output_dir = "out";

  /// Mirrors vlm.num_classes / vlm.feat_dim into the domain and checks
  /// every list and range.
  void finalize();

  /// Seed for the episode and training of one (config, seed) run.
  std::uint64_t run_seed(std::uint64_t seed) const { return derive_seed(master_seed, seed); }

  TrainConfig train_config(const UpdateRule& rule, int shots, std::uint64_t seed) const;
};

/// Parses and finalizes; throws ConfigError on malformed documents or
/// unknown keys.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace gradalign
