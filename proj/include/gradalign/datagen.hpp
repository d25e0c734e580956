// SPDX-License-Identifier: Apache-2.0
//
// Synthetic few-shot domains. Classes are Gaussian clusters on the unit
// sphere around per-class prototypes; prototypes start near the teacher's
// class features and a rotation + shift moves the downstream domain away.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gradalign/losses.hpp"

namespace gradalign {

inline constexpr int kTestPerClass = 100;

struct DomainSpec {
  int num_classes = 10;
  int feat_dim = 32;
  double gap_rotation_deg = 0.0;
  double gap_shift = 0.0;
  double noise_sigma = 0.1;       // per-coordinate image noise
  double prototype_sigma = 0.05;  // per-coordinate jitter of prototypes around teacher features
  std::uint64_t seed = 7;

  void validate() const;
};

struct Episode {
  Batch train;
  Batch test;
  std::vector<int> base_classes;
  std::vector<int> new_classes;
  int shots = 0;
};

/// Row i = normalize(teacher_feature_i + N(0, prototype_sigma^2)).
RowMatrix teacher_aligned_prototypes(const FrozenVLM& vlm, const DomainSpec& spec);

/// Rotates each prototype by gap_rotation_deg inside its own seeded random
/// 2-plane, adds gap_shift along one seeded direction, and renormalizes.
/// Zero gap parameters return the input unchanged.
RowMatrix shift_domain(const RowMatrix& prototypes, const DomainSpec& spec);

/// Downstream prototypes: teacher-aligned prototypes moved by the spec's gap.
RowMatrix downstream_prototypes(const FrozenVLM& vlm, const DomainSpec& spec);

/// Unit-norm samples normalize(prototype + N(0, sigma^2)), `per_class` per
/// listed class, grouped by class in the listed order.
Batch sample_images(const RowMatrix& prototypes, const std::vector<int>& classes, int per_class, double sigma,
                    RngStream& rng);

/// Seeded shuffle of 0..K-1; the first ceil(K/2) (sorted) are base classes.
std::pair<std::vector<int>, std::vector<int>> split_base_new(int num_classes, std::uint64_t seed);

/// Train: `shots` samples per base class. Test: kTestPerClass samples for
/// every class. The base/new split follows spec.seed; train and test draw
/// from disjoint substreams of `seed`.
Episode sample_episode(const RowMatrix& prototypes, const DomainSpec& spec, int shots, std::uint64_t seed);

/// Test split only, same stream as sample_episode(..., seed).test.
Batch sample_test_split(const RowMatrix& prototypes, const DomainSpec& spec, std::uint64_t seed);

}  // namespace gradalign
