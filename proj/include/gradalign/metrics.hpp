// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

namespace gradalign {

/// 2ab / (a + b); 0 when a + b == 0.
double harmonic_mean(double a, double b);

/// Among indices where pred_a is wrong and pred_b is right, the fraction
/// where pred_zs is also wrong. nullopt when that failure set is empty.
std::optional<double> failure_overlap(std::span<const int> pred_a, std::span<const int> pred_b,
                                      std::span<const int> pred_zs, std::span<const int> truth);

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sample std / sqrt(n); 0 for n < 2
  std::size_t n = 0;
};

MeanCi mean_ci95(std::span<const double> values);

/// One-sided sign test: P(Binomial(n, 1/2) >= wins) with ties removed.
double sign_test_p(std::size_t wins, std::size_t losses);

}  // namespace gradalign
