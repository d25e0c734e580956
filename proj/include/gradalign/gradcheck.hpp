// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference self-check of every analytic gradient on randomized
// small models.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradalign/numerics.hpp"

namespace gradalign {

struct GradCheckCase {
  std::string name;  // "ce", "kl", "l2reg", "classifier_ce", "classifier_kl"
  int instance = 0;
  double rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double tolerance = 1e-6;

  bool all_pass() const;
  double max_rel_error() const;
};

/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
double relative_error(const Eigen::Ref<const Vector>& analytic, const Eigen::Ref<const Vector>& numeric);

/// `instances` random models (M <= 4, tok_dim <= 8, feat_dim <= 16, K <= 5)
/// with central differences at h = 1e-5 * (1 + ||v||_inf).
/// `fault` adds fault * ||g|| to the first analytic coordinate of every
/// case; tests use it to confirm that corruption is caught.
GradCheckReport run_gradcheck(std::uint64_t seed, int instances, double tolerance, double fault = 0.0);

}  // namespace gradalign
