// SPDX-License-Identifier: Apache-2.0
//
// Update-direction rules over a (task gradient, teacher gradient) pair.
//
// The prompt-aligned rule keeps the task gradient g_ce whenever it agrees
// with the teacher gradient g_kl (g_ce . g_kl >= 0). On conflict it removes a
// lambda-fraction of the component of g_ce along g_kl:
//
//   g_ce - lambda * (g_ce . g_kl / ||g_kl||^2) * g_kl
//
// so that for lambda = 1 the update never increases the teacher KL to first
// order.

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "gradalign/losses.hpp"

namespace gradalign {

/// Below this norm the teacher gradient carries no usable direction.
inline constexpr double kDegenerateNorm = 1e-12;

enum class RuleTag { kCe, kProGrad, kKd, kGm, kL2Reg };

std::string_view to_string(RuleTag tag);
RuleTag rule_tag_from_string(std::string_view name);

struct UpdateRule {
  RuleTag tag = RuleTag::kCe;
  double lambda = 1.0;  // kProGrad only
  double alpha = 0.0;   // kL2Reg only

  static UpdateRule ce() { return {RuleTag::kCe, 0.0, 0.0}; }
  static UpdateRule prograd(double lambda) { return {RuleTag::kProGrad, lambda, 0.0}; }
  static UpdateRule kd() { return {RuleTag::kKd, 0.0, 0.0}; }
  static UpdateRule gm() { return {RuleTag::kGm, 0.0, 0.0}; }
  static UpdateRule l2reg(double alpha) { return {RuleTag::kL2Reg, 0.0, alpha}; }

  void validate() const;
};

enum class Branch { kAligned, kConflict, kPassthrough };

std::string_view to_string(Branch branch);
Branch branch_from_string(std::string_view name);

struct SurgeryOutcome {
  Vector direction;
  Branch branch = Branch::kAligned;
  double dot_ce_kl = 0.0;
  double angle_deg = 90.0;
};

/// ALIGNED when dot >= 0, PASSTHROUGH when dot < 0 but ||g_kl|| is
/// degenerate, CONFLICT otherwise.
Branch classify(double dot_ce_kl, double norm_kl);

/// Angle between g_ce and g_kl in degrees; 90 when either is exactly zero.
double trace_angle(const Eigen::Ref<const Vector>& g_ce, const Eigen::Ref<const Vector>& g_kl);

SurgeryOutcome prograd(const Eigen::Ref<const Vector>& g_ce, const Eigen::Ref<const Vector>& g_kl, double lambda);

Vector kd_grad(const GradPair& g);

/// Gradient matching with step-parity alternation: even steps follow g_ce,
/// odd steps follow g_kl, each projected off the other on conflict.
Vector gm_grad(const GradPair& g, std::size_t step_index);

SurgeryOutcome apply_rule(const UpdateRule& rule, const GradPair& g, const std::optional<Vector>& g_reg,
                          std::size_t step_index);

}  // namespace gradalign
