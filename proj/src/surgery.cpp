// SPDX-License-Identifier: Apache-2.0
#include "gradalign/surgery.hpp"

namespace gradalign {

std::string_view to_string(RuleTag tag) {
  switch (tag) {
    case RuleTag::kCe:
      return "CE";
    case RuleTag::kProGrad:
      return "PROGRAD";
    case RuleTag::kKd:
      return "KD";
    case RuleTag::kGm:
      return "GM";
    case RuleTag::kL2Reg:
      return "L2REG";
  }
  return "?";
}

RuleTag rule_tag_from_string(std::string_view name) {
  for (auto tag : {RuleTag::kCe, RuleTag::kProGrad, RuleTag::kKd, RuleTag::kGm, RuleTag::kL2Reg})
    if (to_string(tag) == name) return tag;
  throw ConfigError("unknown update rule '" + std::string(name) + "'");
}

void UpdateRule::validate() const {
  if (tag == RuleTag::kProGrad && !(lambda >= 0.0 && lambda <= 1.0))
    throw ParameterError("PROGRAD lambda must lie in [0, 1]");
  if (tag == RuleTag::kL2Reg && !(alpha >= 0.0 && std::isfinite(alpha)))
    throw ParameterError("L2REG alpha must be non-negative");
}

std::string_view to_string(Branch branch) {
  switch (branch) {
    case Branch::kAligned:
      return "ALIGNED";
    case Branch::kConflict:
      return "CONFLICT";
    case Branch::kPassthrough:
      return "PASSTHROUGH";
  }
  return "?";
}

Branch branch_from_string(std::string_view name) {
  for (auto b : {Branch::kAligned, Branch::kConflict, Branch::kPassthrough})
    if (to_string(b) == name) return b;
  throw ConfigError("unknown branch '" + std::string(name) + "'");
}

Branch classify(double dot_ce_kl, double norm_kl) {
  if (dot_ce_kl >= 0.0) return Branch::kAligned;
  if (norm_kl < kDegenerateNorm) return Branch::kPassthrough;
  return Branch::kConflict;
}

double trace_angle(const Eigen::Ref<const Vector>& g_ce, const Eigen::Ref<const Vector>& g_kl) {
  if (g_ce.squaredNorm() == 0.0 || g_kl.squaredNorm() == 0.0) return 90.0;
  return angle_deg(g_ce, g_kl);
}

namespace {

// a - lambda * (a . b / ||b||^2) * b
Vector remove_component(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, double a_dot_b,
                        double lambda) {
  return a - (lambda * (a_dot_b / b.squaredNorm())) * b;
}

}  // namespace

SurgeryOutcome prograd(const Eigen::Ref<const Vector>& g_ce, const Eigen::Ref<const Vector>& g_kl, double lambda) {
  const double d = dot(g_ce, g_kl);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("prograd: lambda must lie in [0, 1]");
  SurgeryOutcome out;
  out.dot_ce_kl = d;
  out.angle_deg = trace_angle(g_ce, g_kl);
  out.branch = classify(d, g_kl.norm());
  // lambda == 0 must leave g_ce bitwise intact, signed zeros included.
  const bool project = out.branch == Branch::kConflict && lambda > 0.0;
  out.direction = project ? remove_component(g_ce, g_kl, d, lambda) : Vector(g_ce);
  return out;
}

Vector kd_grad(const GradPair& g) {
  detail::require_same_size(g.g_ce, g.g_kl, "kd_grad");
  return g.g_ce + g.g_kl;
}

Vector gm_grad(const GradPair& g, std::size_t step_index) {
  const double d = dot(g.g_ce, g.g_kl);
  const bool task_step = step_index % 2 == 0;
  const Vector& source = task_step ? g.g_ce : g.g_kl;
  const Vector& other = task_step ? g.g_kl : g.g_ce;
  if (d >= 0.0 || other.norm() < kDegenerateNorm) return source;
  return remove_component(source, other, d, 1.0);
}

SurgeryOutcome apply_rule(const UpdateRule& rule, const GradPair& g, const std::optional<Vector>& g_reg,
                          std::size_t step_index) {
  rule.validate();
  if (rule.tag == RuleTag::kL2Reg && !g_reg) throw ConfigError("apply_rule: L2REG requires a regularizer gradient");
  if (rule.tag != RuleTag::kL2Reg && g_reg) throw ConfigError("apply_rule: regularizer gradient given for non-L2REG rule");
  if (rule.tag == RuleTag::kProGrad) return prograd(g.g_ce, g.g_kl, rule.lambda);

  SurgeryOutcome out;
  out.dot_ce_kl = dot(g.g_ce, g.g_kl);
  out.angle_deg = trace_angle(g.g_ce, g.g_kl);
  out.branch = classify(out.dot_ce_kl, g.g_kl.norm());
  switch (rule.tag) {
    case RuleTag::kCe:
      out.direction = g.g_ce;
      break;
    case RuleTag::kKd:
      out.direction = kd_grad(g);
      break;
    case RuleTag::kGm:
      out.direction = gm_grad(g, step_index);
      break;
    case RuleTag::kL2Reg:
      detail::require_same_size(g.g_ce, *g_reg, "apply_rule");
      out.direction = g.g_ce + *g_reg;
      break;
    case RuleTag::kProGrad:
      break;
  }
  return out;
}

}  // namespace gradalign
