// SPDX-License-Identifier: Apache-2.0
#include "gradalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradalign/errors.hpp"

namespace gradalign {

double harmonic_mean(double a, double b) {
  const double s = a + b;
  return s == 0.0 ? 0.0 : 2.0 * a * b / s;
}

std::optional<double> failure_overlap(std::span<const int> pred_a, std::span<const int> pred_b,
                                      std::span<const int> pred_zs, std::span<const int> truth) {
  const std::size_t n = truth.size();
  if (n == 0) throw DimensionError("failure_overlap: empty inputs");
  if (pred_a.size() != n || pred_b.size() != n || pred_zs.size() != n)
    throw DimensionError("failure_overlap: length mismatch");
  std::size_t failures = 0;
  std::size_t shared = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred_a[i] != truth[i] && pred_b[i] == truth[i]) {
      ++failures;
      if (pred_zs[i] != truth[i]) ++shared;
    }
  }
  if (failures == 0) return std::nullopt;
  return static_cast<double>(shared) / static_cast<double>(failures);
}

MeanCi mean_ci95(std::span<const double> values) {
  MeanCi out;
  out.n = values.size();
  if (out.n == 0) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(out.n);
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double sd = std::sqrt(ss / static_cast<double>(out.n - 1));
  out.half_width = 1.96 * sd / std::sqrt(static_cast<double>(out.n));
  return out;
}

double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  // sum_{k >= wins} C(n, k) / 2^n. The pmf recurrence starting at 2^-n is
  // accurate to a few ulp while 2^-n stays normal; log space beyond that.
  double p = 0.0;
  if (n <= 1000) {
    double term = std::ldexp(1.0, -static_cast<int>(n));
    for (std::size_t k = 0; k <= n; ++k) {
      if (k >= wins) p += term;
      term = term * static_cast<double>(n - k) / static_cast<double>(k + 1);
    }
    return std::min(p, 1.0);
  }
  for (std::size_t k = wins; k <= n; ++k) {
    const double log_term = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
                            std::lgamma(static_cast<double>(n - k) + 1.0) - static_cast<double>(n) * std::log(2.0);
    p += std::exp(log_term);
  }
  return std::min(p, 1.0);
}

}  // namespace gradalign
