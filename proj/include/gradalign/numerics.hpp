// SPDX-License-Identifier: Apache-2.0
//
// Dense primitives shared by every module. Free functions accept any Eigen
// vector expression; the scalar type follows the argument.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "gradalign/errors.hpp"

namespace gradalign {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Probability vector: non-negative entries summing to one.
using ProbVector = Eigen::VectorXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

template <typename A, typename B>
void require_same_size(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

}  // namespace detail

template <typename A, typename B>
typename A::Scalar dot(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  detail::require_same_size(a, b, "dot");
  return a.dot(b);
}

template <typename A>
typename A::Scalar l2_norm(const Eigen::MatrixBase<A>& a) {
  return std::sqrt(a.squaredNorm());
}

/// Cosine similarity clamped to [-1, 1].
template <typename A, typename B>
typename A::Scalar cosine_sim(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  detail::require_same_size(a, b, "cosine_sim");
  const Scalar na = l2_norm(a);
  const Scalar nb = l2_norm(b);
  if (na == Scalar(0) || nb == Scalar(0)) throw DegenerateInputError("cosine_sim: zero vector");
  return std::clamp(a.dot(b) / (na * nb), Scalar(-1), Scalar(1));
}

/// Angle between two nonzero vectors, in degrees.
template <typename A, typename B>
typename A::Scalar angle_deg(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  return std::acos(cosine_sim(a, b)) * (Scalar(180) / std::numbers::pi_v<Scalar>);
}

/// Temperature softmax exp(z_i/tau) / sum_j exp(z_j/tau), max-subtracted.
template <typename A>
VectorX<typename A::Scalar> softmax(const Eigen::MatrixBase<A>& logits, typename A::Scalar tau) {
  using Scalar = typename A::Scalar;
  if (!(tau > Scalar(0))) throw ParameterError("softmax: tau must be positive");
  if (logits.size() == 0) throw DimensionError("softmax: empty logits");
  if (!logits.allFinite()) throw NumericalError("softmax: non-finite logits");
  const Scalar top = logits.maxCoeff();
  VectorX<Scalar> out = ((logits.array() - top) / tau).exp().matrix();
  out /= out.sum();
  return out;
}

/// Central-difference gradient of a scalar function. Throws NumericalError if
/// any evaluation is non-finite.
template <typename F, typename A>
VectorX<typename A::Scalar> finite_diff_grad(F&& f, const Eigen::MatrixBase<A>& x, typename A::Scalar h) {
  using Scalar = typename A::Scalar;
  if (!(h > Scalar(0))) throw ParameterError("finite_diff_grad: h must be positive");
  VectorX<Scalar> probe = x;
  VectorX<Scalar> grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + h;
    const Scalar up = f(probe);
    probe[i] = orig - h;
    const Scalar down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (Scalar(2) * h);
  }
  return grad;
}

/// xoshiro256** seeded through splitmix64. Single-owner; copy to fork a
/// stream at the same position.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform index in [0, n).
  std::size_t below(std::size_t n);

  const std::array<std::uint64_t, 4>& state() const { return state_; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

/// Mix a parent seed and a stream tag into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// n draws of N(mean, sigma^2). Box-Muller over consecutive uniform pairs
/// (u1, u2): u1' = 1 - u1 in (0, 1], r = sqrt(-2 ln u1'), emitting
/// r cos(2 pi u2) then r sin(2 pi u2). An odd trailing sine is discarded.
Vector sample_gaussian(RngStream& rng, Eigen::Index n, double mean, double sigma);

/// Fisher-Yates shuffle of 0..n-1.
std::vector<int> shuffled_indices(RngStream& rng, int n);

}  // namespace gradalign
