// SPDX-License-Identifier: Apache-2.0
#include <numeric>
#include <vector>

#include "gradalign/numerics.hpp"

namespace gradalign {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed ^ (tag * 0xd1b54a32d192ed03ULL);
  splitmix64(x);
  return splitmix64(x);
}

RngStream::RngStream(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

__extension__ typedef unsigned __int128 u128;

std::size_t RngStream::below(std::size_t n) {
  // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
  return static_cast<std::size_t>((static_cast<u128>(next_u64()) * n) >> 64);
}

Vector sample_gaussian(RngStream& rng, Eigen::Index n, double mean, double sigma) {
  if (n < 1) throw ParameterError("sample_gaussian: n must be >= 1");
  if (!(sigma >= 0.0)) throw ParameterError("sample_gaussian: sigma must be non-negative");
  Vector out(n);
  for (Eigen::Index i = 0; i < n; i += 2) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    out[i] = mean + sigma * (r * std::cos(theta));
    if (i + 1 < n) out[i + 1] = mean + sigma * (r * std::sin(theta));
  }
  return out;
}

std::vector<int> shuffled_indices(RngStream& rng, int n) {
  if (n < 0) throw ParameterError("shuffled_indices: negative length");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::size_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace gradalign
